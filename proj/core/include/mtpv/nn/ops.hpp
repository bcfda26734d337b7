#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mtpv/nn/matrix.hpp"

namespace mtpv::nn {

// a·b. Each output element is accumulated over k in ascending order, so the
// result is bit-identical to a naive triple loop and independent of how many
// rows a holds (row i of the product only ever reads row i of a).
Matrix matmul(const Matrix& a, const Matrix& b);
void matmul_into(const Matrix& a, const Matrix& b, Matrix& out);

// out += aᵀ·b without materialising the transpose. Used for weight gradients.
void matmul_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& out);

void add_inplace(Matrix& dst, const Matrix& src);

// Temperature softmax with max subtraction.
std::vector<double> softmax(std::span<const double> logits, double temperature);
void softmax_inplace(std::span<double> values);

// y_i = gain_i · x_i / sqrt(mean(x²) + epsilon); all-zero input maps to zeros.
std::vector<double> rms_norm(std::span<const double> x, std::span<const double> gain,
                             double epsilon);

// Rotary position embedding on adjacent pairs (2i, 2i+1) with angle
// position · base^(-2i/d).
std::pair<std::vector<double>, std::vector<double>> rotary_apply(std::span<const double> q,
                                                                 std::span<const double> k,
                                                                 std::size_t position,
                                                                 double base);

// In-place rotation of one head vector. inverse=true applies the transpose,
// which is what backpropagation through the rotation needs.
void rotate_pairs(std::span<double> v, std::size_t position, double base, bool inverse = false);

// Cosines and sines for one position, shared by every head of that row.
struct RotaryAngles {
  std::vector<double> cos;
  std::vector<double> sin;
};
RotaryAngles rotary_angles(std::size_t head_dim, std::size_t position, double base);
void rotate_pairs(std::span<double> v, const RotaryAngles& angles, bool inverse = false);

double silu(double x);
double silu_grad(double x);

}  // namespace mtpv::nn
