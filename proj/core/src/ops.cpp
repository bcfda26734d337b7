#include "mtpv/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtpv/error.hpp"

namespace mtpv::nn {
namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 256;

// Rows [i0, i0 + R) of a·b. Each output starts at zero and adds a(i,k)·b(k,j)
// for k = 0..K-1, the same sequence a naive loop performs. Rows of b are read
// contiguously and the output block stays resident while k advances.
template <std::size_t R>
void row_block(const double* a, const double* b, double* out, std::size_t K, std::size_t m,
               std::size_t i0) {
  for (std::size_t j0 = 0; j0 < m; j0 += kColBlock) {
    const std::size_t w = std::min(kColBlock, m - j0);
    for (std::size_t r = 0; r < R; ++r) std::fill_n(out + (i0 + r) * m + j0, w, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double* brow = b + k * m + j0;
      for (std::size_t r = 0; r < R; ++r) {
        const double av = a[(i0 + r) * K + k];
        double* orow = out + (i0 + r) * m + j0;
        for (std::size_t j = 0; j < w; ++j) orow[j] += av * brow[j];
      }
    }
  }
}

}  // namespace

void matmul_into(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t n = a.rows(), K = a.cols(), m = b.cols();
  if (out.rows() != n || out.cols() != m) out = Matrix(n, m);
  std::size_t i = 0;
  for (; i + kRowBlock <= n; i += kRowBlock) row_block<kRowBlock>(a.data(), b.data(), out.data(), K, m, i);
  switch (n - i) {
    case 3: row_block<3>(a.data(), b.data(), out.data(), K, m, i); break;
    case 2: row_block<2>(a.data(), b.data(), out.data(), K, m, i); break;
    case 1: row_block<1>(a.data(), b.data(), out.data(), K, m, i); break;
    default: break;
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  matmul_into(a, b, out);
  return out;
}

void matmul_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols())
    throw ShapeError("matmul_tn_accumulate: shape mismatch");
  const std::size_t n = a.rows(), K = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* brow = b.data() + i * m;
    for (std::size_t k = 0; k < K; ++k) {
      const double av = a(i, k);
      if (av == 0.0) continue;
      double* orow = out.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

void add_inplace(Matrix& dst, const Matrix& src) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols())
    throw ShapeError("add_inplace: shape mismatch");
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("softmax: temperature must be positive");
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / temperature);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

void softmax_inplace(std::span<double> values) {
  if (values.empty()) return;
  const double mx = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double& v : values) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : values) v /= sum;
}

std::vector<double> rms_norm(std::span<const double> x, std::span<const double> gain,
                             double epsilon) {
  if (x.size() != gain.size()) throw ShapeError("rms_norm: x and gain differ in length");
  std::vector<double> y(x.size(), 0.0);
  if (x.empty()) return y;
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double denom = std::sqrt(ss / static_cast<double>(x.size()) + epsilon);
  if (denom == 0.0) return y;
  const double inv = 1.0 / denom;
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain[i] * (x[i] * inv);
  return y;
}

RotaryAngles rotary_angles(std::size_t head_dim, std::size_t position, double base) {
  if (head_dim % 2 != 0) throw ShapeError("rotary: vector length must be even");
  RotaryAngles r;
  r.cos.resize(head_dim / 2);
  r.sin.resize(head_dim / 2);
  const double pos = static_cast<double>(position);
  for (std::size_t i = 0; i < head_dim / 2; ++i) {
    const double freq =
        std::pow(base, -static_cast<double>(2 * i) / static_cast<double>(head_dim));
    const double angle = pos * freq;
    r.cos[i] = std::cos(angle);
    r.sin[i] = std::sin(angle);
  }
  return r;
}

void rotate_pairs(std::span<double> v, const RotaryAngles& angles, bool inverse) {
  if (v.size() != 2 * angles.cos.size()) throw ShapeError("rotary: vector length mismatch");
  for (std::size_t i = 0; i < angles.cos.size(); ++i) {
    const double c = angles.cos[i];
    const double s = inverse ? -angles.sin[i] : angles.sin[i];
    const double x0 = v[2 * i], x1 = v[2 * i + 1];
    v[2 * i] = x0 * c - x1 * s;
    v[2 * i + 1] = x0 * s + x1 * c;
  }
}

void rotate_pairs(std::span<double> v, std::size_t position, double base, bool inverse) {
  if (v.size() % 2 != 0) throw ShapeError("rotary: vector length must be even");
  if (position == 0) return;
  rotate_pairs(v, rotary_angles(v.size(), position, base), inverse);
}

std::pair<std::vector<double>, std::vector<double>> rotary_apply(std::span<const double> q,
                                                                 std::span<const double> k,
                                                                 std::size_t position,
                                                                 double base) {
  if (q.size() % 2 != 0 || k.size() % 2 != 0)
    throw ShapeError("rotary: vector length must be even");
  std::vector<double> qr(q.begin(), q.end()), kr(k.begin(), k.end());
  rotate_pairs(qr, position, base);
  rotate_pairs(kr, position, base);
  return {std::move(qr), std::move(kr)};
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace mtpv::nn
