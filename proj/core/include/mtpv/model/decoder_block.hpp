#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mtpv/nn/matrix.hpp"
#include "mtpv/nn/rng.hpp"

namespace mtpv::model {

struct BlockShape {
  std::size_t dim = 0;
  std::size_t n_heads = 0;
  std::size_t ffn_dim = 0;
  double rope_base = 10000.0;
  double norm_epsilon = 1e-5;

  std::size_t head_dim() const noexcept { return dim / n_heads; }
};

// Pre-norm decoder layer: causal multi-head attention with rotary positions,
// then a SwiGLU feed-forward, each added to the residual stream. Linear
// weights use the x·W convention (in × out).
struct BlockWeights {
  nn::Matrix attention_norm;  // 1 × dim
  nn::Matrix wq, wk, wv, wo;  // dim × dim
  nn::Matrix ffn_norm;        // 1 × dim
  nn::Matrix w_gate, w_up;    // dim × ffn
  nn::Matrix w_down;          // ffn × dim

  static BlockWeights zeros(const BlockShape& shape);
  static BlockWeights random(const BlockShape& shape, std::size_t depth, nn::RngStream& rng);

  // f(name, matrix, is_matrix_weight). Norm gains report false so weight
  // decay can skip them.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, F& f) {
    f("attention_norm", s.attention_norm, false);
    f("attention.wq", s.wq, true);
    f("attention.wk", s.wk, true);
    f("attention.wv", s.wv, true);
    f("attention.wo", s.wo, true);
    f("ffn_norm", s.ffn_norm, false);
    f("feed_forward.w_gate", s.w_gate, true);
    f("feed_forward.w_up", s.w_up, true);
    f("feed_forward.w_down", s.w_down, true);
  }
};

// Keys (already rotated) and values for one layer. Rows [0, len) are live;
// capacity is fixed at construction.
struct LayerCache {
  nn::Matrix keys;
  nn::Matrix values;
  std::size_t len = 0;

  LayerCache() = default;
  LayerCache(std::size_t capacity, std::size_t dim);
  std::size_t capacity() const noexcept { return keys.rows(); }
};

// Activations recorded by a training forward pass.
struct BlockTape {
  nn::Matrix x;
  std::vector<double> inv_rms1;
  nn::Matrix a;
  nn::Matrix q;  // rotated
  nn::Matrix k;  // rotated
  nn::Matrix v;
  std::vector<nn::Matrix> probs;  // per head, n × n lower-triangular
  nn::Matrix o;
  nn::Matrix h1;
  std::vector<double> inv_rms2;
  nn::Matrix b;
  nn::Matrix gate;
  nn::Matrix up;
  nn::Matrix act;
};

// Processes rows of x at positions cache.len, cache.len + 1, ... and appends
// their keys/values to the cache. Row i attends to positions 0..cache.len+i.
// When tape is non-null the cache must start empty and activations are kept
// for decoder_backward().
nn::Matrix decoder_forward(const BlockShape& shape, const BlockWeights& weights,
                           const nn::Matrix& x, LayerCache& cache, BlockTape* tape = nullptr);

// Accumulates weight gradients into grads and returns dL/dx.
nn::Matrix decoder_backward(const BlockShape& shape, const BlockWeights& weights,
                            const nn::Matrix& dy, const BlockTape& tape, BlockWeights& grads);

// Row-wise RMS norm of x with gain; inv_rms receives 1/sqrt(mean(x²)+eps).
nn::Matrix rms_norm_rows(const nn::Matrix& x, const nn::Matrix& gain, double epsilon,
                         std::vector<double>* inv_rms = nullptr);

// Backward of rms_norm_rows: returns dx and accumulates into dgain.
nn::Matrix rms_norm_rows_backward(const nn::Matrix& dy, const nn::Matrix& x,
                                  const nn::Matrix& gain, const std::vector<double>& inv_rms,
                                  nn::Matrix& dgain);

}  // namespace mtpv::model
