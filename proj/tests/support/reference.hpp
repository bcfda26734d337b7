#pragma once

// Naive reference implementations used as test oracles. Nothing here is
// shared with the library's kernels: loops are written out directly, rotary
// positions use complex multiplication, and every position is recomputed
// from scratch.

#include <cmath>
#include <complex>
#include <vector>

#include "mtpv/model/backbone.hpp"
#include "mtpv/mtp/cascade.hpp"

namespace mtpv::testkit {

using Vec = std::vector<double>;
using Rows = std::vector<Vec>;

inline Vec ref_linear(const Vec& x, const nn::Matrix& w) {
  Vec y(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) s += x[i] * w(i, j);
    y[j] = s;
  }
  return y;
}

inline Vec ref_rms_norm(const Vec& x, const nn::Matrix& gain, double eps) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double r = 1.0 / std::sqrt(ms + eps);
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * r * gain(0, i);
  return y;
}

inline void ref_rope(Vec& v, std::size_t offset, std::size_t hd, std::size_t pos, double base) {
  for (std::size_t i = 0; i < hd / 2; ++i) {
    const double theta =
        static_cast<double>(pos) * std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
    const std::complex<double> z(v[offset + 2 * i], v[offset + 2 * i + 1]);
    const std::complex<double> r = z * std::polar(1.0, theta);
    v[offset + 2 * i] = r.real();
    v[offset + 2 * i + 1] = r.imag();
  }
}

inline double ref_silu(double x) { return x / (1.0 + std::exp(-x)); }

// One pre-norm decoder block over a whole sequence, position by position.
inline Rows ref_block(const model::BlockShape& shape, const model::BlockWeights& w, const Rows& x) {
  const std::size_t n = x.size(), d = shape.dim, nh = shape.n_heads, hd = d / nh;
  Rows q(n), k(n), v(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Vec a = ref_rms_norm(x[t], w.attention_norm, shape.norm_epsilon);
    q[t] = ref_linear(a, w.wq);
    k[t] = ref_linear(a, w.wk);
    v[t] = ref_linear(a, w.wv);
    for (std::size_t h = 0; h < nh; ++h) {
      ref_rope(q[t], h * hd, hd, t, shape.rope_base);
      ref_rope(k[t], h * hd, hd, t, shape.rope_base);
    }
  }
  Rows out(n);
  for (std::size_t t = 0; t < n; ++t) {
    Vec o(d, 0.0);
    for (std::size_t h = 0; h < nh; ++h) {
      Vec s(t + 1);
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= t; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < hd; ++c) dot += q[t][h * hd + c] * k[j][h * hd + c];
        s[j] = dot / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (double& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j <= t; ++j)
        for (std::size_t c = 0; c < hd; ++c) o[h * hd + c] += s[j] / z * v[j][h * hd + c];
    }
    const Vec attn = ref_linear(o, w.wo);
    Vec h1(d);
    for (std::size_t i = 0; i < d; ++i) h1[i] = x[t][i] + attn[i];
    const Vec b = ref_rms_norm(h1, w.ffn_norm, shape.norm_epsilon);
    const Vec g = ref_linear(b, w.w_gate);
    const Vec u = ref_linear(b, w.w_up);
    Vec act(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) act[i] = ref_silu(g[i]) * u[i];
    const Vec f = ref_linear(act, w.w_down);
    out[t].resize(d);
    for (std::size_t i = 0; i < d; ++i) out[t][i] = h1[i] + f[i];
  }
  return out;
}

struct RefOutput {
  Rows hidden;
  Rows logits;
};

inline RefOutput ref_backbone(const model::Backbone& bb, const std::vector<int>& tokens) {
  const auto& w = bb.weights();
  Rows x;
  for (int t : tokens) {
    const auto r = w.embedding.row(static_cast<std::size_t>(t));
    x.emplace_back(r.begin(), r.end());
  }
  for (const auto& layer : w.layers) x = ref_block(bb.block_shape(), layer, x);
  RefOutput out;
  for (const auto& row : x) {
    out.hidden.push_back(ref_rms_norm(row, w.final_norm, bb.block_shape().norm_epsilon));
    out.logits.push_back(ref_linear(out.hidden.back(), w.lm_head));
  }
  return out;
}

// Level-k hidden states: projector then block, composed by hand.
inline Rows ref_mtp(const mtp::MtpCascade& c, std::size_t k, const Rows& prev) {
  const auto& m = c.modules()[k - 1];
  Rows projected;
  for (const auto& r : prev) projected.push_back(ref_linear(r, m.projector));
  return ref_block(c.block_shape(), m.block, projected);
}

inline Rows to_rows(const nn::Matrix& m) {
  Rows r;
  for (std::size_t i = 0; i < m.rows(); ++i) r.emplace_back(m.row(i).begin(), m.row(i).end());
  return r;
}

inline nn::Matrix to_matrix(const Rows& r) {
  nn::Matrix m(r.size(), r.empty() ? 0 : r.front().size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j) m(i, j) = r[i][j];
  return m;
}

// max |a − b| / max(1, |b|) over all entries.
inline double max_rel_diff(const Rows& a, const Rows& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j)
      worst = std::max(worst, std::abs(a[i][j] - b[i][j]) / std::max(1.0, std::abs(b[i][j])));
  return worst;
}

inline double max_rel_diff(const nn::Matrix& a, const nn::Matrix& b) {
  return max_rel_diff(to_rows(a), to_rows(b));
}

}  // namespace mtpv::testkit
