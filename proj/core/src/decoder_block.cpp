#include "mtpv/model/decoder_block.hpp"

#include <cmath>

#include "mtpv/error.hpp"
#include "mtpv/nn/ops.hpp"

namespace mtpv::model {

using nn::Matrix;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, double stddev, nn::RngStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = stddev * rng.normal();
  nn::round_to_storage(m);
  return m;
}

}  // namespace

BlockWeights BlockWeights::zeros(const BlockShape& s) {
  BlockWeights w;
  w.attention_norm = Matrix(1, s.dim);
  w.wq = Matrix(s.dim, s.dim);
  w.wk = Matrix(s.dim, s.dim);
  w.wv = Matrix(s.dim, s.dim);
  w.wo = Matrix(s.dim, s.dim);
  w.ffn_norm = Matrix(1, s.dim);
  w.w_gate = Matrix(s.dim, s.ffn_dim);
  w.w_up = Matrix(s.dim, s.ffn_dim);
  w.w_down = Matrix(s.ffn_dim, s.dim);
  return w;
}

BlockWeights BlockWeights::random(const BlockShape& s, std::size_t depth, nn::RngStream& rng) {
  const double in_std = 1.0 / std::sqrt(static_cast<double>(s.dim));
  const double ffn_std = 1.0 / std::sqrt(static_cast<double>(s.ffn_dim));
  // Residual branch outputs are scaled down with depth so the stream stays O(1).
  const double out_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(depth));
  BlockWeights w;
  w.attention_norm = Matrix(1, s.dim, 1.0);
  w.wq = random_matrix(s.dim, s.dim, in_std, rng);
  w.wk = random_matrix(s.dim, s.dim, in_std, rng);
  w.wv = random_matrix(s.dim, s.dim, in_std, rng);
  w.wo = random_matrix(s.dim, s.dim, in_std * out_scale, rng);
  w.ffn_norm = Matrix(1, s.dim, 1.0);
  w.w_gate = random_matrix(s.dim, s.ffn_dim, in_std, rng);
  w.w_up = random_matrix(s.dim, s.ffn_dim, in_std, rng);
  w.w_down = random_matrix(s.ffn_dim, s.dim, ffn_std * out_scale, rng);
  return w;
}

LayerCache::LayerCache(std::size_t capacity, std::size_t dim)
    : keys(capacity, dim), values(capacity, dim), len(0) {}

Matrix rms_norm_rows(const Matrix& x, const Matrix& gain, double epsilon,
                     std::vector<double>* inv_rms) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.size() != d) throw ShapeError("rms_norm_rows: gain length mismatch");
  Matrix y(n, d);
  if (inv_rms) inv_rms->assign(n, 0.0);
  const double* g = gain.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data() + i * d;
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += xr[j] * xr[j];
    const double denom = std::sqrt(ss / static_cast<double>(d) + epsilon);
    const double inv = denom == 0.0 ? 0.0 : 1.0 / denom;
    if (inv_rms) (*inv_rms)[i] = inv;
    double* yr = y.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) yr[j] = g[j] * (xr[j] * inv);
  }
  return y;
}

Matrix rms_norm_rows_backward(const Matrix& dy, const Matrix& x, const Matrix& gain,
                              const std::vector<double>& inv_rms, Matrix& dgain) {
  const std::size_t n = x.rows(), d = x.cols();
  Matrix dx(n, d);
  const double* g = gain.data();
  double* dg = dgain.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = inv_rms[i];
    const double* xr = x.data() + i * d;
    const double* dyr = dy.data() + i * d;
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += g[j] * dyr[j] * xr[j];
      dg[j] += dyr[j] * xr[j] * r;
    }
    const double coef = r * r * r * dot / static_cast<double>(d);
    double* dxr = dx.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) dxr[j] = r * g[j] * dyr[j] - xr[j] * coef;
  }
  return dx;
}

Matrix decoder_forward(const BlockShape& shape, const BlockWeights& w, const Matrix& x,
                       LayerCache& cache, BlockTape* tape) {
  if (shape.n_heads == 0 || shape.dim % shape.n_heads != 0 || shape.head_dim() % 2 != 0)
    throw ShapeError("decoder block: dim must split into even-sized heads");
  const std::size_t n = x.rows();
  const std::size_t d = shape.dim;
  const std::size_t hd = shape.head_dim();
  const std::size_t n_heads = shape.n_heads;
  if (x.cols() != d) throw ShapeError("decoder block: input width mismatch");
  if (cache.keys.cols() != d) throw ShapeError("decoder block: cache width mismatch");
  const std::size_t p0 = cache.len;
  if (p0 + n > cache.capacity())
    throw CapacityError("decoder block: sequence exceeds cache capacity " +
                        std::to_string(cache.capacity()));
  if (tape && p0 != 0) throw ContractError("decoder block: training forward needs an empty cache");
  if (n == 0) return Matrix(0, d);

  std::vector<double> inv1;
  Matrix a = rms_norm_rows(x, w.attention_norm, shape.norm_epsilon, tape ? &inv1 : nullptr);
  Matrix q = nn::matmul(a, w.wq);
  Matrix k = nn::matmul(a, w.wk);
  Matrix v = nn::matmul(a, w.wv);
  for (std::size_t i = 0; i < n; ++i) {
    const auto angles = nn::rotary_angles(hd, p0 + i, shape.rope_base);
    for (std::size_t h = 0; h < n_heads; ++h) {
      nn::rotate_pairs(q.row(i).subspan(h * hd, hd), angles);
      nn::rotate_pairs(k.row(i).subspan(h * hd, hd), angles);
    }
    std::copy(k.row(i).begin(), k.row(i).end(), cache.keys.row(p0 + i).begin());
    std::copy(v.row(i).begin(), v.row(i).end(), cache.values.row(p0 + i).begin());
  }
  cache.len = p0 + n;

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Matrix o(n, d);
  std::vector<double> scores(p0 + n);
  std::vector<Matrix> probs;
  if (tape) probs.assign(n_heads, Matrix(n, n));
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t p = p0 + i;
      const double* qh = q.data() + i * d + h * hd;
      for (std::size_t j = 0; j <= p; ++j) {
        const double* kh = cache.keys.data() + j * d + h * hd;
        double s = 0.0;
        for (std::size_t t = 0; t < hd; ++t) s += qh[t] * kh[t];
        scores[j] = s * scale;
      }
      nn::softmax_inplace(std::span<double>(scores.data(), p + 1));
      if (tape)
        for (std::size_t j = 0; j <= p; ++j) probs[h](i, j) = scores[j];
      double* oh = o.data() + i * d + h * hd;
      for (std::size_t j = 0; j <= p; ++j) {
        const double pj = scores[j];
        const double* vh = cache.values.data() + j * d + h * hd;
        for (std::size_t t = 0; t < hd; ++t) oh[t] += pj * vh[t];
      }
    }
  }

  Matrix h1 = nn::matmul(o, w.wo);
  nn::add_inplace(h1, x);
  std::vector<double> inv2;
  Matrix b = rms_norm_rows(h1, w.ffn_norm, shape.norm_epsilon, tape ? &inv2 : nullptr);
  Matrix gate = nn::matmul(b, w.w_gate);
  Matrix up = nn::matmul(b, w.w_up);
  Matrix act(n, shape.ffn_dim);
  for (std::size_t i = 0; i < act.size(); ++i)
    act.data()[i] = nn::silu(gate.data()[i]) * up.data()[i];
  Matrix y = nn::matmul(act, w.w_down);
  nn::add_inplace(y, h1);

  if (tape) {
    tape->x = x;
    tape->inv_rms1 = std::move(inv1);
    tape->a = std::move(a);
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->probs = std::move(probs);
    tape->o = std::move(o);
    tape->h1 = std::move(h1);
    tape->inv_rms2 = std::move(inv2);
    tape->b = std::move(b);
    tape->gate = std::move(gate);
    tape->up = std::move(up);
    tape->act = std::move(act);
  }
  return y;
}

Matrix decoder_backward(const BlockShape& shape, const BlockWeights& w, const Matrix& dy,
                        const BlockTape& t, BlockWeights& g) {
  const std::size_t n = dy.rows();
  const std::size_t d = shape.dim;
  const std::size_t hd = shape.head_dim();
  const std::size_t n_heads = shape.n_heads;
  const std::size_t f = shape.ffn_dim;

  // Feed-forward branch.
  nn::matmul_tn_accumulate(t.act, dy, g.w_down);
  Matrix dact = nn::matmul(dy, nn::transpose(w.w_down));
  Matrix dgate(n, f), dup(n, f);
  for (std::size_t i = 0; i < n * f; ++i) {
    const double gv = t.gate.data()[i];
    dgate.data()[i] = dact.data()[i] * t.up.data()[i] * nn::silu_grad(gv);
    dup.data()[i] = dact.data()[i] * nn::silu(gv);
  }
  nn::matmul_tn_accumulate(t.b, dgate, g.w_gate);
  nn::matmul_tn_accumulate(t.b, dup, g.w_up);
  Matrix db = nn::matmul(dgate, nn::transpose(w.w_gate));
  nn::add_inplace(db, nn::matmul(dup, nn::transpose(w.w_up)));
  Matrix dh1 = rms_norm_rows_backward(db, t.h1, w.ffn_norm, t.inv_rms2, g.ffn_norm);
  nn::add_inplace(dh1, dy);

  // Attention branch.
  nn::matmul_tn_accumulate(t.o, dh1, g.wo);
  Matrix dout = nn::matmul(dh1, nn::transpose(w.wo));
  Matrix dq(n, d), dk(n, d), dv(n, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> dp(n), ds(n);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Matrix& probs = t.probs[h];
    for (std::size_t i = 0; i < n; ++i) {
      const double* doh = dout.data() + i * d + h * hd;
      double weighted = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* vh = t.v.data() + j * d + h * hd;
        double s = 0.0;
        for (std::size_t u = 0; u < hd; ++u) s += doh[u] * vh[u];
        dp[j] = s;
        weighted += probs(i, j) * s;
        double* dvh = dv.data() + j * d + h * hd;
        const double pij = probs(i, j);
        for (std::size_t u = 0; u < hd; ++u) dvh[u] += pij * doh[u];
      }
      const double* qh = t.q.data() + i * d + h * hd;
      double* dqh = dq.data() + i * d + h * hd;
      for (std::size_t j = 0; j <= i; ++j) {
        ds[j] = probs(i, j) * (dp[j] - weighted) * scale;
        const double* kh = t.k.data() + j * d + h * hd;
        double* dkh = dk.data() + j * d + h * hd;
        for (std::size_t u = 0; u < hd; ++u) {
          dqh[u] += ds[j] * kh[u];
          dkh[u] += ds[j] * qh[u];
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto angles = nn::rotary_angles(hd, i, shape.rope_base);
    for (std::size_t h = 0; h < n_heads; ++h) {
      nn::rotate_pairs(dq.row(i).subspan(h * hd, hd), angles, true);
      nn::rotate_pairs(dk.row(i).subspan(h * hd, hd), angles, true);
    }
  }
  nn::matmul_tn_accumulate(t.a, dq, g.wq);
  nn::matmul_tn_accumulate(t.a, dk, g.wk);
  nn::matmul_tn_accumulate(t.a, dv, g.wv);
  Matrix da = nn::matmul(dq, nn::transpose(w.wq));
  nn::add_inplace(da, nn::matmul(dk, nn::transpose(w.wk)));
  nn::add_inplace(da, nn::matmul(dv, nn::transpose(w.wv)));
  Matrix dx = rms_norm_rows_backward(da, t.x, w.attention_norm, t.inv_rms1, g.attention_norm);
  nn::add_inplace(dx, dh1);
  return dx;
}

}  // namespace mtpv::model
