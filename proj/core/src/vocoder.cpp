#include "mtpv/vocoder/vocoder.hpp"

#include <cmath>
#include <ostream>

#include "mtpv/error.hpp"
#include "mtpv/nn/ops.hpp"
#include "mtpv/nn/rng.hpp"

namespace mtpv::vocoder {

using nn::Matrix;

std::size_t VocoderConfig::total_lookahead() const noexcept {
  std::size_t s = 0;
  for (const auto& c : conv) s += c.right;
  return s;
}

model::BlockShape VocoderConfig::block_shape() const {
  return model::BlockShape{dim, n_heads, ffn_dim, 10000.0, 1e-5};
}

void VocoderConfig::validate() const {
  if (vocab_size == 0 || dim == 0 || n_heads == 0 || ffn_dim == 0 || max_frames == 0)
    throw ConfigError("vocoder: sizes must be positive");
  if (dim % n_heads != 0 || (dim / n_heads) % 2 != 0)
    throw ConfigError("vocoder: dim must split into even-sized heads");
  for (const auto& c : conv)
    if (c.kernel == 0 || c.right >= c.kernel)
      throw ConfigError("vocoder: conv lookahead must be smaller than the kernel");
  Stft check(n_fft, hop);
}

VocoderWeights VocoderWeights::zeros(const VocoderConfig& cfg) {
  VocoderWeights w;
  w.embedding = Matrix(cfg.vocab_size, cfg.dim);
  w.blocks.assign(cfg.n_blocks, model::BlockWeights::zeros(cfg.block_shape()));
  for (const auto& c : cfg.conv) w.conv.push_back({Matrix(c.kernel * cfg.dim, cfg.dim), Matrix(1, cfg.dim)});
  w.mag_head = Matrix(cfg.dim, cfg.n_bins());
  w.mag_bias = Matrix(1, cfg.n_bins());
  w.phase_head = Matrix(cfg.dim, cfg.n_bins());
  w.phase_bias = Matrix(1, cfg.n_bins());
  return w;
}

VocoderWeights VocoderWeights::random(const VocoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  nn::RngStream rng(seed, 0x70c0de);
  VocoderWeights w = zeros(cfg);
  for (double& v : w.embedding.values()) v = rng.normal();
  for (auto& b : w.blocks) b = model::BlockWeights::random(cfg.block_shape(), cfg.n_blocks, rng);
  for (std::size_t l = 0; l < w.conv.size(); ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg.conv[l].kernel * cfg.dim));
    for (double& v : w.conv[l].weight.values()) v = s * rng.normal();
    for (double& v : w.conv[l].bias.values()) v = 0.1 * rng.normal();
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  for (double& v : w.mag_head.values()) v = s * rng.normal();
  for (double& v : w.mag_bias.values()) v = 0.1 * rng.normal();
  for (double& v : w.phase_head.values()) v = s * rng.normal();
  for (double& v : w.phase_bias.values()) v = rng.normal();
  return w;
}

Vocoder::Vocoder(VocoderConfig cfg, VocoderWeights weights)
    : cfg_(std::move(cfg)), weights_(std::move(weights)), stft_(cfg_.n_fft, cfg_.hop) {
  cfg_.validate();
  if (weights_.embedding.rows() != cfg_.vocab_size || weights_.embedding.cols() != cfg_.dim ||
      weights_.blocks.size() != cfg_.n_blocks || weights_.conv.size() != cfg_.conv.size() ||
      weights_.mag_head.rows() != cfg_.dim || weights_.mag_head.cols() != cfg_.n_bins() ||
      weights_.phase_head.rows() != cfg_.dim || weights_.phase_head.cols() != cfg_.n_bins())
    throw ShapeError("vocoder weights do not match the configuration");
  for (std::size_t l = 0; l < cfg_.conv.size(); ++l)
    if (weights_.conv[l].weight.rows() != cfg_.conv[l].kernel * cfg_.dim ||
        weights_.conv[l].weight.cols() != cfg_.dim)
      throw ShapeError("vocoder conv weights do not match the configuration");
}

namespace {

// input(τ) returns the frame pointer or nullptr for zero padding.
template <typename Input>
std::vector<double> conv_output(const ConvWeights& w, const ConvSpec& spec, std::size_t dim,
                                std::size_t t, Input&& input) {
  std::vector<double> acc(w.bias.values().begin(), w.bias.values().end());
  for (std::size_t j = 0; j < spec.kernel; ++j) {
    const long tau = static_cast<long>(t) - static_cast<long>(spec.left()) + static_cast<long>(j);
    const double* x = tau < 0 ? nullptr : input(static_cast<std::size_t>(tau));
    if (!x) continue;
    for (std::size_t c = 0; c < dim; ++c) {
      const double xc = x[c];
      const double* wr = w.weight.data() + (j * dim + c) * dim;
      for (std::size_t o = 0; o < dim; ++o) acc[o] += xc * wr[o];
    }
  }
  const double* self = input(t);
  for (std::size_t o = 0; o < dim; ++o) acc[o] = self[o] + nn::silu(acc[o]);
  return acc;
}

}  // namespace

Matrix Vocoder::embed(std::span<const int> tokens) const {
  Matrix x(tokens.size(), cfg_.dim);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= cfg_.vocab_size)
      throw InputError("vocoder: token " + std::to_string(tokens[i]) + " outside vocabulary");
    const auto r = weights_.embedding.row(static_cast<std::size_t>(tokens[i]));
    std::copy(r.begin(), r.end(), x.row(i).begin());
  }
  return x;
}

Matrix Vocoder::decoder_stack(const Matrix& x) const {
  if (x.rows() > cfg_.max_frames) throw CapacityError("vocoder: stream exceeds max_frames");
  Matrix h = x;
  for (const auto& b : weights_.blocks) {
    model::LayerCache cache(std::max<std::size_t>(x.rows(), 1), cfg_.dim);
    h = model::decoder_forward(cfg_.block_shape(), b, h, cache);
  }
  return h;
}

Matrix Vocoder::conv_layer(std::size_t layer, const Matrix& x) const {
  Matrix y(x.rows(), cfg_.dim);
  auto input = [&](std::size_t tau) -> const double* {
    return tau < x.rows() ? x.data() + tau * cfg_.dim : nullptr;
  };
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const auto r = conv_output(weights_.conv[layer], cfg_.conv[layer], cfg_.dim, t, input);
    std::copy(r.begin(), r.end(), y.row(t).begin());
  }
  return y;
}

SpectralFrame Vocoder::head(std::span<const double> h) const {
  const std::size_t bins = cfg_.n_bins();
  SpectralFrame f;
  f.magnitude.assign(weights_.mag_bias.values().begin(), weights_.mag_bias.values().end());
  f.phase.assign(weights_.phase_bias.values().begin(), weights_.phase_bias.values().end());
  for (std::size_t c = 0; c < cfg_.dim; ++c) {
    const double* wm = weights_.mag_head.data() + c * bins;
    const double* wp = weights_.phase_head.data() + c * bins;
    for (std::size_t b = 0; b < bins; ++b) {
      f.magnitude[b] += h[c] * wm[b];
      f.phase[b] += h[c] * wp[b];
    }
  }
  for (double& m : f.magnitude) m = std::max(m, 0.0);
  return f;
}

std::vector<SpectralFrame> Vocoder::offline_frames(std::span<const int> tokens) const {
  Matrix h = decoder_stack(embed(tokens));
  for (std::size_t l = 0; l < cfg_.conv.size(); ++l) h = conv_layer(l, h);
  std::vector<SpectralFrame> frames;
  frames.reserve(h.rows());
  for (std::size_t t = 0; t < h.rows(); ++t) frames.push_back(head(h.row(t)));
  return frames;
}

std::vector<double> Vocoder::offline_decode(std::span<const int> tokens) const {
  return stft_.synthesize(offline_frames(tokens));
}

VocoderStreamState Vocoder::start_stream() const {
  VocoderStreamState s;
  s.block_caches.assign(cfg_.n_blocks, model::LayerCache(cfg_.max_frames, cfg_.dim));
  s.conv.resize(cfg_.conv.size());
  s.overlap.assign(cfg_.n_fft, 0.0);
  return s;
}

std::vector<double> Vocoder::conv_frame(std::size_t layer, const ConvBuffer& buf,
                                        std::size_t t) const {
  auto input = [&](std::size_t tau) -> const double* {
    if (tau >= buf.available) return nullptr;
    return buf.frames[tau - buf.base].data();
  };
  return conv_output(weights_.conv[layer], cfg_.conv[layer], cfg_.dim, t, input);
}

void Vocoder::emit_frame(VocoderStreamState& s, std::span<const double> h,
                         std::vector<double>& out) const {
  const std::vector<double> seg = stft_.frame_segment(head(h));
  const std::size_t n = cfg_.n_fft, hop = cfg_.hop;
  for (std::size_t i = 0; i < n; ++i) s.overlap[i] += seg[i];
  for (std::size_t i = 0; i < hop; ++i) out.push_back(s.overlap[i] / stft_.window_square_sum());
  std::copy(s.overlap.begin() + static_cast<long>(hop), s.overlap.end(), s.overlap.begin());
  std::fill(s.overlap.end() - static_cast<long>(hop), s.overlap.end(), 0.0);
  ++s.frames_out;
  s.samples_out += hop;
}

void Vocoder::pump(VocoderStreamState& s, bool flushing, std::vector<double>& out) const {
  const std::size_t n_layers = cfg_.conv.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    ConvBuffer& buf = s.conv[l];
    const ConvSpec& spec = cfg_.conv[l];
    while (buf.produced < buf.available &&
           (flushing || buf.produced + spec.right < buf.available)) {
      std::vector<double> y = conv_frame(l, buf, buf.produced);
      ++buf.produced;
      // Inputs older than produced − left are no longer needed.
      while (!buf.frames.empty() && buf.base + spec.left() < buf.produced) {
        buf.frames.pop_front();
        ++buf.base;
      }
      if (l + 1 < n_layers) {
        s.conv[l + 1].frames.push_back(std::move(y));
        ++s.conv[l + 1].available;
      } else {
        emit_frame(s, y, out);
      }
    }
  }
}

std::vector<double> Vocoder::stream_push(VocoderStreamState& s, int token) const {
  if (s.flushed) throw StateError("vocoder: push after flush");
  if (s.frames_in >= cfg_.max_frames) throw CapacityError("vocoder: stream exceeds max_frames");
  const int tok[1] = {token};
  Matrix h = embed(tok);
  for (std::size_t b = 0; b < cfg_.n_blocks; ++b)
    h = model::decoder_forward(cfg_.block_shape(), weights_.blocks[b], h, s.block_caches[b]);
  ++s.frames_in;
  std::vector<double> out;
  if (cfg_.conv.empty()) {
    emit_frame(s, h.row(0), out);
    return out;
  }
  s.conv[0].frames.emplace_back(h.row(0).begin(), h.row(0).end());
  ++s.conv[0].available;
  pump(s, false, out);
  return out;
}

std::vector<double> Vocoder::stream_flush(VocoderStreamState& s) const {
  if (s.flushed) throw StateError("vocoder: stream already flushed");
  s.flushed = true;
  std::vector<double> out;
  if (!cfg_.conv.empty()) pump(s, true, out);
  return out;
}

void write_spectral_dump(std::ostream& out, std::span<const SpectralFrame> frames) {
  out << "frame,bin,magnitude,phase\n";
  out.precision(17);
  for (std::size_t f = 0; f < frames.size(); ++f)
    for (std::size_t b = 0; b < frames[f].magnitude.size(); ++b)
      out << f << ',' << b << ',' << frames[f].magnitude[b] << ',' << frames[f].phase[b] << '\n';
}

}  // namespace mtpv::vocoder
