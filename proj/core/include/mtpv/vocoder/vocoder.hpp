#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <vector>

#include "mtpv/model/decoder_block.hpp"
#include "mtpv/nn/matrix.hpp"
#include "mtpv/vocoder/stft.hpp"

namespace mtpv::vocoder {

// One residual conv1d layer over frames: y[t] = x[t] + SiLU(b + Σ_j x[t − left + j]·W_j)
// for j in [0, kernel). Frames outside the stream read as zeros.
struct ConvSpec {
  std::size_t kernel = 7;
  std::size_t right = 0;  // lookahead frames

  std::size_t left() const noexcept { return kernel - 1 - right; }
};

struct VocoderConfig {
  std::size_t vocab_size = 66;
  std::size_t dim = 32;
  std::size_t n_blocks = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t max_frames = 4096;
  std::size_t n_fft = 64;
  std::size_t hop = 16;
  std::vector<ConvSpec> conv = {{7, 0}, {7, 2}, {7, 0}};
  std::uint32_t sample_rate = 16000;

  std::size_t total_lookahead() const noexcept;
  std::size_t n_bins() const noexcept { return n_fft / 2 + 1; }
  model::BlockShape block_shape() const;
  // Throws ConfigError.
  void validate() const;
};

struct ConvWeights {
  nn::Matrix weight;  // (kernel·dim) × dim, tap j in rows [j·dim, (j+1)·dim)
  nn::Matrix bias;    // 1 × dim
};

struct VocoderWeights {
  nn::Matrix embedding;  // vocab × dim
  std::vector<model::BlockWeights> blocks;
  std::vector<ConvWeights> conv;
  nn::Matrix mag_head;    // dim × bins, followed by ReLU
  nn::Matrix mag_bias;    // 1 × bins
  nn::Matrix phase_head;  // dim × bins, raw radians
  nn::Matrix phase_bias;  // 1 × bins

  static VocoderWeights zeros(const VocoderConfig& cfg);
  static VocoderWeights random(const VocoderConfig& cfg, std::uint64_t seed);
};

// Per-layer pending input frames. frames[i] holds input frame base + i.
struct ConvBuffer {
  std::deque<std::vector<double>> frames;
  std::size_t base = 0;
  std::size_t available = 0;  // input frames received
  std::size_t produced = 0;   // output frames emitted
};

struct VocoderStreamState {
  std::vector<model::LayerCache> block_caches;
  std::vector<ConvBuffer> conv;
  std::vector<double> overlap;  // n_fft samples starting at the next frame's offset
  std::size_t frames_in = 0;
  std::size_t frames_out = 0;
  std::size_t samples_out = 0;
  bool flushed = false;
};

// Token-to-waveform decoder: embedding, causal decoder blocks, a conv stack
// with bounded right lookahead, a magnitude/phase head, and iSTFT synthesis.
class Vocoder {
 public:
  Vocoder(VocoderConfig cfg, VocoderWeights weights);

  const VocoderConfig& config() const noexcept { return cfg_; }
  const VocoderWeights& weights() const noexcept { return weights_; }
  const Stft& stft() const noexcept { return stft_; }

  // frames × hop samples.
  std::vector<double> offline_decode(std::span<const int> tokens) const;
  std::vector<SpectralFrame> offline_frames(std::span<const int> tokens) const;

  VocoderStreamState start_stream() const;
  // Emits hop samples for every frame whose lookahead is now satisfied.
  std::vector<double> stream_push(VocoderStreamState& state, int token) const;
  // Zero-pads the right edge and drains all withheld frames. A second flush,
  // or a push after flush, throws StateError.
  std::vector<double> stream_flush(VocoderStreamState& state) const;

  // Pipeline stages, usable on their own.
  nn::Matrix embed(std::span<const int> tokens) const;
  nn::Matrix decoder_stack(const nn::Matrix& x) const;
  nn::Matrix conv_layer(std::size_t layer, const nn::Matrix& x) const;
  SpectralFrame head(std::span<const double> h) const;

 private:
  std::vector<double> conv_frame(std::size_t layer, const ConvBuffer& buf, std::size_t t) const;
  void pump(VocoderStreamState& state, bool flushing, std::vector<double>& out) const;
  void emit_frame(VocoderStreamState& state, std::span<const double> h,
                  std::vector<double>& out) const;

  VocoderConfig cfg_;
  VocoderWeights weights_;
  Stft stft_;
};

// CSV "frame,bin,magnitude,phase".
void write_spectral_dump(std::ostream& out, std::span<const SpectralFrame> frames);

}  // namespace mtpv::vocoder
