#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace mtpv::vocoder {

struct SpectralFrame {
  std::vector<double> magnitude;  // n_fft/2 + 1 bins, non-negative
  std::vector<double> phase;      // radians, same length
};

// Periodic Hann: w[n] = 0.5 − 0.5·cos(2πn/N).
std::vector<double> hann_periodic(std::size_t n);

// Overlap sum Σ_k f(w[n + k·hop]) over one hop period, for f = w (power 1) or
// w² (power 2). Throws ConfigError if it varies by more than tolerance.
double overlap_constant(std::span<const double> window, std::size_t hop, int power,
                        double tolerance = 1e-10);

// Real STFT/iSTFT pair with a periodic Hann window. Frame f covers samples
// [f·hop, f·hop + n_fft). Synthesis windows each inverse frame again,
// overlap-adds at hop and divides by the constant Σw², emitting hop samples
// per frame; the final n_fft − hop tail is dropped.
class Stft {
 public:
  // Throws ConfigError if hop > n_fft, n_fft is odd, or the window fails COLA.
  Stft(std::size_t n_fft, std::size_t hop);
  ~Stft();
  Stft(const Stft&) = delete;
  Stft& operator=(const Stft&) = delete;
  Stft(Stft&&) noexcept;
  Stft& operator=(Stft&&) noexcept;

  std::size_t n_fft() const noexcept { return n_fft_; }
  std::size_t hop() const noexcept { return hop_; }
  std::size_t n_bins() const noexcept { return n_fft_ / 2 + 1; }
  const std::vector<double>& window() const noexcept { return window_; }
  double window_square_sum() const noexcept { return wss_; }

  // Frames at every full window position in the signal.
  std::vector<SpectralFrame> analyze(std::span<const double> signal) const;
  // Windowed inverse transform of one frame: n_fft samples, not normalized.
  std::vector<double> frame_segment(const SpectralFrame& frame) const;
  // frames.size() × hop samples.
  std::vector<double> synthesize(std::span<const SpectralFrame> frames) const;

 private:
  struct Plans;
  std::size_t n_fft_;
  std::size_t hop_;
  std::vector<double> window_;
  double wss_;
  std::unique_ptr<Plans> plans_;
};

}  // namespace mtpv::vocoder
