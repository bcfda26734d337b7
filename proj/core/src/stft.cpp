#include "mtpv/vocoder/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include "mtpv/error.hpp"

namespace mtpv::vocoder {

namespace {

// FFTW's planner is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::vector<double> hann_periodic(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  return w;
}

double overlap_constant(std::span<const double> window, std::size_t hop, int power,
                        double tolerance) {
  if (hop == 0 || hop > window.size()) throw ConfigError("overlap_constant: bad hop");
  double lo = INFINITY, hi = -INFINITY, first = 0.0;
  for (std::size_t n = 0; n < hop; ++n) {
    double s = 0.0;
    for (std::size_t i = n; i < window.size(); i += hop) s += power == 2 ? window[i] * window[i] : window[i];
    if (n == 0) first = s;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (hi - lo > tolerance || !(first > 0.0))
    throw ConfigError("window does not satisfy constant overlap-add at hop " +
                      std::to_string(hop));
  return first;
}

struct Stft::Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

Stft::Stft(std::size_t n_fft, std::size_t hop) : n_fft_(n_fft), hop_(hop) {
  if (n_fft == 0 || n_fft % 2 != 0) throw ConfigError("stft: n_fft must be even and positive");
  if (hop == 0 || hop > n_fft) throw ConfigError("stft: need 0 < hop <= n_fft");
  window_ = hann_periodic(n_fft);
  overlap_constant(window_, hop, 1);
  wss_ = overlap_constant(window_, hop, 2);
  plans_ = std::make_unique<Plans>();
  std::vector<double> real(n_fft);
  std::vector<fftw_complex> spec(n_bins());
  std::lock_guard lock(planner_mutex());
  plans_->forward = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), real.data(), spec.data(),
                                         FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans_->inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n_fft), spec.data(), real.data(),
                                         FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_PRESERVE_INPUT);
  if (!plans_->forward || !plans_->inverse) throw ConfigError("stft: FFT planning failed");
}

Stft::~Stft() {
  if (!plans_) return;
  std::lock_guard lock(planner_mutex());
  if (plans_->forward) fftw_destroy_plan(plans_->forward);
  if (plans_->inverse) fftw_destroy_plan(plans_->inverse);
}

Stft::Stft(Stft&&) noexcept = default;
Stft& Stft::operator=(Stft&&) noexcept = default;

std::vector<SpectralFrame> Stft::analyze(std::span<const double> signal) const {
  std::vector<SpectralFrame> frames;
  if (signal.size() < n_fft_) return frames;
  const std::size_t count = (signal.size() - n_fft_) / hop_ + 1;
  std::vector<double> buf(n_fft_);
  std::vector<fftw_complex> spec(n_bins());
  for (std::size_t f = 0; f < count; ++f) {
    for (std::size_t i = 0; i < n_fft_; ++i) buf[i] = signal[f * hop_ + i] * window_[i];
    fftw_execute_dft_r2c(plans_->forward, buf.data(), spec.data());
    SpectralFrame fr;
    fr.magnitude.resize(n_bins());
    fr.phase.resize(n_bins());
    for (std::size_t b = 0; b < n_bins(); ++b) {
      const std::complex<double> z(spec[b][0], spec[b][1]);
      fr.magnitude[b] = std::abs(z);
      fr.phase[b] = std::arg(z);
    }
    frames.push_back(std::move(fr));
  }
  return frames;
}

std::vector<double> Stft::frame_segment(const SpectralFrame& frame) const {
  if (frame.magnitude.size() != n_bins() || frame.phase.size() != n_bins())
    throw ShapeError("stft: frame has wrong number of bins");
  std::vector<fftw_complex> spec(n_bins());
  for (std::size_t b = 0; b < n_bins(); ++b) {
    spec[b][0] = frame.magnitude[b] * std::cos(frame.phase[b]);
    spec[b][1] = frame.magnitude[b] * std::sin(frame.phase[b]);
  }
  std::vector<double> out(n_fft_);
  fftw_execute_dft_c2r(plans_->inverse, spec.data(), out.data());
  const double inv_n = 1.0 / static_cast<double>(n_fft_);
  for (std::size_t i = 0; i < n_fft_; ++i) out[i] = out[i] * inv_n * window_[i];
  return out;
}

std::vector<double> Stft::synthesize(std::span<const SpectralFrame> frames) const {
  const std::size_t count = frames.size();
  std::vector<double> acc(count * hop_ + n_fft_, 0.0);
  for (std::size_t f = 0; f < count; ++f) {
    const std::vector<double> seg = frame_segment(frames[f]);
    for (std::size_t i = 0; i < n_fft_; ++i) acc[f * hop_ + i] += seg[i];
  }
  acc.resize(count * hop_);
  for (double& v : acc) v /= wss_;
  return acc;
}

}  // namespace mtpv::vocoder
