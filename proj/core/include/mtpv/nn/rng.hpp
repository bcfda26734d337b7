#pragma once

#include <cstddef>
#include <cstdint>

namespace mtpv::nn {

// Counter-based generator keyed by (seed, stream id). Draw i of a stream is a
// pure function of (seed, stream, i), so results do not depend on platform,
// standard library, or on how other streams were consumed.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Standard normal via Box-Muller; uses two draws per call.
  double normal();
  // Uniform integer in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);

  // Independent stream derived from this one's key.
  RngStream split(std::uint64_t stream) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

}  // namespace mtpv::nn
