#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "mtpv/nn/rng.hpp"

namespace mtpv::decode {

struct SamplerParams {
  // 0 selects greedy argmax (lowest id on ties).
  double temperature = 1.0;
  // Clamped to the vocabulary size.
  std::size_t top_k = 16;
  // Nucleus cutoff in (0, 1]; 1 disables it.
  double top_p = 1.0;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Filters to the top_k logits, applies the nucleus cutoff, then draws from the
// temperature softmax of what remains.
int sample(std::span<const double> logits, const SamplerParams& params, nn::RngStream& rng);

// Largest logit, lowest id on ties.
int argmax(std::span<const double> logits);

// Number of tokens ranked strictly ahead of `token`: a higher logit, or an
// equal logit and a lower id. Rank 0 is the argmax.
std::size_t token_rank(std::span<const double> logits, int token);

}  // namespace mtpv::decode
