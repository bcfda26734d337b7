#pragma once

#include <cstddef>
#include <vector>

#include "mtpv/harness/corpus.hpp"

namespace mtpv::harness {

struct QualityResult {
  double mean_nll = 0.0;
  std::size_t tokens = 0;
  // Tokens the generator gives zero probability (including PAD); scored at
  // -log(floor).
  std::size_t clipped = 0;
};

// Mean per-token negative log-likelihood under the true generator of tokens
// at positions >= score_from in each sequence. Throws InputError for ids
// outside the vocabulary and for an EOS that is not the last token.
QualityResult quality_proxy(const std::vector<TokenSequence>& sequences, const MarkovSource& source,
                            std::size_t score_from = 0, double floor = 1e-12);

}  // namespace mtpv::harness
