#include "mtpv/harness/quality.hpp"

#include <cmath>

#include "mtpv/error.hpp"

namespace mtpv::harness {

QualityResult quality_proxy(const std::vector<TokenSequence>& sequences, const MarkovSource& source,
                            std::size_t score_from, double floor) {
  const std::size_t c = source.spec().content_vocab();
  const int eos = source.spec().eos_id();
  QualityResult r;
  double sum = 0.0;
  const std::size_t order = source.spec().order;
  for (const auto& seq : sequences) {
    // Index of the most recent PAD; the generator cannot continue past one.
    long last_pad = -1;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const int t = seq[i];
      if (t < 0 || static_cast<std::size_t>(t) >= source.spec().vocab_size)
        throw InputError("quality_proxy: token " + std::to_string(t) + " is outside the vocabulary");
      if (t == eos && i + 1 != seq.size())
        throw InputError("quality_proxy: EOS before the end of a sequence");
      const bool off_support =
          last_pad >= 0 && static_cast<std::size_t>(last_pad) + order >= i;
      if (static_cast<std::size_t>(t) > c) last_pad = static_cast<long>(i);
      if (i < score_from) continue;
      // PAD is in the vocabulary but never generated, and a context holding
      // one has no successor distribution.
      double prob = 0.0;
      if (static_cast<std::size_t>(t) <= c && !off_support)
        prob = source.next_distribution(std::span<const int>(seq.data(), i))[static_cast<std::size_t>(t)];
      if (prob < floor) {
        prob = floor;
        ++r.clipped;
      }
      sum -= std::log(prob);
      ++r.tokens;
    }
  }
  r.mean_nll = r.tokens ? sum / static_cast<double>(r.tokens) : 0.0;
  return r;
}

}  // namespace mtpv::harness
