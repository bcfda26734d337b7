#include "mtpv/decode/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mtpv/error.hpp"
#include "mtpv/nn/ops.hpp"

namespace mtpv::decode {

void SamplerParams::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature))
    throw ConfigError("sampler.temperature must be finite and non-negative");
  if (top_k < 1) throw ConfigError("sampler.top_k must be at least 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("sampler.top_p must lie in (0, 1]");
}

int argmax(std::span<const double> logits) {
  if (logits.empty()) throw SamplingError("argmax of empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<int>(best);
}

std::size_t token_rank(std::span<const double> logits, int token) {
  if (token < 0 || static_cast<std::size_t>(token) >= logits.size())
    throw InputError("token_rank: token " + std::to_string(token) + " outside logits");
  const double v = logits[static_cast<std::size_t>(token)];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (logits[j] > v || (logits[j] == v && j < static_cast<std::size_t>(token))) ++rank;
  }
  return rank;
}

int sample(std::span<const double> logits, const SamplerParams& params, nn::RngStream& rng) {
  if (logits.empty()) throw SamplingError("sample: empty logits");
  for (double v : logits)
    if (!std::isfinite(v)) throw SamplingError("sample: non-finite logit");
  const std::size_t k = std::min(params.top_k, logits.size());
  if (params.temperature == 0.0 || k == 1) return argmax(logits);

  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                    [&](int a, int b) {
                      const double la = logits[static_cast<std::size_t>(a)];
                      const double lb = logits[static_cast<std::size_t>(b)];
                      return la > lb || (la == lb && a < b);
                    });
  order.resize(k);

  std::vector<double> kept(k);
  for (std::size_t i = 0; i < k; ++i) kept[i] = logits[static_cast<std::size_t>(order[i])];

  if (params.top_p < 1.0) {
    const std::vector<double> p = nn::softmax(kept, 1.0);
    double cum = 0.0;
    std::size_t keep = 0;
    while (keep < k) {
      cum += p[keep++];
      if (cum >= params.top_p) break;
    }
    order.resize(keep);
    kept.resize(keep);
  }

  const std::vector<double> probs = nn::softmax(kept, params.temperature);
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return order[i];
  }
  return order.back();
}

}  // namespace mtpv::decode
