#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtpv/decode/sampler.hpp"
#include "mtpv/decode/spec_decoder.hpp"
#include "mtpv/error.hpp"
#include "mtpv/nn/ops.hpp"

using namespace mtpv;
using decode::SamplerParams;

namespace {

std::vector<std::size_t> draw_counts(const std::vector<double>& logits, const SamplerParams& sp,
                                     std::size_t n) {
  nn::RngStream rng(sp.seed, 1);
  std::vector<std::size_t> c(logits.size(), 0);
  for (std::size_t i = 0; i < n; ++i) ++c[static_cast<std::size_t>(decode::sample(logits, sp, rng))];
  return c;
}

// Rank by sorting (logit desc, id asc) and finding the token's position.
std::size_t sort_rank(const std::vector<double>& logits, int token) {
  std::vector<int> ids(logits.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)];
  });
  return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), token) - ids.begin());
}

}  // namespace

TEST(Sampler, FrequenciesMatchSoftmaxWithinThreeSigma) {
  const std::vector<double> logits{1.0, 0.2, -0.5, 2.0, 0.0};
  for (double temp : {1.0, 0.5, 2.0}) {
    SamplerParams sp;
    sp.temperature = temp;
    sp.top_k = logits.size();
    sp.seed = 9;
    const std::size_t n = 100000;
    const auto counts = draw_counts(logits, sp, n);
    const auto p = nn::softmax(logits, temp);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double sigma = std::sqrt(n * p[i] * (1 - p[i]));
      EXPECT_NEAR(static_cast<double>(counts[i]), n * p[i], 3 * sigma) << "T=" << temp << " i=" << i;
    }
  }
}

TEST(Sampler, TopKRestrictsSupportAndRenormalises) {
  const std::vector<double> logits{1.0, 0.2, -0.5, 2.0, 0.0};
  SamplerParams sp;
  sp.top_k = 2;
  const std::size_t n = 100000;
  const auto counts = draw_counts(logits, sp, n);
  EXPECT_EQ(counts[1] + counts[2] + counts[4], 0u);
  const double p3 = 1.0 / (1.0 + std::exp(-1.0));
  EXPECT_NEAR(static_cast<double>(counts[3]), n * p3, 3 * std::sqrt(n * p3 * (1 - p3)));
}

TEST(Sampler, NucleusKeepsSmallestCoveringPrefix) {
  const std::vector<double> logits{std::log(0.5), std::log(0.3), std::log(0.15), std::log(0.05)};
  SamplerParams sp;
  sp.top_k = 4;
  sp.top_p = 0.75;
  const auto counts = draw_counts(logits, sp, 20000);
  EXPECT_GT(counts[1], 0u);
  EXPECT_EQ(counts[2] + counts[3], 0u);
}

TEST(Sampler, GreedyPicksLowestIdOnTies) {
  const std::vector<double> logits{0.5, 3.0, 3.0, -1.0};
  SamplerParams sp;
  sp.temperature = 0.0;
  nn::RngStream rng(1);
  EXPECT_EQ(decode::sample(logits, sp, rng), 1);
  sp.temperature = 1.0;
  sp.top_k = 1;
  EXPECT_EQ(decode::sample(logits, sp, rng), 1);
  EXPECT_EQ(decode::argmax(logits), 1);
}

TEST(Sampler, TopKClampedToVocabulary) {
  const std::vector<double> logits{0.0, 0.0};
  SamplerParams sp;
  sp.top_k = 1000;
  const auto counts = draw_counts(logits, sp, 1000);
  EXPECT_GT(counts[0], 0u);
  EXPECT_GT(counts[1], 0u);
}

TEST(Sampler, RejectsBadInput) {
  SamplerParams sp;
  nn::RngStream rng(1);
  EXPECT_THROW(decode::sample(std::vector<double>{}, sp, rng), SamplingError);
  EXPECT_THROW(decode::sample(std::vector<double>{0.0, NAN}, sp, rng), SamplingError);
  sp.top_k = 0;
  EXPECT_THROW(sp.validate(), ConfigError);
  sp = SamplerParams{};
  sp.top_p = 0.0;
  EXPECT_THROW(sp.validate(), ConfigError);
  sp = SamplerParams{};
  sp.temperature = -1.0;
  EXPECT_THROW(sp.validate(), ConfigError);
}

TEST(Verify, RankMatchesSortOracle) {
  nn::RngStream rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(12);
    // Coarse values force ties.
    for (double& v : logits) v = std::round(rng.normal() * 2.0) / 2.0;
    for (int t = 0; t < 12; ++t) ASSERT_EQ(decode::token_rank(logits, t), sort_rank(logits, t));
  }
}

TEST(Verify, AcceptanceIsMonotoneInThreshold) {
  nn::RngStream rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(10);
    for (double& v : logits) v = rng.normal();
    const int cand = static_cast<int>(rng.uniform_index(10));
    bool prev = false;
    for (std::size_t m = 1; m <= 10; ++m) {
      decode::VerifyParams vp{m, 1, true};
      const bool acc = decode::verify_token(logits, cand, vp, false);
      ASSERT_TRUE(!prev || acc);
      prev = acc;
    }
    ASSERT_TRUE(prev);
  }
}

TEST(Verify, EosUsesItsOwnThreshold) {
  const std::vector<double> logits{3.0, 2.0, 1.0, 0.0};
  decode::VerifyParams vp{4, 1, true};
  EXPECT_TRUE(decode::verify_token(logits, 2, vp, false));
  EXPECT_FALSE(decode::verify_token(logits, 2, vp, true));
  EXPECT_TRUE(decode::verify_token(logits, 0, vp, true));
  vp.eos_topk_v = 5;
  EXPECT_THROW(vp.validate(), ConfigError);
  vp.eos_topk_v = 0;
  EXPECT_THROW(vp.validate(), ConfigError);
}
