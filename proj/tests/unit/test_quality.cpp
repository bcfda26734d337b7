#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mtpv/error.hpp"
#include "mtpv/harness/quality.hpp"

using namespace mtpv;
using harness::CorpusSpec;
using harness::TransitionKind;

namespace {

CorpusSpec spec(TransitionKind kind, std::size_t order) {
  CorpusSpec s;
  s.vocab_size = 10;
  s.order = order;
  s.n_sequences = 100;
  s.min_len = 30;
  s.max_len = 40;
  s.kind = kind;
  return s;
}

}  // namespace

TEST(Quality, SampledTokensScoreTheirEntropy) {
  const harness::MarkovSource src(spec(TransitionKind::dense, 0));
  const auto p = src.transition({});
  double h = 0.0, h2 = 0.0;
  for (double v : p) {
    h -= v * std::log(v);
    h2 += v * std::log(v) * std::log(v);
  }
  const double var = h2 - h * h;
  nn::RngStream rng(3);
  std::vector<harness::TokenSequence> seqs;
  std::size_t n = 0;
  for (int i = 0; i < 300; ++i) {
    auto s = src.sample_sequence(rng);
    s.resize(30);  // before the EOS hazard starts
    n += s.size();
    seqs.push_back(std::move(s));
  }
  const auto q = harness::quality_proxy(seqs, src);
  EXPECT_EQ(q.tokens, n);
  EXPECT_NEAR(q.mean_nll, h, 3.0 * std::sqrt(var / static_cast<double>(n)));
}

TEST(Quality, DeterministicChainScoresZeroAfterContext) {
  const auto s = spec(TransitionKind::deterministic, 2);
  const harness::MarkovSource src(s);
  nn::RngStream rng(4);
  auto seq = src.sample_sequence(rng);
  seq.resize(25);
  const auto q = harness::quality_proxy({seq}, src, 2);
  EXPECT_EQ(q.mean_nll, 0.0);
  const auto full = harness::quality_proxy({seq}, src, 0);
  EXPECT_NEAR(full.mean_nll, 2.0 * std::log(8.0) / 25.0, 1e-12);
}

TEST(Quality, ImpossibleTokensAreClippedAtFloor) {
  const harness::MarkovSource src(spec(TransitionKind::deterministic, 1));
  const auto p = src.transition(std::vector<int>{0});
  int wrong = 0;
  while (p[static_cast<std::size_t>(wrong)] > 0.0) ++wrong;
  const auto q = harness::quality_proxy({{0, wrong}}, src, 1, 1e-9);
  EXPECT_EQ(q.clipped, 1u);
  EXPECT_NEAR(q.mean_nll, -std::log(1e-9), 1e-12);
  // EOS before min_len has zero probability too.
  const auto e = harness::quality_proxy({{0, 8}}, src, 1);
  EXPECT_EQ(e.clipped, 1u);
  // PAD and the token conditioned on it are clipped; the chain then resumes.
  const auto q1 = src.transition(std::vector<int>{1});
  const int after1 = static_cast<int>(std::max_element(q1.begin(), q1.end()) - q1.begin());
  const auto pad = harness::quality_proxy({{0, 9, 1, after1}}, src, 1);
  EXPECT_EQ(pad.clipped, 2u);
}

TEST(Quality, RejectsMalformedSequences) {
  const harness::MarkovSource src(spec(TransitionKind::dense, 1));
  EXPECT_THROW(harness::quality_proxy({{0, 10}}, src), InputError);
  EXPECT_THROW(harness::quality_proxy({{0, -1}}, src), InputError);
  EXPECT_THROW(harness::quality_proxy({{0, 8, 1}}, src), InputError);
}
