#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mtpv/error.hpp"
#include "mtpv/harness/corpus.hpp"

using namespace mtpv;
using harness::CorpusSpec;
using harness::TransitionKind;

namespace {

CorpusSpec small_spec(TransitionKind kind = TransitionKind::peaked, std::size_t order = 2) {
  CorpusSpec s;
  s.vocab_size = 12;
  s.order = order;
  s.n_sequences = 200;
  s.min_len = 6;
  s.max_len = 14;
  s.kind = kind;
  return s;
}

}  // namespace

TEST(Corpus, DeterministicInSeed) {
  const auto a = harness::gen_corpus(small_spec());
  const auto b = harness::gen_corpus(small_spec());
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.heldout, b.heldout);
  auto s = small_spec();
  s.seed = 2;
  EXPECT_NE(harness::gen_corpus(s).train, a.train);
}

TEST(Corpus, LastTenthHeldOut) {
  const auto c = harness::gen_corpus(small_spec());
  EXPECT_EQ(c.train.size(), 180u);
  EXPECT_EQ(c.heldout.size(), 20u);
}

TEST(Corpus, ExactlyOneTrailingEosAndLengthBounds) {
  const auto spec = small_spec();
  const auto c = harness::gen_corpus(spec);
  for (const auto* split : {&c.train, &c.heldout})
    for (const auto& seq : *split) {
      ASSERT_EQ(seq.back(), spec.eos_id());
      ASSERT_EQ(std::count(seq.begin(), seq.end(), spec.eos_id()), 1);
      const std::size_t content = seq.size() - 1;
      ASSERT_GE(content, spec.min_len);
      ASSERT_LE(content, spec.max_len);
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) ASSERT_LT(seq[i], spec.eos_id());
    }
}

TEST(Corpus, OrderZeroFrequenciesMatchUnigram) {
  auto spec = small_spec(TransitionKind::dense, 0);
  spec.n_sequences = 2000;
  const harness::MarkovSource src(spec);
  const auto p = src.transition({});
  const auto c = harness::gen_corpus(spec);
  std::vector<double> counts(spec.content_vocab(), 0.0);
  double n = 0.0;
  for (const auto& seq : c.train)
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      counts[static_cast<std::size_t>(seq[i])] += 1.0;
      n += 1.0;
    }
  for (std::size_t i = 0; i < counts.size(); ++i)
    EXPECT_NEAR(counts[i], n * p[i], 3.0 * std::sqrt(n * p[i] * (1 - p[i]))) << i;
}

TEST(Corpus, DeterministicTransitionsAreFollowed) {
  const auto spec = small_spec(TransitionKind::deterministic);
  const harness::MarkovSource src(spec);
  const auto c = harness::gen_corpus(spec);
  for (const auto& seq : c.train)
    for (std::size_t i = spec.order; i + 1 < seq.size(); ++i) {
      const auto p = src.transition(std::span<const int>(seq).subspan(i - spec.order, spec.order));
      ASSERT_EQ(p[static_cast<std::size_t>(seq[i])], 1.0);
    }
}

TEST(Corpus, TransitionRowsAreDistributions) {
  for (auto kind : {TransitionKind::deterministic, TransitionKind::peaked, TransitionKind::dense}) {
    const harness::MarkovSource src(small_spec(kind));
    for (int a = 0; a < 10; ++a) {
      const std::vector<int> ctx{a, (a * 3) % 10};
      const auto p = src.transition(ctx);
      double s = 0.0, mx = 0.0;
      for (double v : p) {
        s += v;
        mx = std::max(mx, v);
      }
      ASSERT_NEAR(s, 1.0, 1e-12);
      if (kind == TransitionKind::peaked) {
        ASSERT_GE(mx, 0.8);
      }
      EXPECT_EQ(src.transition(ctx), p);
    }
  }
}

TEST(Corpus, HazardRampsToOne) {
  const harness::MarkovSource src(small_spec());
  EXPECT_EQ(src.eos_hazard(5), 0.0);
  EXPECT_DOUBLE_EQ(src.eos_hazard(6), 1.0 / 9.0);
  EXPECT_DOUBLE_EQ(src.eos_hazard(10), 5.0 / 9.0);
  EXPECT_EQ(src.eos_hazard(14), 1.0);
}

TEST(Corpus, FileRoundTripAndMissingFile) {
  const auto c = harness::gen_corpus(small_spec());
  const auto dir = std::filesystem::temp_directory_path() / "mtpv_corpus_test";
  harness::write_corpus(dir, c);
  const auto back = harness::read_corpus(dir);
  EXPECT_EQ(back.train, c.train);
  EXPECT_EQ(back.heldout, c.heldout);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(harness::read_corpus(dir), ArtifactError);
}

TEST(Corpus, SpecValidation) {
  auto s = small_spec();
  s.min_len = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.peak_mass = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(harness::parse_transition_kind("chaotic"), ConfigError);
}
