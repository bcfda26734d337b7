#include <gtest/gtest.h>

#include "../support/fixtures.hpp"
#include "../support/reference.hpp"
#include "mtpv/error.hpp"

using namespace mtpv;

TEST(Backbone, MatchesNaiveReference) {
  const auto cfg = testkit::small_config(18, 16, 2);
  auto bb = testkit::make_backbone(cfg, 5);
  nn::RngStream rng(1);
  for (std::size_t n : {1u, 2u, 7u, 20u}) {
    const auto toks = testkit::random_tokens(n, cfg.vocab_size, rng);
    const auto out = bb->forward_full(toks);
    const auto ref = testkit::ref_backbone(*bb, toks);
    EXPECT_LT(testkit::max_rel_diff(testkit::to_rows(out.logits), ref.logits), 1e-10) << n;
    EXPECT_LT(testkit::max_rel_diff(testkit::to_rows(out.hidden), ref.hidden), 1e-10) << n;
  }
}

TEST(Backbone, CausalPrefixOutputsUnchangedBySuffix) {
  const auto cfg = testkit::small_config();
  auto bb = testkit::make_backbone(cfg, 6);
  nn::RngStream rng(2);
  auto toks = testkit::random_tokens(12, cfg.vocab_size, rng);
  const auto a = bb->forward_full(toks);
  toks[10] = (toks[10] + 1) % static_cast<int>(cfg.vocab_size);
  const auto b = bb->forward_full(toks);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < cfg.vocab_size; ++j) ASSERT_EQ(a.logits(i, j), b.logits(i, j));
}

TEST(Backbone, IncrementalMatchesFullForAnyChunking) {
  const auto cfg = testkit::small_config();
  auto bb = testkit::make_backbone(cfg, 7);
  nn::RngStream rng(3);
  const auto toks = testkit::random_tokens(25, cfg.vocab_size, rng);
  const auto full = bb->forward_full(toks);
  for (std::size_t chunk : {1u, 3u, 8u, 25u}) {
    auto cache = bb->make_cache();
    std::size_t pos = 0;
    while (pos < toks.size()) {
      const std::size_t n = std::min(chunk, toks.size() - pos);
      const auto out = bb->forward_incremental(cache, std::span(toks).subspan(pos, n));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cfg.vocab_size; ++j)
          ASSERT_EQ(out.logits(i, j), full.logits(pos + i, j)) << chunk;
      pos += n;
    }
    EXPECT_EQ(cache.len(), toks.size());
  }
}

TEST(Backbone, TruncateThenRefeedMatchesFresh) {
  const auto cfg = testkit::small_config();
  auto bb = testkit::make_backbone(cfg, 8);
  nn::RngStream rng(4);
  const auto a = testkit::random_tokens(15, cfg.vocab_size, rng);
  auto b = a;
  for (std::size_t i = 9; i < b.size(); ++i) b[i] = static_cast<int>(rng.uniform_index(cfg.vocab_size));
  auto cache = bb->make_cache();
  bb->forward_incremental(cache, a);
  bb->truncate_cache(cache, 9);
  EXPECT_EQ(cache.len(), 9u);
  const auto tail = bb->forward_incremental(cache, std::span(b).subspan(9));
  const auto fresh = bb->forward_full(b);
  EXPECT_LT(nn::max_abs_diff(tail.logits, nn::slice_rows(fresh.logits, 9, b.size() - 9)), 1e-12);
  EXPECT_THROW(bb->truncate_cache(cache, 100), ParameterError);
}

TEST(Backbone, LmHeadIsLinearWithoutBias) {
  const auto cfg = testkit::small_config();
  auto bb = testkit::make_backbone(cfg, 9);
  nn::RngStream rng(5);
  std::vector<double> x(cfg.dim), y(cfg.dim), z(cfg.dim);
  for (std::size_t i = 0; i < cfg.dim; ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
    z[i] = 2.0 * x[i] - 3.0 * y[i];
  }
  const auto lx = bb->lm_head(x), ly = bb->lm_head(y), lz = bb->lm_head(z);
  for (std::size_t j = 0; j < lx.size(); ++j) EXPECT_NEAR(lz[j], 2.0 * lx[j] - 3.0 * ly[j], 1e-12);
  const auto zero = bb->lm_head(std::vector<double>(cfg.dim, 0.0));
  for (double v : zero) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, InputErrors) {
  const auto cfg = testkit::small_config();
  auto bb = testkit::make_backbone(cfg);
  EXPECT_THROW(bb->forward_full(std::vector<int>{}), InputError);
  EXPECT_THROW(bb->forward_full(std::vector<int>{0, static_cast<int>(cfg.vocab_size)}), InputError);
  EXPECT_THROW(bb->forward_full(std::vector<int>{-1}), InputError);
  EXPECT_THROW(bb->forward_full(std::vector<int>(cfg.max_seq_len + 1, 0)), CapacityError);
  auto cache = bb->make_cache();
  bb->forward_incremental(cache, std::vector<int>(cfg.max_seq_len, 0));
  EXPECT_THROW(bb->forward_incremental(cache, std::vector<int>{0}), CapacityError);
}

TEST(Backbone, ContentHashTracksWeights) {
  const auto cfg = testkit::small_config();
  auto bb = testkit::make_backbone(cfg, 10);
  const auto h = bb->content_hash();
  EXPECT_EQ(h, testkit::make_backbone(cfg, 10)->content_hash());
  bb->mutable_weights().lm_head(0, 0) += 1.0;
  EXPECT_NE(h, bb->content_hash());
}

TEST(ModelConfig, ValidationAndReservedIds) {
  auto cfg = testkit::small_config(10);
  EXPECT_EQ(cfg.eos_id(), 8);
  EXPECT_EQ(cfg.pad_id(), 9);
  EXPECT_NO_THROW(cfg.validate());
  cfg.n_heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = testkit::small_config();
  cfg.n_mtp_modules = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(model::ModelConfig::from_header(testkit::small_config().to_header()), testkit::small_config());
}
