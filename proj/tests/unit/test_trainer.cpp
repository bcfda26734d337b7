#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "../support/fixtures.hpp"
#include "../support/reference.hpp"
#include "mtpv/error.hpp"
#include "mtpv/train/backbone_trainer.hpp"
#include "mtpv/train/grad_check.hpp"
#include "mtpv/train/mtp_trainer.hpp"

using namespace mtpv;
using train::TrainConfig;

namespace {

TrainConfig quick_cfg(int offset_base = 1) {
  TrainConfig c;
  c.max_lr = 1e-2;
  c.warmup_steps = 2;
  c.total_steps = 200;
  c.weight_decay = 0.0;
  c.offset_base = offset_base;
  return c;
}

// Log-sum-exp cross-entropy written out independently of the library.
double ref_ce(const testkit::Vec& logits, int target) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return std::log(z) + mx - logits[static_cast<std::size_t>(target)];
}

// Per-module mean CE over a batch with module k at position t scored
// against token t + k + offset_base, pooled across sequences.
std::vector<double> ref_losses(const mtp::MtpCascade& c, const std::vector<std::vector<int>>& batch,
                               int offset_base) {
  const std::size_t n = c.n_modules();
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> cnt(n, 0);
  for (const auto& seq : batch) {
    testkit::Rows h = testkit::ref_backbone(c.backbone(), seq).hidden;
    for (std::size_t k = 1; k <= n; ++k) {
      h = testkit::ref_mtp(c, k, h);
      for (std::size_t t = 0; t < seq.size(); ++t) {
        const std::size_t idx = t + k + static_cast<std::size_t>(offset_base);
        if (idx >= seq.size()) continue;
        sum[k - 1] += ref_ce(testkit::ref_linear(h[t], c.backbone().lm_head_weight()), seq[idx]);
        ++cnt[k - 1];
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k) sum[k] /= static_cast<double>(cnt[k]);
  return sum;
}

struct World {
  model::ModelConfig cfg = testkit::small_config(12, 16, 1, 2);
  std::shared_ptr<model::Backbone> bb = testkit::make_backbone(cfg, 31);
  mtp::MtpCascade cas = testkit::make_cascade(bb, 32);
  std::vector<std::vector<int>> batch;
  World() {
    nn::RngStream rng(33);
    for (std::size_t len : {9u, 6u, 12u}) batch.push_back(testkit::random_tokens(len, cfg.vocab_size - 2, rng));
  }
};

}  // namespace

TEST(LrSchedule, WarmupThenCosineToZero) {
  TrainConfig c;
  c.max_lr = 1.0;
  c.warmup_steps = 10;
  c.total_steps = 110;
  EXPECT_EQ(train::lr_schedule(0, c), 0.0);
  EXPECT_DOUBLE_EQ(train::lr_schedule(5, c), 0.5);
  EXPECT_DOUBLE_EQ(train::lr_schedule(10, c), 1.0);
  EXPECT_NEAR(train::lr_schedule(60, c), 0.5, 1e-15);
  EXPECT_EQ(train::lr_schedule(110, c), 0.0);
  EXPECT_EQ(train::lr_schedule(500, c), 0.0);
  for (std::size_t s = 10; s < 110; ++s) EXPECT_GE(train::lr_schedule(s, c), train::lr_schedule(s + 1, c));
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.warmup_steps = c.total_steps + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.beta1 = 0.9999;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.grad_clip = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(AdamW, MatchesHandRolledRecurrence) {
  TrainConfig c;
  c.weight_decay = 0.1;
  nn::Matrix w(1, 2, std::vector<double>{0.7, -1.3});
  nn::Matrix g(1, 2);
  nn::Matrix gain(1, 1, std::vector<double>{2.0});
  nn::Matrix gg(1, 1);
  const std::vector<train::ParamRef> refs{{"w", &w, &g, true, false}, {"gain", &gain, &gg, false, false}};
  train::AdamW opt(c);
  double rw[2] = {0.7, -1.3}, rm[2] = {0, 0}, rv[2] = {0, 0};
  double rgain = 2.0, mg = 0.0, vg = 0.0;
  const double grads[3][3] = {{0.5, -0.2, 0.3}, {0.1, 0.4, -0.6}, {-0.3, 0.0, 0.2}};
  const double lrs[3] = {1e-2, 5e-3, 2e-3};
  for (int s = 0; s < 3; ++s) {
    g(0, 0) = grads[s][0];
    g(0, 1) = grads[s][1];
    gg(0, 0) = grads[s][2];
    opt.step(refs, lrs[s]);
    const double t = s + 1;
    const double b1 = 1 - std::pow(0.9, t), b2 = 1 - std::pow(0.999, t);
    for (int j = 0; j < 2; ++j) {
      rw[j] *= 1 - lrs[s] * 0.1;
      rm[j] = 0.9 * rm[j] + 0.1 * grads[s][j];
      rv[j] = 0.999 * rv[j] + 0.001 * grads[s][j] * grads[s][j];
      rw[j] -= lrs[s] * (rm[j] / b1) / (std::sqrt(rv[j] / b2) + 1e-8);
    }
    mg = 0.9 * mg + 0.1 * grads[s][2];
    vg = 0.999 * vg + 0.001 * grads[s][2] * grads[s][2];
    rgain -= lrs[s] * (mg / b1) / (std::sqrt(vg / b2) + 1e-8);
    EXPECT_NEAR(w(0, 0), rw[0], 1e-8);
    EXPECT_NEAR(w(0, 1), rw[1], 1e-8);
    EXPECT_NEAR(gain(0, 0), rgain, 1e-8);
  }
  EXPECT_EQ(opt.steps_taken(), 3u);
}

TEST(AdamW, FrozenParamsUntouchedAndListChangeRejected) {
  TrainConfig c;
  nn::Matrix w(1, 1, 1.0), g(1, 1, 5.0), fw(1, 1, 2.0), fg(1, 1, 5.0);
  std::vector<train::ParamRef> refs{{"w", &w, &g, true, false}, {"f", &fw, &fg, true, true}};
  train::AdamW opt(c);
  opt.step(refs, 0.1);
  EXPECT_EQ(fw(0, 0), 2.0);
  EXPECT_NE(w(0, 0), 1.0);
  refs.pop_back();
  EXPECT_THROW(opt.step(refs, 0.1), ContractError);
}

TEST(GradClip, ScalesToMaxNorm) {
  nn::Matrix w(1, 2), g(1, 2, std::vector<double>{3.0, 4.0});
  const std::vector<train::ParamRef> refs{{"w", &w, &g, true, false}};
  EXPECT_DOUBLE_EQ(train::global_grad_norm(refs), 5.0);
  train::clip_grad_norm(refs, 1.0);
  EXPECT_NEAR(g(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(g(0, 1), 0.8, 1e-15);
}

TEST(CrossEntropy, UniformLogitsGiveLogVocab) {
  for (std::size_t v : {2u, 18u, 66u}) {
    std::vector<double> logits(v, 0.0), d(v);
    EXPECT_NEAR(train::cross_entropy_row(logits, 1, 1.0, d), std::log(static_cast<double>(v)), 1e-14);
    double s = 0.0;
    for (double x : d) s += x;
    EXPECT_NEAR(s, 0.0, 1e-15);
  }
}

TEST(MtpLoss, MatchesExplicitShiftOracle) {
  World s;
  train::MtpTrainer tr(s.cas, quick_cfg());
  const auto got = tr.batch_loss(std::vector<model::TokenSequence>(s.batch.begin(), s.batch.end()));
  const auto want = ref_losses(s.cas, s.batch, 1);
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(got.per_module[k], want[k], 1e-10) << k;
  EXPECT_NEAR(got.total, want[0] + want[1], 1e-10);
}

TEST(MtpLoss, MisOffsetObjectiveShiftsTargets) {
  World s;
  train::MtpTrainer tr(s.cas, quick_cfg(2));
  const auto got = tr.batch_loss(std::vector<model::TokenSequence>(s.batch.begin(), s.batch.end()));
  const auto want = ref_losses(s.cas, s.batch, 2);
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(got.per_module[k], want[k], 1e-10) << k;
  const auto standard = ref_losses(s.cas, s.batch, 1);
  EXPECT_GT(std::abs(got.per_module[0] - standard[0]), 1e-6);
}

TEST(MtpLoss, ForwardOnlyLossAgreesWithTrainer) {
  World s;
  train::MtpTrainer tr(s.cas, quick_cfg());
  const auto& seq = s.batch[2];
  const auto l = train::mtp_loss(s.cas, {0, s.bb->forward_full(seq).hidden},
                                 train::TargetSequence::from_tokens(seq, s.cfg.pad_id()));
  const auto b = tr.batch_loss(std::vector<model::TokenSequence>{seq});
  EXPECT_NEAR(l.total, b.total, 1e-12);
  EXPECT_EQ(l.scored, (std::vector<std::size_t>{10, 9}));
}

TEST(MtpLoss, TotalIsSumOfModuleLosses) {
  World s;
  train::MtpTrainer tr(s.cas, quick_cfg());
  const auto l = tr.batch_loss(std::vector<model::TokenSequence>(s.batch.begin(), s.batch.end()));
  double sum = 0.0;
  for (double v : l.per_module) sum += v;
  EXPECT_NEAR(l.total, sum, 1e-12);
}

TEST(MtpLoss, ShortestScorableLengthIsModulesPlusTwo) {
  World s;
  train::MtpTrainer tr(s.cas, quick_cfg());
  const std::size_t n = s.cas.n_modules();
  const auto shortl = tr.batch_loss(std::vector<model::TokenSequence>{std::vector<int>(n + 1, 1)});
  EXPECT_EQ(shortl.scored, (std::vector<std::size_t>{0, 0}));
  const auto edge = tr.batch_loss(std::vector<model::TokenSequence>{{1, 2, 3, 4}});
  EXPECT_EQ(edge.scored, (std::vector<std::size_t>{2, 1}));
  EXPECT_TRUE(std::isfinite(edge.total));
  std::vector<mtp::MtpModuleWeights> g(n, mtp::MtpModuleWeights::zeros(s.cas.block_shape()));
  tr.loss_and_gradients(std::vector<model::TokenSequence>{std::vector<int>(n + 1, 1)}, g);
  EXPECT_EQ(tr.skipped_samples(), 1u);
}

TEST(MtpLoss, PadTargetsAreMasked) {
  World s;
  train::MtpTrainer tr(s.cas, quick_cfg());
  const int pad = s.cfg.pad_id();
  const auto l = tr.batch_loss(std::vector<model::TokenSequence>{{1, 2, 3, 4, 5, pad, pad}});
  EXPECT_EQ(l.scored, (std::vector<std::size_t>{3, 2}));
}

TEST(GradCheck, LinearToyModel) {
  // L = 0.5·Σ (x·W − y)², dL/dW = xᵀ(xW − y).
  nn::RngStream rng(40);
  const nn::Matrix x = testkit::random_matrix(5, 3, rng);
  const nn::Matrix y = testkit::random_matrix(5, 2, rng);
  nn::Matrix w = testkit::random_matrix(3, 2, rng);
  auto loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double p = -y(i, j);
        for (std::size_t k = 0; k < 3; ++k) p += x(i, k) * w(k, j);
        s += 0.5 * p * p;
      }
    return s;
  };
  nn::Matrix g(3, 2);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double p = -y(i, j);
      for (std::size_t k = 0; k < 3; ++k) p += x(i, k) * w(k, j);
      for (std::size_t k = 0; k < 3; ++k) g(k, j) += x(i, k) * p;
    }
  const std::vector<train::ParamRef> refs{{"w", &w, &g, true, false}};
  const auto r = train::gradient_check(loss, refs, 1e-5, 50, rng);
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_EQ(r.n_checked, 50u);
}

TEST(GradCheck, FullCascadeGradients) {
  World s;
  train::MtpTrainer tr(s.cas, quick_cfg());
  const std::vector<model::TokenSequence> batch(s.batch.begin(), s.batch.end());
  const auto refs = tr.parameter_refs();
  train::zero_grads(refs);
  tr.loss_and_gradients(batch, tr.gradients());
  nn::RngStream rng(41);
  const auto r = train::gradient_check([&] { return tr.batch_loss(batch).total; }, refs, 1e-5, 300, rng);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] analytic "
                                   << r.worst_analytic << " numeric " << r.worst_numeric;
  for (const auto& p : refs) {
    if (!p.frozen) continue;
    for (double v : p.grad->values()) ASSERT_EQ(v, 0.0) << p.name;
  }
}

TEST(GradCheck, BackboneGradients) {
  const auto cfg = testkit::small_config(12, 8, 2, 1);
  auto bb = testkit::make_backbone(cfg, 50);
  train::BackboneTrainer tr(*bb, quick_cfg());
  nn::RngStream rng(51);
  const std::vector<model::TokenSequence> batch{testkit::random_tokens(7, 10, rng),
                                                testkit::random_tokens(5, 10, rng)};
  const auto refs = tr.parameter_refs();
  train::zero_grads(refs);
  tr.loss_and_gradients(batch, tr.gradients());
  const auto r = train::gradient_check([&] { return tr.batch_loss(batch); }, refs, 1e-5, 200, rng);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(MtpTrainer, BackboneHashUnchangedAfterTraining) {
  World s;
  const auto before = s.bb->content_hash();
  const auto mtp_before = s.cas.content_hash();
  train::MtpTrainer tr(s.cas, quick_cfg());
  const std::vector<model::TokenSequence> batch(s.batch.begin(), s.batch.end());
  const double first = tr.batch_loss(batch).total;
  for (std::size_t i = 0; i < 100; ++i) tr.train_step(batch, i);
  EXPECT_EQ(s.bb->content_hash(), before);
  EXPECT_NE(s.cas.content_hash(), mtp_before);
  EXPECT_LT(tr.batch_loss(batch).total, first);
  EXPECT_EQ(tr.step(), 100u);
  for (const auto& p : tr.parameter_refs()) {
    if (!p.frozen) continue;
    for (double v : p.grad->values()) ASSERT_EQ(v, 0.0);
  }
}

TEST(MtpTrainer, PrecomputedHiddenMatchesInternal) {
  World s;
  train::MtpTrainer tr(s.cas, quick_cfg());
  const std::vector<model::TokenSequence> batch(s.batch.begin(), s.batch.end());
  std::vector<nn::Matrix> h0;
  for (const auto& seq : batch) h0.push_back(s.bb->forward_full(seq).hidden);
  std::vector<const nn::Matrix*> ptrs;
  for (const auto& m : h0) ptrs.push_back(&m);
  const auto shape = s.cas.block_shape();
  std::vector<mtp::MtpModuleWeights> ga(2, mtp::MtpModuleWeights::zeros(shape)), gb = ga;
  const auto la = tr.loss_and_gradients(batch, ga);
  const auto lb = tr.loss_and_gradients(batch, ptrs, gb);
  EXPECT_EQ(la.total, lb.total);
  EXPECT_EQ(ga[0].projector, gb[0].projector);
}

TEST(MtpTrainer, NonFiniteLossThrowsBeforeUpdate) {
  World s;
  s.cas.mutable_modules()[1].projector(0, 0) = std::numeric_limits<double>::quiet_NaN();
  train::MtpTrainer tr(s.cas, quick_cfg());
  const auto w = s.cas.modules()[0].projector;
  try {
    tr.train_step(std::vector<model::TokenSequence>(s.batch.begin(), s.batch.end()), 7);
    FAIL() << "expected NonFiniteLossError";
  } catch (const NonFiniteLossError& e) {
    EXPECT_EQ(e.batch_id(), 7u);
    EXPECT_EQ(e.step(), 0u);
  }
  EXPECT_EQ(s.cas.modules()[0].projector, w);
}

TEST(BackboneTrainer, LossDecreasesAndFinalizeRoundsWeights) {
  const auto cfg = testkit::small_config(10, 16, 1, 1);
  auto bb = testkit::make_backbone(cfg, 60);
  train::BackboneTrainer tr(*bb, quick_cfg());
  const std::vector<model::TokenSequence> batch{{0, 1, 2, 3, 0, 1, 2, 3, 8}, {1, 2, 3, 0, 1, 2, 3, 8}};
  const double first = tr.batch_loss(batch);
  for (std::size_t i = 0; i < 60; ++i) tr.train_step(batch, i);
  EXPECT_LT(tr.batch_loss(batch), 0.5 * first);
  tr.finalize();
  for (double v : bb->weights().lm_head.values()) ASSERT_EQ(v, static_cast<double>(static_cast<float>(v)));
}
