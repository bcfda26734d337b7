#include <gtest/gtest.h>

#include <sstream>

#include "../support/fixtures.hpp"
#include "mtpv/error.hpp"
#include "mtpv/harness/experiments.hpp"
#include "mtpv/harness/pipeline.hpp"

using namespace mtpv;

namespace {

struct World {
  harness::CorpusSpec spec;
  model::ModelConfig cfg = testkit::small_config(12, 16, 1, 2);
  std::shared_ptr<model::Backbone> bb = testkit::make_backbone(cfg, 90);
  mtp::MtpCascade cas = testkit::make_cascade(bb, 91);
  std::vector<harness::TokenSequence> prompts;
  World() {
    spec.vocab_size = 12;
    spec.n_sequences = 60;
    spec.min_len = 8;
    spec.max_len = 16;
    prompts = harness::make_prompts(harness::gen_corpus(spec).heldout, 5, 3);
  }
};

}  // namespace

TEST(Experiments, MakePromptsTakesHeldoutPrefixes) {
  const std::vector<harness::TokenSequence> held{{1, 2, 3, 4}, {1, 2, 3, 4, 5}, {5, 6, 7, 8, 9}};
  const auto p = harness::make_prompts(held, 2, 3);
  EXPECT_EQ(p, (std::vector<harness::TokenSequence>{{1, 2, 3}, {5, 6, 7}}));
  EXPECT_THROW(harness::make_prompts(held, 3, 3), InputError);
}

TEST(Experiments, SweepAtVocabularySizeIsUnverified) {
  World s;
  harness::SweepConfig sw;
  sw.topk_values = {1, 12};
  sw.max_len = 30;
  decode::SamplerParams sp;
  const auto rep = harness::run_sweep(s.cas, harness::MarkovSource(s.spec), s.prompts, sp, sw);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[1].label, "no_verification");
  EXPECT_FALSE(rep.rows[1].verified);
  for (double r : rep.rows[1].ratio_per_module) EXPECT_EQ(r, 100.0);
  EXPECT_EQ(rep.rows[1].total_ratio, 200.0);
  for (const auto& row : rep.rows) EXPECT_TRUE(row.accounting_ok);
}

TEST(Experiments, AblationBaselineHasNoAcceptedDrafts) {
  World s;
  decode::SamplerParams sp;
  const auto rep = harness::run_ablation(
      s.cas, harness::MarkovSource(s.spec), s.prompts, sp, decode::VerifyParams{4, 1, true}, 30,
      {harness::AblationMode::baseline, harness::AblationMode::no_verification,
       harness::AblationMode::no_eos_topk, harness::AblationMode::full});
  ASSERT_EQ(rep.rows.size(), 4u);
  EXPECT_EQ(rep.rows[0].total_ratio, 0.0);
  EXPECT_EQ(rep.rows[0].backbone_forwards, rep.rows[0].tokens_emitted);
  EXPECT_EQ(rep.rows[1].total_ratio, 200.0);
  EXPECT_EQ(rep.rows[2].eos_topk_v, 4u);
  EXPECT_EQ(rep.rows[3].eos_topk_v, 1u);
  EXPECT_EQ(rep.rows[0].quality, rep.rows[0].vanilla_quality);
}

TEST(Experiments, ReportsAreDeterministicWithoutTiming) {
  World s;
  harness::SweepConfig sw;
  sw.topk_values = {1, 4};
  sw.max_len = 24;
  decode::SamplerParams sp;
  const harness::MarkovSource src(s.spec);
  const auto a = harness::run_sweep(s.cas, src, s.prompts, sp, sw);
  const auto b = harness::run_sweep(s.cas, src, s.prompts, sp, sw);
  std::ostringstream ca, cb;
  a.write_csv(ca, false);
  b.write_csv(cb, false);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(a.summary_json(false), b.summary_json(false));
  EXPECT_EQ(ca.str().find("tokens_per_sec"), std::string::npos);
  std::ostringstream timed;
  a.write_csv(timed, true);
  EXPECT_NE(timed.str().find("tokens_per_sec"), std::string::npos);
}

TEST(Experiments, MonotonicityCheckRecordsCounterexamples) {
  harness::RunReport rep;
  rep.rows.resize(3);
  rep.rows[0].ratio_per_module = {10, 5};
  rep.rows[1].ratio_per_module = {20, 4};
  rep.rows[2].ratio_per_module = {30, 6};
  EXPECT_FALSE(harness::ratios_non_decreasing(rep));
  EXPECT_EQ(rep.notes.size(), 1u);
  rep.rows[1].ratio_per_module[1] = 5;
  rep.notes.clear();
  EXPECT_TRUE(harness::ratios_non_decreasing(rep));
}

TEST(Experiments, AblationModeNames) {
  for (auto m : {harness::AblationMode::baseline, harness::AblationMode::no_verification,
                 harness::AblationMode::no_eos_topk, harness::AblationMode::full})
    EXPECT_EQ(harness::parse_ablation_mode(harness::to_string(m)), m);
  EXPECT_THROW(harness::parse_ablation_mode("everything"), ConfigError);
}

TEST(Pipeline, BatchSamplerCoversEachEpoch) {
  harness::BatchSampler bs(10, 5, 3);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 2; ++i)
    for (auto idx : bs.next()) ++seen[idx];
  EXPECT_EQ(seen, std::vector<int>(10, 1));
  EXPECT_EQ(bs.batches_drawn(), 2u);
}

TEST(Pipeline, TrainingLogsAndFreezesBackbone) {
  World s;
  const auto corpus = harness::gen_corpus(s.spec);
  train::TrainConfig tc;
  tc.max_lr = 5e-3;
  tc.warmup_steps = 2;
  tc.total_steps = 6;
  tc.batch_size = 4;
  tc.checkpoint_every = 3;
  std::ostringstream plog;
  const auto ps = harness::pretrain_backbone(*s.bb, tc, corpus.train, &plog);
  EXPECT_EQ(ps.steps, 6u);
  EXPECT_EQ(plog.str().substr(0, 22), "step,lr,loss,wall_ms\n0");
  const auto hash = s.bb->content_hash();
  const auto dir = std::filesystem::temp_directory_path() / "mtpv_pipeline_test";
  std::filesystem::remove_all(dir);
  std::ostringstream mlog;
  const auto ms = harness::train_mtp(s.cas, tc, corpus.train, &mlog, dir);
  EXPECT_EQ(ms.final_module_loss.size(), 2u);
  EXPECT_EQ(s.bb->content_hash(), hash);
  EXPECT_EQ(mlog.str().substr(0, 41), "step,lr,loss_total,loss_mtp1,loss_mtp2,wa");
  EXPECT_TRUE(std::filesystem::exists(dir / "mtp_step_3.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "mtp_step_6.ckpt"));
  std::filesystem::remove_all(dir);
}
