#include "mtpv/harness/pipeline.hpp"

#include <chrono>
#include <numeric>
#include <ostream>

#include "mtpv/error.hpp"
#include "mtpv/train/backbone_trainer.hpp"
#include "mtpv/train/mtp_trainer.hpp"

namespace mtpv::harness {

BatchSampler::BatchSampler(std::size_t n_items, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), rng_(seed, 0xba7c), order_(n_items) {
  if (n_items == 0 || batch_size == 0) throw ParameterError("batch sampler needs items and a batch size");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchSampler::reshuffle() {
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.uniform_index(i)]);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> batch;
  batch.reserve(batch_size_);
  while (batch.size() < batch_size_) {
    if (cursor_ == order_.size()) reshuffle();
    batch.push_back(order_[cursor_++]);
  }
  ++drawn_;
  return batch;
}

namespace {

std::vector<model::TokenSequence> gather(const std::vector<model::TokenSequence>& data,
                                         const std::vector<std::size_t>& idx) {
  std::vector<model::TokenSequence> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data[i]);
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TrainSummary pretrain_backbone(model::Backbone& backbone, const train::TrainConfig& cfg,
                               const std::vector<model::TokenSequence>& data, std::ostream* log) {
  train::BackboneTrainer trainer(backbone, cfg);
  BatchSampler sampler(data.size(), cfg.batch_size, cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  if (log) *log << "step,lr,loss,wall_ms\n";
  TrainSummary s;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const auto batch = gather(data, sampler.next());
    const auto r = trainer.train_step(batch, sampler.batches_drawn() - 1);
    s.final_loss = r.loss;
    if (log) *log << r.step << ',' << r.lr << ',' << r.loss << ',' << elapsed_ms(t0) << '\n';
  }
  trainer.finalize();
  s.steps = cfg.total_steps;
  return s;
}

TrainSummary train_mtp(mtp::MtpCascade& cascade, const train::TrainConfig& cfg,
                       const std::vector<model::TokenSequence>& data, std::ostream* log,
                       const std::filesystem::path& checkpoint_dir) {
  train::MtpTrainer trainer(cascade, cfg);
  BatchSampler sampler(data.size(), cfg.batch_size, cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  if (log) {
    *log << "step,lr,loss_total";
    for (std::size_t k = 1; k <= cascade.n_modules(); ++k) *log << ",loss_mtp" << k;
    *log << ",wall_ms\n";
  }
  if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0)
    std::filesystem::create_directories(checkpoint_dir);
  // The backbone is frozen, so level-0 states are computed once per sequence.
  std::vector<nn::Matrix> h0(data.size());
  const auto& backbone = cascade.backbone();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t len = std::min(data[i].size(), cfg.max_train_len);
    if (len == 0) continue;
    h0[i] = backbone.forward_full(std::span<const int>(data[i].data(), len)).hidden;
  }
  TrainSummary s;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const auto idx = sampler.next();
    const auto batch = gather(data, idx);
    std::vector<const nn::Matrix*> hb;
    hb.reserve(idx.size());
    for (auto i : idx) hb.push_back(&h0[i]);
    const auto r = trainer.train_step(batch, hb, sampler.batches_drawn() - 1);
    s.final_loss = r.loss.total;
    s.final_module_loss = r.loss.per_module;
    if (log) {
      *log << r.step << ',' << r.lr << ',' << r.loss.total;
      for (double v : r.loss.per_module) *log << ',' << v;
      *log << ',' << elapsed_ms(t0) << '\n';
    }
    if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      cascade.save(checkpoint_dir / ("mtp_step_" + std::to_string(step + 1) + ".ckpt"));
  }
  for (auto& m : cascade.mutable_modules())
    m.for_each([](const std::string&, nn::Matrix& w, bool) { nn::round_to_storage(w); });
  s.steps = cfg.total_steps;
  s.skipped_samples = trainer.skipped_samples();
  return s;
}

}  // namespace mtpv::harness
