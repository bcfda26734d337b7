#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "mtpv/model/backbone.hpp"
#include "mtpv/mtp/cascade.hpp"
#include "mtpv/nn/rng.hpp"
#include "mtpv/train/schedule.hpp"

namespace mtpv::harness {

// Epoch-shuffled batches of sequence indices.
class BatchSampler {
 public:
  BatchSampler(std::size_t n_items, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();
  std::size_t batches_drawn() const noexcept { return drawn_; }

 private:
  void reshuffle();

  std::size_t batch_size_;
  nn::RngStream rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t drawn_ = 0;
};

struct TrainSummary {
  std::size_t steps = 0;
  double final_loss = 0.0;
  std::vector<double> final_module_loss;
  std::size_t skipped_samples = 0;
};

// Next-token pretraining from a seeded random init. log receives CSV rows
// "step,lr,loss,wall_ms".
TrainSummary pretrain_backbone(model::Backbone& backbone, const train::TrainConfig& cfg,
                               const std::vector<model::TokenSequence>& data,
                               std::ostream* log = nullptr);

// MTP training over a frozen backbone. log receives CSV rows
// "step,lr,loss_total,loss_mtp1,...,wall_ms". When checkpoint_dir is set and
// cfg.checkpoint_every > 0, module checkpoints are written every N steps.
TrainSummary train_mtp(mtp::MtpCascade& cascade, const train::TrainConfig& cfg,
                       const std::vector<model::TokenSequence>& data, std::ostream* log = nullptr,
                       const std::filesystem::path& checkpoint_dir = {});

}  // namespace mtpv::harness
