#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mtpv/model/backbone.hpp"
#include "mtpv/train/optimizer.hpp"
#include "mtpv/train/schedule.hpp"

namespace mtpv::train {

// Next-token pretraining of the backbone on the synthetic corpus. This is the
// only code path that writes backbone weights.
class BackboneTrainer {
 public:
  struct StepResult {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
  };

  BackboneTrainer(model::Backbone& backbone, const TrainConfig& cfg);

  // Mean next-token CE over all non-PAD targets in the batch, with gradients
  // accumulated into grads.
  double loss_and_gradients(std::span<const model::TokenSequence> batch,
                            model::BackboneWeights& grads) const;
  double batch_loss(std::span<const model::TokenSequence> batch) const;

  StepResult train_step(std::span<const model::TokenSequence> batch, std::size_t batch_id);

  // Rounds weights to storage precision; call once training is done.
  void finalize();

  std::vector<ParamRef> parameter_refs();
  std::size_t step() const noexcept { return step_; }
  model::BackboneWeights& gradients() noexcept { return grads_; }

 private:
  model::Backbone& backbone_;
  TrainConfig cfg_;
  AdamW optimizer_;
  model::BackboneWeights grads_;
  std::vector<ParamRef> refs_;
  std::size_t step_ = 0;
};

}  // namespace mtpv::train
