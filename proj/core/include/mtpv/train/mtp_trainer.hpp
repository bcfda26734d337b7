#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mtpv/model/backbone.hpp"
#include "mtpv/mtp/cascade.hpp"
#include "mtpv/train/optimizer.hpp"
#include "mtpv/train/schedule.hpp"

namespace mtpv::train {

using model::TokenSequence;

// Ground-truth ids aligned with input positions. mask[i] == 0 removes
// position i as a target.
struct TargetSequence {
  TokenSequence tokens;
  std::vector<unsigned char> mask;

  // Masks every PAD position.
  static TargetSequence from_tokens(const TokenSequence& tokens, int pad_id);
};

struct MtpLoss {
  double total = 0.0;
  std::vector<double> per_module;
  std::vector<std::size_t> scored;  // scored positions per module
};

// Softmax cross-entropy of one logit row. When dlogits is non-empty it
// receives scale · (softmax − onehot).
double cross_entropy_row(std::span<const double> logits, int target, double scale = 1.0,
                         std::span<double> dlogits = {});

// Forward-only loss for one sequence. Module k's output at position t is
// scored against targets[t + k + offset_base]; positions past the end or
// masked are skipped.
MtpLoss mtp_loss(const mtp::MtpCascade& cascade, const model::HiddenStates& h0,
                 const TargetSequence& targets, int offset_base = 1);

// Trains the draft heads of a cascade. The backbone is reached only through
// the cascade's const pointer, so its weights cannot change here.
class MtpTrainer {
 public:
  struct StepResult {
    std::size_t step = 0;
    double lr = 0.0;
    MtpLoss loss;
  };

  MtpTrainer(mtp::MtpCascade& cascade, const TrainConfig& cfg);

  // Batch loss (per-module mean over all scored positions in the batch) and
  // its gradient with respect to every MTP parameter. Sequences too short to
  // score every module are skipped and counted.
  MtpLoss loss_and_gradients(std::span<const TokenSequence> batch,
                             std::vector<mtp::MtpModuleWeights>& grads) const;
  // Same, with level-0 states supplied by the caller (the backbone is frozen,
  // so they can be computed once per sequence). h0[i] covers the first
  // min(len, max_train_len) positions of batch[i].
  MtpLoss loss_and_gradients(std::span<const TokenSequence> batch,
                             std::span<const nn::Matrix* const> h0,
                             std::vector<mtp::MtpModuleWeights>& grads) const;
  MtpLoss batch_loss(std::span<const TokenSequence> batch) const;

  // Throws NonFiniteLossError on a non-finite loss before touching weights.
  StepResult train_step(std::span<const TokenSequence> batch, std::size_t batch_id);
  StepResult train_step(std::span<const TokenSequence> batch,
                        std::span<const nn::Matrix* const> h0, std::size_t batch_id);

  // Trainable MTP parameters followed by the frozen backbone parameters,
  // whose gradient entries stay exactly zero.
  std::vector<ParamRef> parameter_refs();

  std::size_t step() const noexcept { return step_; }
  std::size_t skipped_samples() const noexcept { return skipped_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  std::vector<mtp::MtpModuleWeights>& gradients() noexcept { return grads_; }

 private:
  mtp::MtpCascade& cascade_;
  TrainConfig cfg_;
  AdamW optimizer_;
  std::vector<mtp::MtpModuleWeights> grads_;
  model::BackboneWeights frozen_grads_;
  std::vector<ParamRef> refs_;
  std::size_t step_ = 0;
  mutable std::size_t skipped_ = 0;
};

}  // namespace mtpv::train
