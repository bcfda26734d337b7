#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

namespace mtpv::train {

struct TrainConfig {
  double max_lr = 1e-4;
  std::size_t warmup_steps = 200;
  std::size_t total_steps = 5000;
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Decoupled decay, applied to matrix weights only (never to norm gains).
  double weight_decay = 0.01;
  std::optional<double> grad_clip;
  // 0 disables periodic checkpoints.
  std::size_t checkpoint_every = 0;
  std::size_t max_train_len = 128;
  std::uint64_t seed = 0;
  // MTP module k scores its prediction at position t against token
  // t + k + offset_base. 1 is the standard objective.
  int offset_base = 1;

  // Throws ConfigError.
  void validate() const;
};

// Linear warmup from 0 to max_lr, then cosine decay to 0 at total_steps.
double lr_schedule(std::size_t step, const TrainConfig& cfg);

}  // namespace mtpv::train
