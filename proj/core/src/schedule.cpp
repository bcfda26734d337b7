#include "mtpv/train/schedule.hpp"

#include <cmath>
#include <numbers>

#include "mtpv/error.hpp"

namespace mtpv::train {

void TrainConfig::validate() const {
  if (!(max_lr > 0.0)) throw ConfigError("train.max_lr must be positive");
  if (!(beta1 > 0.0 && beta1 < beta2 && beta2 < 1.0))
    throw ConfigError("train betas must satisfy 0 < beta1 < beta2 < 1");
  if (warmup_steps > total_steps) throw ConfigError("train.warmup_steps exceeds total_steps");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("train.grad_clip must be positive");
}

double lr_schedule(std::size_t step, const TrainConfig& cfg) {
  if (step < cfg.warmup_steps)
    return cfg.max_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (step >= cfg.total_steps) return 0.0;
  const double span = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  const double progress = static_cast<double>(step - cfg.warmup_steps) / span;
  return cfg.max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace mtpv::train
