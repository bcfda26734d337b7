#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mtpv/nn/matrix.hpp"
#include "mtpv/train/schedule.hpp"

namespace mtpv::train {

struct ParamRef {
  std::string name;
  nn::Matrix* value = nullptr;
  nn::Matrix* grad = nullptr;
  bool decay = false;
  // Frozen parameters are listed for inspection only; the optimizer never
  // touches them.
  bool frozen = false;
};

// Adam with decoupled weight decay:
//   w ← w − lr·λ·w;  m ← β1·m + (1−β1)·g;  v ← β2·v + (1−β2)·g²
//   w ← w − lr · m̂ / (sqrt(v̂) + ε)
class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg);

  void step(std::span<const ParamRef> params, double lr);
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  double beta1_, beta2_, epsilon_, weight_decay_;
  std::size_t t_ = 0;
  std::vector<nn::Matrix> m_, v_;
};

double global_grad_norm(std::span<const ParamRef> params);
// Scales trainable gradients so their global norm is at most max_norm.
void clip_grad_norm(std::span<const ParamRef> params, double max_norm);
void zero_grads(std::span<const ParamRef> params);

}  // namespace mtpv::train
