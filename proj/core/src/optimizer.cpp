#include "mtpv/train/optimizer.hpp"

#include <cmath>

#include "mtpv/error.hpp"

namespace mtpv::train {

AdamW::AdamW(const TrainConfig& cfg)
    : beta1_(cfg.beta1), beta2_(cfg.beta2), epsilon_(cfg.adam_epsilon),
      weight_decay_(cfg.weight_decay) {}

void AdamW::step(std::span<const ParamRef> params, double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value->rows(), p.value->cols());
      v_.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (m_.size() != params.size()) throw ContractError("AdamW: parameter list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamRef& p = params[i];
    if (p.frozen) continue;
    double* w = p.value->data();
    const double* g = p.grad->data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const double decay = p.decay ? lr * weight_decay_ : 0.0;
    for (std::size_t j = 0; j < p.value->size(); ++j) {
      w[j] -= decay * w[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + epsilon_);
    }
  }
}

double global_grad_norm(std::span<const ParamRef> params) {
  double ss = 0.0;
  for (const auto& p : params) {
    if (p.frozen) continue;
    for (double g : p.grad->values()) ss += g * g;
  }
  return std::sqrt(ss);
}

void clip_grad_norm(std::span<const ParamRef> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (const auto& p : params) {
    if (p.frozen) continue;
    for (double& g : p.grad->values()) g *= scale;
  }
}

void zero_grads(std::span<const ParamRef> params) {
  for (const auto& p : params) p.grad->fill(0.0);
}

}  // namespace mtpv::train
