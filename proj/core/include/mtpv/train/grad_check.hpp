#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "mtpv/nn/rng.hpp"
#include "mtpv/train/optimizer.hpp"

namespace mtpv::train {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t n_checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares analytic gradients (already stored in each ParamRef::grad) with
// central differences (f(w+ε) − f(w−ε)) / 2ε at n_samples entries drawn
// uniformly from the trainable parameters. Relative error is
// |a − n| / max(|a|, |n|, floor); the floor keeps entries whose true gradient
// is tiny from dominating through round-off.
GradCheckResult gradient_check(const std::function<double()>& loss,
                               std::span<const ParamRef> params, double epsilon,
                               std::size_t n_samples, nn::RngStream& rng, double floor = 1e-6);

}  // namespace mtpv::train
