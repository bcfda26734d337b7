#include "mtpv/train/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mtpv/error.hpp"

namespace mtpv::train {

GradCheckResult gradient_check(const std::function<double()>& loss,
                               std::span<const ParamRef> params, double epsilon,
                               std::size_t n_samples, nn::RngStream& rng, double floor) {
  std::vector<const ParamRef*> trainable;
  std::vector<std::size_t> offsets{0};
  for (const auto& p : params) {
    if (p.frozen || p.value->size() == 0) continue;
    trainable.push_back(&p);
    offsets.push_back(offsets.back() + p.value->size());
  }
  if (trainable.empty()) throw ParameterError("gradient_check: no trainable parameters");
  const std::size_t total = offsets.back();

  GradCheckResult r;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::size_t flat = rng.uniform_index(total);
    const std::size_t pi =
        static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                                 offsets.begin()) - 1;
    const ParamRef& p = *trainable[pi];
    const std::size_t idx = flat - offsets[pi];
    double& w = p.value->data()[idx];
    const double saved = w;
    w = saved + epsilon;
    const double up = loss();
    w = saved - epsilon;
    const double down = loss();
    w = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = p.grad->data()[idx];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++r.n_checked;
    if (rel >= r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_param = p.name;
      r.worst_index = idx;
      r.worst_analytic = analytic;
      r.worst_numeric = numeric;
    }
  }
  return r;
}

}  // namespace mtpv::train
