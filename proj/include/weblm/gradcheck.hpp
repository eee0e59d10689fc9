#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "weblm/errors.hpp"
#include "weblm/model.hpp"
#include "weblm/rng.hpp"

namespace weblm {

struct GradCheckReport {
  double max_rel_error = 0.0;
  size_t checked = 0;
  std::string worst_param;
};

// Central finite differences against the analytic gradients on a random
// subset of coordinates spanning every parameter tensor.
inline GradCheckReport grad_check(ModelParams& params, const ModelInput& input, double epsilon,
                                  size_t min_coords = 200, uint64_t seed = 7) {
  if (epsilon <= 0.0) fail(Errc::InvalidEpsilon, "epsilon must be positive");

  ModelParams grads = ModelParams::shaped(params.cfg);
  model_forward_backward(params, input, grads);

  std::vector<std::pair<std::string, Tensor*>> param_tensors;
  params.visit([&](const std::string& name, Tensor& t) { param_tensors.push_back({name, &t}); });
  std::vector<Tensor*> grad_tensors;
  grads.visit([&](const std::string&, Tensor& t) { grad_tensors.push_back(&t); });

  const size_t per_tensor =
      std::max<size_t>(1, (min_coords + param_tensors.size() - 1) / param_tensors.size());
  Rng rng(seed);
  GradCheckReport report;
  for (size_t ti = 0; ti < param_tensors.size(); ++ti) {
    Tensor& t = *param_tensors[ti].second;
    const Tensor& g = *grad_tensors[ti];
    if (t.size() == 0) continue;
    for (size_t k = 0; k < per_tensor; ++k) {
      size_t idx = static_cast<size_t>(rng.below(t.size()));
      const double saved = t.v[idx];
      t.v[idx] = saved + epsilon;
      double up = model_forward(params, input).total;
      t.v[idx] = saved - epsilon;
      double down = model_forward(params, input).total;
      t.v[idx] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = g.v[idx];
      // the floor absorbs central-difference round-off (~ulp(loss)/2eps) on
      // coordinates whose true gradient is zero
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-5});
      const double rel = std::abs(numeric - analytic) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param =
            param_tensors[ti].first + "[" + std::to_string(idx) + "]";
      }
    }
  }
  return report;
}

}  // namespace weblm
