#pragma once

#include <cmath>
#include <cstdint>

#include "weblm/errors.hpp"
#include "weblm/model.hpp"

namespace weblm {

struct OptimizerConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.01;
  int64_t total_steps = 0;
  double warmup_ratio = 0.1;
};

// Linear warmup over warmup_ratio * total_steps, then linear decay to zero at
// the final step. Steps are 1-based.
inline double lr_at_step(const OptimizerConfig& cfg, int64_t step) {
  if (cfg.total_steps <= 0) return cfg.lr;
  int64_t warmup = static_cast<int64_t>(cfg.warmup_ratio * static_cast<double>(cfg.total_steps));
  if (warmup < 1) warmup = 1;
  if (warmup >= cfg.total_steps) return cfg.lr;
  if (step <= warmup) return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup);
  return cfg.lr * static_cast<double>(cfg.total_steps - step) /
         static_cast<double>(cfg.total_steps - warmup);
}

struct OptimizerState {
  ModelParams m;  // first moments, same shapes as the parameters
  ModelParams v;  // second moments
  int64_t step = 0;

  static OptimizerState init(const ModelConfig& cfg) {
    OptimizerState s;
    s.m = ModelParams::shaped(cfg);
    s.v = ModelParams::shaped(cfg);
    s.step = 0;
    return s;
  }
};

// Decoupled AdamW: moments from raw gradients, weight decay applied straight
// to the parameters at the scheduled rate.
inline double adamw_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                         const OptimizerConfig& cfg) {
  state.step += 1;
  const double lr = lr_at_step(cfg, state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  // walk the three mirrors in lockstep; visit order is fixed
  std::vector<Tensor*> gs, ms, vs;
  const_cast<ModelParams&>(grads).visit([&](const std::string&, Tensor& t) { gs.push_back(&t); });
  state.m.visit([&](const std::string&, Tensor& t) { ms.push_back(&t); });
  state.v.visit([&](const std::string&, Tensor& t) { vs.push_back(&t); });
  size_t idx = 0;
  params.visit([&](const std::string&, Tensor& p) {
    Tensor& g = *gs[idx];
    Tensor& m = *ms[idx];
    Tensor& v = *vs[idx];
    ++idx;
    for (size_t i = 0; i < p.size(); ++i) {
      const double gi = g.v[i];
      m.v[i] = cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * gi;
      v.v[i] = cfg.beta2 * v.v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      p.v[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p.v[i]);
    }
  });
  return lr;
}

}  // namespace weblm
