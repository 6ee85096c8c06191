#include "sactext/nn/adam.hpp"

#include <cmath>

#include "sactext/common/errors.hpp"

namespace sactext::nn {

double global_grad_norm(const ParameterStore& store, std::span<const ParamId> group) {
  double sq = 0.0;
  for (ParamId id : group) {
    for (double g : store[id].grad) sq += g * g;
  }
  return std::sqrt(sq);
}

AdamReport adam_step(ParameterStore& store, std::span<const ParamId> group, const AdamConfig& config) {
  for (ParamId id : group) {
    for (double g : store[id].grad) {
      if (!std::isfinite(g)) throw TrainingAbort("non-finite gradient in parameter '" + store[id].name + "'");
    }
  }
  AdamReport report;
  report.grad_norm = global_grad_norm(store, group);
  if (config.max_grad_norm > 0.0 && report.grad_norm > config.max_grad_norm) {
    report.clip_scale = config.max_grad_norm / report.grad_norm;
  }
  for (ParamId id : group) {
    Parameter& p = store[id];
    p.adam_steps += 1;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(p.adam_steps));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(p.adam_steps));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i] * report.clip_scale;
      p.m[i] = config.beta1 * p.m[i] + (1.0 - config.beta1) * g;
      p.v[i] = config.beta2 * p.v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = p.m[i] / c1;
      const double v_hat = p.v[i] / c2;
      p.value[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
      p.grad[i] = 0.0;
    }
  }
  return report;
}

AdamReport adam_step(ParameterStore& store, const AdamConfig& config) {
  const auto ids = store.all_ids();
  return adam_step(store, ids, config);
}

}  // namespace sactext::nn
