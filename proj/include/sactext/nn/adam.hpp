#pragma once

#include <span>

#include "sactext/nn/parameters.hpp"

namespace sactext::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global-norm clipping threshold over the updated group; 0 disables clipping.
  double max_grad_norm = 0.0;
};

struct AdamReport {
  double grad_norm = 0.0;  // before clipping
  double clip_scale = 1.0;
};

double global_grad_norm(const ParameterStore& store, std::span<const ParamId> group);

/// Clip, apply one bias-corrected Adam step to every parameter in `group`, then zero their
/// gradients. Throws TrainingAbort on a non-finite gradient, leaving parameters untouched.
AdamReport adam_step(ParameterStore& store, std::span<const ParamId> group, const AdamConfig& config);
AdamReport adam_step(ParameterStore& store, const AdamConfig& config);

}  // namespace sactext::nn
