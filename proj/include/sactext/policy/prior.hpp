#pragma once

#include <cstdint>

#include "sactext/env/playground.hpp"
#include "sactext/policy/scorer.hpp"

namespace sactext::policy {

struct PriorFitConfig {
  int steps = 200;
  int batch = 16;
  double learning_rate = 1e-3;
};

struct PriorFitReport {
  int steps = 0;
  /// Mean KL(uniform || pi) over the last batch.
  double final_kl = 0.0;
};

/// Fits the scorer so that every valid action of sampled observations is equally likely.
/// Observations come from random goals, scenes and random-walk prefixes; no rewards are used.
/// Adam state of the fitted parameters is reset afterwards.
PriorFitReport fit_uniform_prior(const Scorer& scorer, nn::ParameterStore& store, const env::Playground& world,
                                 const PriorFitConfig& config, std::uint64_t seed);

/// Mean KL(uniform || pi) over `samples` sampled observations.
double prior_gap(const Scorer& scorer, const nn::ParameterStore& store, const env::Playground& world, int samples,
                 std::uint64_t seed);

}  // namespace sactext::policy
