#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sactext/common/metrics.hpp"
#include "sactext/critic/critic.hpp"
#include "sactext/env/vec_env.hpp"
#include "sactext/nn/adam.hpp"
#include "sactext/policy/prior.hpp"
#include "sactext/policy/scorer.hpp"
#include "sactext/replay/replay.hpp"

namespace sactext::sac {

struct SacConfig {
  double gamma = 0.99;
  /// Environment steps per env between update phases.
  int update_frequency = 32;
  int updates_per_cycle = 2;
  int batch_size = 256;
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double alpha_lr = 2e-3;
  double alpha_init = 0.005;
  double target_entropy = 0.0;
  /// When false, alpha stays at alpha_init.
  bool auto_alpha = true;
  /// Total environment steps (all envs) before the actor and alpha start updating.
  long warmup_steps = 5000;
  int n_step = 3;
  std::size_t buffer_capacity = 100000;
  bool her = false;
  replay::SamplingOptions sampling;
  /// 0 disables clipping.
  double max_grad_norm = 0.0;
  /// Batch gradients are reduced over this many fixed chunks, so results do not depend on threads.
  int grad_chunks = 4;
  int threads = 1;
  /// Uniform-prior fit of the fresh scorer before any interaction.
  policy::PriorFitConfig prior;

  /// alpha 0.05 with target entropy 0.01, ratio sampling at one half.
  static SacConfig with_her();
  void validate() const;
};

/// Optimizer statistics of one update call.
struct UpdateStats {
  double loss = 0.0;
  double grad_norm = 0.0;
  double mean_entropy = 0.0;  // actor updates only
  double mean_q = 0.0;        // critic updates only
};

/// Scorer, critic, target copy and temperature: everything a discrete SAC update touches.
class SacAgent {
 public:
  SacAgent(SacConfig config, policy::ScorerConfig scorer_config, policy::Tokenizer tokenizer,
           critic::CriticConfig critic_config, int action_count, std::uint64_t init_seed);

  SacAgent(const SacAgent&) = delete;
  SacAgent& operator=(const SacAgent&) = delete;

  const SacConfig& config() const { return config_; }
  const policy::Scorer& scorer() const { return *scorer_; }
  const critic::Critic& critic() const { return *critic_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  nn::ParameterStore& target_store() { return target_; }
  const nn::ParameterStore& target_store() const { return target_; }
  nn::ParameterStore& alpha_store() { return alpha_store_; }

  double alpha() const;
  void set_alpha(double alpha);

  /// Parameters stepped by the critic update: critic heads, plus the encoder when critic
  /// gradients are shared with it.
  const std::vector<nn::ParamId>& critic_group() const { return critic_group_; }
  /// Parameters stepped by the actor update: the token head and the encoder.
  const std::vector<nn::ParamId>& actor_group() const { return actor_group_; }
  /// Parameters only the actor update touches (the token head).
  const std::vector<nn::ParamId>& actor_exclusive() const { return scorer_->actor_head_ids(); }
  /// Parameters mirrored in the target copy.
  const std::vector<nn::ParamId>& target_group() const { return target_group_; }

  std::vector<double> policy(std::string_view prompt, std::span<const std::string> candidates) const;

  /// n-step soft target; the expectation over bootstrap actions is exact. Twin heads use the
  /// elementwise minimum.
  double critic_target(const replay::Transition& t, double alpha) const;
  std::vector<double> critic_targets(std::span<const replay::Transition* const> batch, double alpha) const;

  /// Sum over heads of (Q(s, a) - y)^2 for one transition.
  nn::Var critic_loss_term(nn::Tape& tape, const replay::Transition& t, double y) const;
  /// Online critic values at the transition's state (minimum over heads), off the tape.
  std::vector<double> actor_q(const replay::Transition& t) const;
  /// sum_a pi(a|s) (alpha log pi(a|s) - q[a]) for one transition, with q held constant.
  /// Writes the policy entropy at s to `entropy` when given.
  nn::Var actor_loss_term(nn::Tape& tape, const replay::Transition& t, double alpha, std::span<const double> q,
                          double* entropy = nullptr) const;
  nn::Var actor_loss_term(nn::Tape& tape, const replay::Transition& t, double alpha,
                          double* entropy = nullptr) const {
    return actor_loss_term(tape, t, alpha, actor_q(t), entropy);
  }

  /// Mean over the batch of critic_loss_term against freshly computed targets, then one Adam step.
  UpdateStats update_critic(std::span<const replay::Transition* const> batch);
  /// Mean actor loss, one Adam step, then one alpha step when auto_alpha is set.
  UpdateStats update_actor_and_alpha(std::span<const replay::Transition* const> batch);
  /// d J / d log(alpha) for J(alpha) = alpha (mean_entropy - target_entropy).
  double alpha_gradient(double mean_entropy) const;
  void alpha_step(double mean_entropy);
  void update_target();
  /// Copy every online parameter into the target.
  void sync_target();

 private:
  template <class TermFn>
  double accumulate(std::span<const replay::Transition* const> batch, const TermFn& term);

  SacConfig config_;
  nn::ParameterStore store_;
  nn::ParameterStore target_;
  nn::ParameterStore alpha_store_;
  nn::ParamId log_alpha_ = 0;
  std::unique_ptr<policy::Scorer> scorer_;
  std::unique_ptr<critic::Critic> critic_;
  std::vector<nn::ParamId> critic_group_;
  std::vector<nn::ParamId> actor_group_;
  std::vector<nn::ParamId> target_group_;
};

/// Synchronous collect/update loop over a batch of environments.
class SacTrainer {
 public:
  SacTrainer(const env::Playground& world, SacConfig config, policy::ScorerConfig scorer_config,
             critic::CriticConfig critic_config, int num_envs, std::uint64_t seed);

  /// Collect update_frequency steps in every env, then run the update phase.
  CycleMetrics run_cycle();

  long env_steps() const { return env_steps_; }
  long updates() const { return updates_; }
  /// A cycle that starts before warmup_steps only updates the critic.
  bool in_warmup() const { return env_steps_ < agent_.config().warmup_steps; }
  SacAgent& agent() { return agent_; }
  const SacAgent& agent() const { return agent_; }
  const replay::ReplayBuffer& buffer() const { return buffer_; }
  const SuccessTracker& tracker() const { return tracker_; }

 private:
  const env::Playground* world_;
  SacAgent agent_;
  env::VecEnv envs_;
  replay::ReplayBuffer buffer_;
  SuccessTracker tracker_;
  Rng act_rng_;
  Rng sample_rng_;
  long env_steps_ = 0;
  long updates_ = 0;
  long cycle_ = 0;
};

}  // namespace sactext::sac
