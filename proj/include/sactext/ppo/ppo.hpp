#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sactext/common/metrics.hpp"
#include "sactext/critic/critic.hpp"
#include "sactext/env/vec_env.hpp"
#include "sactext/policy/prior.hpp"
#include "sactext/policy/scorer.hpp"

namespace sactext::ppo {

enum class Variant { clip, kl };
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

enum class HerMode { off, plain, aligned, aligned_centered };
std::string_view to_string(HerMode m);
HerMode parse_her_mode(std::string_view name);

struct PpoConfig {
  /// Transitions collected across all envs per update.
  int rollout_length = 2048;
  int epochs = 16;
  int batch_size = 256;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double clip_epsilon = 0.2;
  double gae_lambda = 0.99;
  double gamma = 0.99;
  double learning_rate = 1e-4;
  double max_grad_norm = 0.5;
  Variant variant = Variant::clip;
  double kl_beta = 0.3;
  HerMode her_mode = HerMode::off;
  int value_hidden = 128;
  int grad_chunks = 4;
  int threads = 1;
  policy::PriorFitConfig prior;

  void validate() const;
};

struct Gae {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Generalized advantage estimates for one env's step sequence. dones[t] ends the episode
/// after step t; `bootstrap_value` is V of the state after the last step (ignored if it is done).
Gae gae_advantages(std::span<const double> rewards, std::span<const double> values, const std::vector<bool>& dones,
                   double bootstrap_value, double gamma, double lambda);

/// In place: mean 0 and standard deviation 1 (population); a constant vector becomes zeros.
void normalize(std::vector<double>& xs);

/// KL(p || q) over one candidate set.
double discrete_kl(std::span<const double> p, std::span<const double> q);

/// True iff `sub` is a strict subgoal of `goal`: Grasp(x) under Grow(x); for a sequential goal,
/// its components plus Grasp of every object it grows.
bool aligned_filter(const env::Goal& goal, const env::Goal& sub);

/// -min(r A, clip(r, c - eps, c + eps) A).
nn::Var clip_term(nn::Tape& tape, nn::Var ratio, double advantage, double center, double epsilon);

/// One policy sample of an update.
struct Sample {
  std::string prompt;
  std::shared_ptr<const std::vector<std::string>> candidates;
  int action = 0;
  /// log pi_old(a | s, g) under the goal the action was taken for.
  double old_logprob = 0.0;
  /// pi_old(. | s, g).
  std::vector<double> old_probs;
  double reward = 0.0;
  bool done = false;
  double value = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
  double center = 1.0;
  bool relabeled = false;
  env::GoalKind goal_type = env::GoalKind::grasp;
};

struct Evaluation {
  std::vector<double> log_probs;
  double value = 0.0;
};

struct LossParts {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double ratio = 0.0;
  double kl = 0.0;
};

/// Scorer plus a value head on its encoder code.
class PpoAgent {
 public:
  PpoAgent(PpoConfig config, policy::ScorerConfig scorer_config, policy::Tokenizer tokenizer, std::uint64_t init_seed);

  PpoAgent(const PpoAgent&) = delete;
  PpoAgent& operator=(const PpoAgent&) = delete;

  const PpoConfig& config() const { return config_; }
  const policy::Scorer& scorer() const { return *scorer_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  const std::vector<nn::ParamId>& value_ids() const { return value_->ids(); }

  Evaluation evaluate(std::string_view prompt, std::span<const std::string> candidates) const;
  /// pi_theta(a | sample prompt) / pi_old(a | s, g).
  double importance_ratio(const Sample& s) const;

  /// Per-sample loss: policy term (clip or KL form), minus entropy_coef * entropy, plus
  /// value_coef * (V - return)^2.
  nn::Var loss_term(nn::Tape& tape, const Sample& s, LossParts* parts = nullptr) const;

  /// Mean loss over `batch`, one Adam step. Returns the mean parts.
  LossParts update(std::span<const Sample* const> batch);

 private:
  PpoConfig config_;
  nn::ParameterStore store_;
  std::unique_ptr<policy::Scorer> scorer_;
  std::unique_ptr<critic::MlpHead> value_;
  std::vector<nn::ParamId> all_ids_;
};

/// Ratios and KL of every sample against its stored old policy, measured before the first
/// gradient step of an update.
struct FirstEpochCheck {
  std::size_t samples = 0;
  std::size_t relabeled = 0;
  /// Over rollout samples only.
  double max_ratio_deviation = 0.0;
  double max_kl = 0.0;
  /// Over relabeled samples; 0 when there are none.
  double mean_relabeled_ratio_deviation = 0.0;
};

class PpoTrainer {
 public:
  PpoTrainer(const env::Playground& world, PpoConfig config, policy::ScorerConfig scorer_config, int num_envs,
             std::uint64_t seed);

  /// Collect one rollout, relabel per her_mode, then run the epochs.
  CycleMetrics run_cycle();

  long env_steps() const { return env_steps_; }
  PpoAgent& agent() { return agent_; }
  const SuccessTracker& tracker() const { return tracker_; }
  /// Samples of the last update, rollout first, relabeled after.
  const std::vector<Sample>& last_samples() const { return samples_; }
  const FirstEpochCheck& last_check() const { return check_; }

 private:
  struct Step {
    Sample sample;
    int episode_step = 0;
  };

  void relabel(const env::EpisodeRecord& episode, const std::vector<Step>& steps, std::size_t first);

  const env::Playground* world_;
  PpoAgent agent_;
  env::VecEnv envs_;
  SuccessTracker tracker_;
  Rng act_rng_;
  Rng shuffle_rng_;
  std::vector<Sample> samples_;
  std::vector<Sample> relabeled_;
  FirstEpochCheck check_;
  long env_steps_ = 0;
  long updates_ = 0;
  long cycle_ = 0;
};

}  // namespace sactext::ppo
