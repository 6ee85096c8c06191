#include "sactext/policy/prior.hpp"

#include <cmath>

#include "sactext/common/errors.hpp"
#include "sactext/nn/adam.hpp"

namespace sactext::policy {

namespace {

struct Observation {
  std::string prompt;
  std::vector<std::string> actions;
};

Observation sample_observation(const env::Playground& world, Rng& rng) {
  const auto& goal = env::sample_goal(world.goals(), rng);
  auto state = world.generate_scene(goal, rng.next());
  const auto actions = world.actions(state);
  const auto walk = rng.index(static_cast<std::size_t>(world.config().horizon));
  for (std::size_t i = 0; i < walk; ++i) {
    const auto r = world.step(state, actions[rng.index(actions.size())], goal);
    if (r.done) break;
    state = r.state;
  }
  Observation out{world.render_observation(state, goal), {}};
  for (const auto& a : actions) out.actions.push_back(a.text);
  return out;
}

double uniform_kl(nn::Tape& tape, nn::Var logp) {
  const auto& lp = tape.value(logp);
  double mean = 0.0;
  for (double x : lp) mean += x;
  mean /= static_cast<double>(lp.size());
  return -std::log(static_cast<double>(lp.size())) - mean;
}

}  // namespace

PriorFitReport fit_uniform_prior(const Scorer& scorer, nn::ParameterStore& store, const env::Playground& world,
                                 const PriorFitConfig& config, std::uint64_t seed) {
  if (config.steps < 0 || config.batch < 1 || !(config.learning_rate > 0.0)) {
    throw ConfigError("prior fit needs steps >= 0, batch >= 1 and a positive learning rate");
  }
  PriorFitReport report;
  if (config.steps == 0) return report;
  Rng rng(seed);
  std::vector<nn::ParamId> group = scorer.encoder_ids();
  group.insert(group.end(), scorer.actor_head_ids().begin(), scorer.actor_head_ids().end());
  const nn::AdamConfig adam{.learning_rate = config.learning_rate};
  store.zero_grad();
  for (int step = 0; step < config.steps; ++step) {
    double kl = 0.0;
    for (int b = 0; b < config.batch; ++b) {
      const auto obs = sample_observation(world, rng);
      nn::Tape tape(store);
      const auto logp = scorer.policy_log_probs(tape, store, scorer.tokenize_prompt(obs.prompt),
                                                scorer.tokenize_actions(obs.actions));
      kl += uniform_kl(tape, logp);
      const double w = -1.0 / (static_cast<double>(config.batch) * static_cast<double>(obs.actions.size()));
      tape.backward(nn::scale(tape, nn::sum(tape, logp), w));
    }
    nn::adam_step(store, group, adam);
    report.final_kl = kl / config.batch;
    ++report.steps;
  }
  for (auto id : group) {
    auto& p = store[id];
    std::fill(p.m.begin(), p.m.end(), 0.0);
    std::fill(p.v.begin(), p.v.end(), 0.0);
    p.adam_steps = 0;
  }
  return report;
}

double prior_gap(const Scorer& scorer, const nn::ParameterStore& store, const env::Playground& world, int samples,
                 std::uint64_t seed) {
  Rng rng(seed);
  double kl = 0.0;
  for (int i = 0; i < samples; ++i) {
    const auto obs = sample_observation(world, rng);
    nn::Tape tape;
    kl += uniform_kl(tape, scorer.policy_log_probs(tape, store, scorer.tokenize_prompt(obs.prompt),
                                                   scorer.tokenize_actions(obs.actions)));
  }
  return samples > 0 ? kl / samples : 0.0;
}

}  // namespace sactext::policy
