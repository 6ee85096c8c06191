#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sactext/replay/replay.hpp"
#include "sactext/sac/sac.hpp"

namespace sactext::testing {

/// One state, two actions: "pull left" pays 1, "pull right" pays 0, and every step is terminal.
struct Bandit {
  static constexpr const char* kPrompt = "Goal: pull the best lever\nAction: ";

  std::shared_ptr<const std::vector<std::string>> candidates =
      std::make_shared<const std::vector<std::string>>(std::vector<std::string>{"pull left", "pull right"});

  static policy::Tokenizer tokenizer() { return policy::Tokenizer({"goal", "pull", "the", "best", "lever", "action", "left", "right"}); }

  replay::Transition transition(int action) const {
    replay::Transition t;
    t.prompt = kPrompt;
    t.action = action;
    t.action_text = candidates->at(static_cast<std::size_t>(action));
    t.nstep_reward = action == 0 ? 1.0 : 0.0;
    t.bootstrap_prompt = kPrompt;
    t.candidates = candidates;
    t.effective_n = 1;
    t.terminal = true;
    return t;
  }

  static sac::SacConfig config() {
    sac::SacConfig c;
    c.batch_size = 32;
    c.actor_lr = 1e-3;
    c.critic_lr = 1e-3;
    c.auto_alpha = false;
    c.alpha_init = 0.01;
    c.warmup_steps = 0;
    c.buffer_capacity = 1000;
    return c;
  }

  static policy::ScorerConfig scorer_config() { return {16, 32, 6}; }
  static critic::CriticConfig critic_config() {
    critic::CriticConfig c;
    c.head_hidden = 32;
    return c;
  }
};

struct BanditOutcome {
  std::vector<double> q1;
  std::vector<double> q2;
  std::vector<double> pi;
  int updates = 0;
};

/// Train on a fixed buffer holding both actions equally often. Returns the final estimates.
inline BanditOutcome train_bandit(int updates, std::uint64_t seed) {
  Bandit bandit;
  sac::SacAgent agent(Bandit::config(), Bandit::scorer_config(), Bandit::tokenizer(), Bandit::critic_config(), 2, seed);
  replay::ReplayBuffer buffer(1000);
  for (int i = 0; i < 200; ++i) buffer.add(bandit.transition(i % 2));
  Rng rng(seed + 1);
  const auto& cfg = agent.config();
  for (int u = 0; u < updates; ++u) {
    const auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch_size), cfg.sampling, rng);
    agent.update_critic(batch);
    agent.update_actor_and_alpha(batch);
    agent.update_target();
  }
  BanditOutcome out;
  out.q1 = agent.critic().q_values(agent.store(), Bandit::kPrompt, *bandit.candidates, 0);
  out.q2 = agent.critic().q_values(agent.store(), Bandit::kPrompt, *bandit.candidates, 1);
  out.pi = agent.policy(Bandit::kPrompt, *bandit.candidates);
  out.updates = updates;
  return out;
}

}  // namespace sactext::testing
