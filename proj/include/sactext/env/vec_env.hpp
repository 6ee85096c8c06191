#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sactext/env/playground.hpp"

namespace sactext::env {

/// One finished episode: states[t] is the state before actions[t]; states.back() is final.
struct EpisodeRecord {
  Goal goal;
  std::vector<WorldState> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  /// Action texts of the scene. Scenes are static, so the list is the same at every step.
  std::shared_ptr<const std::vector<std::string>> action_texts;
  bool success = false;

  int length() const { return static_cast<int>(actions.size()); }
};

/// A single self-resetting environment with its own random stream for goals and scenes.
class EnvInstance {
 public:
  EnvInstance(const Playground& world, std::uint64_t seed);

  const WorldState& state() const { return state_; }
  const Goal& goal() const { return goal_; }
  const std::vector<ActionSpec>& actions() const { return actions_; }
  const std::shared_ptr<const std::vector<std::string>>& action_texts() const { return texts_; }
  std::string observation() const { return world_->render_observation(state_, goal_); }
  const EpisodeRecord& current() const { return current_; }

  struct Outcome {
    double reward = 0.0;
    bool done = false;
    std::optional<EpisodeRecord> episode;  // set when the step ended the episode
  };

  /// Apply an action from actions(); on episode end, returns the record and starts a new episode.
  Outcome step(int action_index);

 private:
  void reset();

  const Playground* world_;
  Rng rng_;
  Goal goal_;
  WorldState state_;
  std::vector<ActionSpec> actions_;
  std::shared_ptr<const std::vector<std::string>> texts_;
  EpisodeRecord current_;
};

/// A batch of environments stepped together. Per-env streams come from one master seed.
class VecEnv {
 public:
  VecEnv(const Playground& world, int num_envs, std::uint64_t master_seed);

  std::size_t size() const { return envs_.size(); }
  EnvInstance& operator[](std::size_t i) { return envs_[i]; }
  const EnvInstance& operator[](std::size_t i) const { return envs_[i]; }

 private:
  std::vector<EnvInstance> envs_;
};

}  // namespace sactext::env
