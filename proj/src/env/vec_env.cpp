#include "sactext/env/vec_env.hpp"

#include "sactext/common/errors.hpp"

namespace sactext::env {

EnvInstance::EnvInstance(const Playground& world, std::uint64_t seed) : world_(&world), rng_(seed) {
  reset();
}

void EnvInstance::reset() {
  goal_ = sample_goal(world_->goals(), rng_);
  state_ = world_->generate_scene(goal_, rng_.next());
  actions_ = world_->actions(state_);
  auto texts = std::make_shared<std::vector<std::string>>();
  for (const auto& a : actions_) texts->push_back(a.text);
  texts_ = std::move(texts);
  current_ = EpisodeRecord{};
  current_.goal = goal_;
  current_.states.push_back(state_);
  current_.action_texts = texts_;
}

EnvInstance::Outcome EnvInstance::step(int action_index) {
  if (action_index < 0 || action_index >= static_cast<int>(actions_.size())) {
    throw InvalidActionError("action index " + std::to_string(action_index) + " out of range");
  }
  auto result = world_->step(state_, actions_[static_cast<std::size_t>(action_index)], goal_);
  state_ = std::move(result.state);
  current_.actions.push_back(action_index);
  current_.rewards.push_back(result.reward);
  current_.states.push_back(state_);
  Outcome out{result.reward, result.done, std::nullopt};
  if (result.done) {
    current_.success = result.reward > 0.0;
    out.episode = std::move(current_);
    reset();
  }
  return out;
}

VecEnv::VecEnv(const Playground& world, int num_envs, std::uint64_t master_seed) {
  if (num_envs < 1) throw ConfigError("num_envs must be at least 1");
  envs_.reserve(static_cast<std::size_t>(num_envs));
  for (int i = 0; i < num_envs; ++i) {
    envs_.emplace_back(world, derive_seed(master_seed, static_cast<std::uint64_t>(i)));
  }
}

}  // namespace sactext::env
