#pragma once

#include <array>
#include <deque>
#include <optional>

#include "sactext/env/playground.hpp"

namespace sactext {

/// One record per update cycle. Unset optionals are written as explicit missing values.
struct CycleMetrics {
  long cycle = 0;
  long env_steps = 0;
  long episodes = 0;
  long updates = 0;
  std::optional<double> success_rate;
  std::array<std::optional<double>, env::kGoalKindCount> success_by_type{};
  std::optional<double> entropy;
  std::optional<double> alpha;
  std::optional<double> critic_loss;
  std::optional<double> actor_loss;
  std::optional<double> value_loss;
  std::optional<double> q_mean;
  std::optional<double> buffer_hindsight_fraction;
  std::optional<long> buffer_size;
  bool warmup = false;
};

/// Sliding-window success rates, overall and per goal type.
class SuccessTracker {
 public:
  explicit SuccessTracker(std::size_t window = 100) : window_(window) {}

  void record(env::GoalKind kind, bool success);
  std::optional<double> rate() const { return mean(all_); }
  std::optional<double> rate(env::GoalKind kind) const { return mean(by_type_[static_cast<std::size_t>(kind)]); }
  long episodes() const { return episodes_; }

 private:
  static std::optional<double> mean(const std::deque<bool>& xs);
  void push(std::deque<bool>& xs, bool x) const;

  std::size_t window_;
  long episodes_ = 0;
  std::deque<bool> all_;
  std::array<std::deque<bool>, env::kGoalKindCount> by_type_;
};

}  // namespace sactext
