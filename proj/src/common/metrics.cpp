#include "sactext/common/metrics.hpp"

namespace sactext {

void SuccessTracker::push(std::deque<bool>& xs, bool x) const {
  xs.push_back(x);
  if (xs.size() > window_) xs.pop_front();
}

void SuccessTracker::record(env::GoalKind kind, bool success) {
  ++episodes_;
  push(all_, success);
  push(by_type_[static_cast<std::size_t>(kind)], success);
}

std::optional<double> SuccessTracker::mean(const std::deque<bool>& xs) {
  if (xs.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (bool x : xs) hits += x ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(xs.size());
}

}  // namespace sactext
