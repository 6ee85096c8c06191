#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sactext/env/playground.hpp"
#include "sactext/env/vec_env.hpp"

namespace sactext::replay {

/// One stored step with its n-step aggregate. Candidates are the scene's action texts, which
/// are the same at the step and at its bootstrap step.
struct Transition {
  std::string prompt;
  env::Goal goal;
  int action = 0;
  std::string action_text;
  double nstep_reward = 0.0;
  std::string bootstrap_prompt;
  std::shared_ptr<const std::vector<std::string>> candidates;
  int effective_n = 1;
  /// The segment ended inside the n-step window; no bootstrap term applies.
  bool terminal = false;
  bool hindsight = false;
  env::GoalKind goal_type = env::GoalKind::grasp;
};

struct NStep {
  double reward = 0.0;
  int effective_n = 1;
  bool terminal = false;
};

/// n-step aggregate for step t of a segment with the given rewards. The segment ends at
/// rewards.size(), and that end is terminal (success or horizon).
NStep nstep_at(std::span<const double> rewards, int t, int n, double gamma);

/// Transitions for an episode: the original goal at every step, then one relabeled segment
/// (steps 0..t') for each achievement (g', t') with g' != the episode goal, in the order given.
std::vector<Transition> ingest_episode(const env::Playground& world, const env::EpisodeRecord& episode,
                                       std::span<const env::Achievement> achievements, int n, double gamma);

enum class Sampling { uniform, ratio, prior };
std::string_view to_string(Sampling s);
Sampling parse_sampling(std::string_view name);

struct Composition {
  std::size_t size = 0;
  std::size_t hindsight = 0;
  std::array<std::size_t, env::kGoalKindCount> by_goal_type{};

  double hindsight_fraction() const { return size ? double(hindsight) / double(size) : 0.0; }
  double goal_type_fraction(env::GoalKind kind) const {
    return size ? double(by_goal_type[static_cast<std::size_t>(kind)]) / double(size) : 0.0;
  }
};

struct SamplingOptions {
  Sampling strategy = Sampling::uniform;
  /// ratio: share of each batch drawn from hindsight transitions.
  double hindsight_proportion = 0.5;
  /// prior: target goal-type distribution, indexed by GoalKind.
  std::array<double, env::kGoalKindCount> goal_type_target{};
};

/// FIFO ring buffer with per-pool indices for stratified sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(Transition t);
  void add(std::vector<Transition> ts);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }
  std::uint64_t total_inserted() const { return inserted_; }
  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const;
  /// Insertion number of the i-th oldest transition.
  std::uint64_t insertion_index(std::size_t i) const { return inserted_ - size_ + i; }

  /// uniform: i.i.d. over the buffer. ratio: ceil(B * p) hindsight and the rest environment
  /// transitions, each drawn without replacement within its pool; a short pool is taken whole
  /// and the other pool tops the batch up. prior: per-type counts stratified to the target
  /// (floor allocation, remainders drawn in proportion), i.i.d. within a type; types with no
  /// stored transitions are replaced by uniform draws. Throws ContractError if B > size().
  std::vector<const Transition*> sample(std::size_t batch, const SamplingOptions& options, Rng& rng) const;

  Composition composition() const;

  /// One JSON object per line, oldest first.
  void dump(const std::filesystem::path& path, const env::Playground& world) const;
  static ReplayBuffer load(const std::filesystem::path& path, const env::Playground& world, std::size_t capacity);

 private:
  struct Pool {
    std::vector<std::size_t> members;  // slot ids
    void insert(std::size_t slot, std::vector<std::size_t>& pos);
    void erase(std::size_t slot, std::vector<std::size_t>& pos);
  };

  void index(std::size_t slot);
  void unindex(std::size_t slot);
  std::size_t draw_from(const Pool& pool, Rng& rng) const { return pool.members[rng.index(pool.members.size())]; }

  std::vector<Transition> slots_;
  std::size_t head_ = 0;  // next slot to write
  std::size_t size_ = 0;
  std::uint64_t inserted_ = 0;
  std::array<Pool, 2> by_hindsight_;
  std::array<Pool, env::kGoalKindCount> by_type_;
  std::vector<std::size_t> hindsight_pos_;
  std::vector<std::size_t> type_pos_;
};

}  // namespace sactext::replay
