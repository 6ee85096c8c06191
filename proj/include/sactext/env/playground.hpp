#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sactext/common/rng.hpp"

namespace sactext::env {

enum class Category : std::uint8_t { furniture, supply, plant, animal };

std::string_view to_string(Category category);
Category parse_category(std::string_view name);

struct KindInfo {
  std::string name;
  Category category;
  bool operator==(const KindInfo&) const = default;
};

/// Colors and object kinds of the world. Kind and color indices are positions in these lists.
///
/// Supply compatibility: a supply named "water" grows plants and animals; any other supply
/// (the standard lexicon has "food") grows animals only.
class Lexicon {
 public:
  Lexicon(std::vector<std::string> colors, std::vector<KindInfo> kinds);

  /// 3 colors x {10 animals, 10 plants, 10 furniture, water, food}.
  static Lexicon standard();

  /// Key-value text: `colors = red, green, blue` plus one `kind = category` line per kind.
  /// Blank lines and lines starting with '#' are ignored.
  static Lexicon parse(std::string_view text);
  static Lexicon load(const std::filesystem::path& path);
  std::string serialize() const;

  const std::vector<std::string>& colors() const { return colors_; }
  const std::vector<KindInfo>& kinds() const { return kinds_; }
  std::size_t descriptor_count() const { return colors_.size() * kinds_.size(); }

  Category category(int kind) const { return kinds_.at(static_cast<std::size_t>(kind)).category; }
  const std::string& kind_name(int kind) const { return kinds_.at(static_cast<std::size_t>(kind)).name; }
  const std::string& color_name(int color) const { return colors_.at(static_cast<std::size_t>(color)); }
  bool growable(int kind) const;
  /// True when releasing `supply_kind` on an ungrown `target_kind` grows it.
  bool feeds(int supply_kind, int target_kind) const;

  std::optional<int> find_color(std::string_view name) const;
  std::optional<int> find_kind(std::string_view name) const;

  bool operator==(const Lexicon&) const = default;

 private:
  std::vector<std::string> colors_;
  std::vector<KindInfo> kinds_;
};

/// An object description: color plus kind. Unique within a scene.
struct Descriptor {
  int color = 0;
  int kind = 0;
  auto operator<=>(const Descriptor&) const = default;
};

enum class GoalKind : std::uint8_t { grasp, grow, seq_grow_grasp, seq_grow_grow };
inline constexpr std::size_t kGoalKindCount = 4;
std::string_view to_string(GoalKind kind);
GoalKind parse_goal_kind(std::string_view name);

struct Goal {
  GoalKind kind = GoalKind::grasp;
  Descriptor first;
  std::optional<Descriptor> second;

  static Goal grasp(Descriptor d) { return {GoalKind::grasp, d, std::nullopt}; }
  static Goal grow(Descriptor d) { return {GoalKind::grow, d, std::nullopt}; }
  static Goal grow_then_grasp(Descriptor a, Descriptor b) { return {GoalKind::seq_grow_grasp, a, b}; }
  static Goal grow_then_grow(Descriptor a, Descriptor b) { return {GoalKind::seq_grow_grow, a, b}; }

  bool sequential() const {
    return kind == GoalKind::seq_grow_grasp || kind == GoalKind::seq_grow_grow;
  }
  auto operator<=>(const Goal&) const = default;
};

struct ObjectInstance {
  int id = 0;
  int color = 0;
  int kind = 0;
  Category category = Category::furniture;
  bool grown = false;

  Descriptor descriptor() const { return {color, kind}; }
  bool operator==(const ObjectInstance&) const = default;
};

struct Achievement {
  Goal goal;
  int step = 0;
  auto operator<=>(const Achievement&) const = default;
};

struct WorldState {
  std::vector<ObjectInstance> objects;
  std::optional<int> agent_on;
  std::optional<int> holding;
  std::vector<int> grown_set;
  int step_count = 0;
  /// Grasp and grow events as they happen, plus each sequential goal at its first completion.
  std::vector<Achievement> achieved_log;

  std::optional<int> find(Descriptor d) const;
  bool operator==(const WorldState&) const = default;
};

enum class ActionKind : std::uint8_t { go_to, grasp, release };

struct ActionSpec {
  ActionKind kind = ActionKind::grasp;
  std::optional<int> target;
  std::string text;
  bool operator==(const ActionSpec&) const = default;
};

struct StepResult {
  WorldState state;
  double reward = 0.0;
  bool done = false;
};

struct EnvConfig {
  int n_objects = 6;
  int horizon = 20;
  bool include_sequential = true;

  /// Three objects and no sequential goals.
  static EnvConfig simplified() { return {3, 20, false}; }
};

/// Every well-formed goal over the lexicon, in a fixed order: grasp, grow, then (optionally)
/// grow-then-grasp and grow-then-grow. Growing the same object twice is not a goal.
std::vector<Goal> enumerate_goals(const Lexicon& lexicon, bool include_sequential);

/// Uniform draw. Throws ConfigError on an empty list.
const Goal& sample_goal(const std::vector<Goal>& goals, Rng& rng);

bool goal_satisfied(const WorldState& state, const Goal& goal);

/// Fraction of each GoalKind in a goal list.
std::vector<double> goal_kind_proportions(const std::vector<Goal>& goals);

/// The text-world simulator. Pure: every operation maps values to values.
class Playground {
 public:
  Playground(Lexicon lexicon, EnvConfig config);

  const Lexicon& lexicon() const { return lexicon_; }
  const EnvConfig& config() const { return config_; }
  /// The goal space of this configuration.
  const std::vector<Goal>& goals() const { return goals_; }

  std::string describe(Descriptor d) const;
  std::string describe(const ObjectInstance& object) const { return describe(object.descriptor()); }
  std::string goal_text(const Goal& goal) const;
  std::optional<Goal> parse_goal(std::string_view text) const;

  /// Scene for `goal`: the goal's objects, one compatible supply when growing is needed, and
  /// uniformly drawn distractors, shuffled. Throws ConfigError when the goal does not fit.
  WorldState generate_scene(const Goal& goal, int n_objects, std::uint64_t seed) const;
  WorldState generate_scene(const Goal& goal, std::uint64_t seed) const {
    return generate_scene(goal, config_.n_objects, seed);
  }

  /// Go-to for each object in scene order, then Grasp, then Release.
  std::vector<ActionSpec> actions(const WorldState& state) const;

  StepResult step(const WorldState& state, const ActionSpec& action, const Goal& goal) const;

  std::string render_observation(const WorldState& state, const Goal& goal) const;

  /// Goals of this goal space first satisfied along the episode, ordered by (step, goal).
  /// Each entry of `episode` is the state before the action and the action taken.
  std::vector<Achievement> social_partner_achievements(
      const std::vector<std::pair<WorldState, ActionSpec>>& episode) const;

  /// Same as above, read off the final state's log.
  std::vector<Achievement> achievements_from_log(const WorldState& final_state) const;

 private:
  bool in_goal_space(const Goal& goal) const;

  Lexicon lexicon_;
  EnvConfig config_;
  std::vector<Goal> goals_;
};

}  // namespace sactext::env
