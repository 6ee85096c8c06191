#include "sactext/env/playground.hpp"

#include <algorithm>
#include <tuple>
#include <sstream>

#include "sactext/common/errors.hpp"

namespace sactext::env {
namespace {

std::vector<Descriptor> all_descriptors(const Lexicon& lexicon) {
  std::vector<Descriptor> out;
  out.reserve(lexicon.descriptor_count());
  for (int c = 0; c < static_cast<int>(lexicon.colors().size()); ++c) {
    for (int k = 0; k < static_cast<int>(lexicon.kinds().size()); ++k) out.push_back({c, k});
  }
  return out;
}

std::optional<int> event_step(const WorldState& state, const Goal& event, int after = -1) {
  for (const auto& a : state.achieved_log) {
    if (a.step > after && a.goal == event) return a.step;
  }
  return std::nullopt;
}

bool logged(const WorldState& state, const Goal& goal) {
  return std::any_of(state.achieved_log.begin(), state.achieved_log.end(),
                     [&](const Achievement& a) { return a.goal == goal; });
}

std::string join(const std::vector<std::string>& items) {
  if (items.empty()) return "nothing";
  std::string out = items.front();
  for (std::size_t i = 1; i < items.size(); ++i) out += ", " + items[i];
  return out;
}

}  // namespace

std::string_view to_string(GoalKind kind) {
  switch (kind) {
    case GoalKind::grasp: return "grasp";
    case GoalKind::grow: return "grow";
    case GoalKind::seq_grow_grasp: return "seq_grow_grasp";
    case GoalKind::seq_grow_grow: return "seq_grow_grow";
  }
  return "?";
}

GoalKind parse_goal_kind(std::string_view name) {
  for (std::size_t i = 0; i < kGoalKindCount; ++i) {
    const auto kind = static_cast<GoalKind>(i);
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown goal kind '" + std::string(name) + "'");
}

std::optional<int> WorldState::find(Descriptor d) const {
  for (const auto& o : objects) {
    if (o.descriptor() == d) return o.id;
  }
  return std::nullopt;
}

std::vector<Goal> enumerate_goals(const Lexicon& lexicon, bool include_sequential) {
  const auto descriptors = all_descriptors(lexicon);
  std::vector<Descriptor> growable;
  for (const auto& d : descriptors) {
    if (lexicon.growable(d.kind)) growable.push_back(d);
  }
  std::vector<Goal> goals;
  for (const auto& d : descriptors) goals.push_back(Goal::grasp(d));
  for (const auto& d : growable) goals.push_back(Goal::grow(d));
  if (include_sequential) {
    for (const auto& a : growable) {
      for (const auto& b : descriptors) goals.push_back(Goal::grow_then_grasp(a, b));
    }
    for (const auto& a : growable) {
      for (const auto& b : growable) {
        if (a != b) goals.push_back(Goal::grow_then_grow(a, b));
      }
    }
  }
  return goals;
}

const Goal& sample_goal(const std::vector<Goal>& goals, Rng& rng) {
  if (goals.empty()) throw ConfigError("cannot sample from an empty goal list");
  return goals[rng.index(goals.size())];
}

bool goal_satisfied(const WorldState& state, const Goal& goal) {
  switch (goal.kind) {
    case GoalKind::grasp:
      return state.holding &&
             state.objects[static_cast<std::size_t>(*state.holding)].descriptor() == goal.first;
    case GoalKind::grow: {
      const auto id = state.find(goal.first);
      return id && state.objects[static_cast<std::size_t>(*id)].grown;
    }
    case GoalKind::seq_grow_grasp: {
      const auto first = event_step(state, Goal::grow(goal.first));
      return first && event_step(state, Goal::grasp(*goal.second), *first).has_value();
    }
    case GoalKind::seq_grow_grow: {
      const auto first = event_step(state, Goal::grow(goal.first));
      return first && event_step(state, Goal::grow(*goal.second), *first).has_value();
    }
  }
  return false;
}

std::vector<double> goal_kind_proportions(const std::vector<Goal>& goals) {
  std::vector<double> p(kGoalKindCount, 0.0);
  for (const auto& g : goals) p[static_cast<std::size_t>(g.kind)] += 1.0;
  if (!goals.empty()) {
    for (auto& x : p) x /= static_cast<double>(goals.size());
  }
  return p;
}

Playground::Playground(Lexicon lexicon, EnvConfig config)
    : lexicon_(std::move(lexicon)), config_(config),
      goals_(enumerate_goals(lexicon_, config.include_sequential)) {
  if (config_.n_objects < 1) throw ConfigError("n_objects must be at least 1");
  if (config_.horizon < 1) throw ConfigError("horizon must be at least 1");
}

bool Playground::in_goal_space(const Goal& goal) const {
  return config_.include_sequential || !goal.sequential();
}

std::string Playground::describe(Descriptor d) const {
  return lexicon_.color_name(d.color) + " " + lexicon_.kind_name(d.kind);
}

std::string Playground::goal_text(const Goal& goal) const {
  switch (goal.kind) {
    case GoalKind::grasp: return "Grasp " + describe(goal.first);
    case GoalKind::grow: return "Grow " + describe(goal.first);
    case GoalKind::seq_grow_grasp:
      return "Grow " + describe(goal.first) + " then grasp " + describe(*goal.second);
    case GoalKind::seq_grow_grow:
      return "Grow " + describe(goal.first) + " then grow " + describe(*goal.second);
  }
  return {};
}

std::optional<Goal> Playground::parse_goal(std::string_view text) const {
  std::istringstream in{std::string(text)};
  std::vector<std::string> w;
  for (std::string s; in >> s;) w.push_back(s);
  auto descriptor = [&](std::size_t i) -> std::optional<Descriptor> {
    if (i + 1 >= w.size()) return std::nullopt;
    const auto c = lexicon_.find_color(w[i]);
    const auto k = lexicon_.find_kind(w[i + 1]);
    if (!c || !k) return std::nullopt;
    return Descriptor{*c, *k};
  };
  if (w.size() == 3 && (w[0] == "Grasp" || w[0] == "Grow")) {
    const auto d = descriptor(1);
    if (!d) return std::nullopt;
    if (w[0] == "Grasp") return Goal::grasp(*d);
    if (!lexicon_.growable(d->kind)) return std::nullopt;
    return Goal::grow(*d);
  }
  if (w.size() == 7 && w[0] == "Grow" && w[3] == "then") {
    const auto a = descriptor(1);
    const auto b = descriptor(5);
    if (!a || !b || !lexicon_.growable(a->kind)) return std::nullopt;
    if (w[4] == "grasp") return Goal::grow_then_grasp(*a, *b);
    if (w[4] == "grow" && lexicon_.growable(b->kind) && *a != *b) return Goal::grow_then_grow(*a, *b);
  }
  return std::nullopt;
}

WorldState Playground::generate_scene(const Goal& goal, int n_objects, std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<Descriptor> scene{goal.first};
  if (goal.second && *goal.second != goal.first) scene.push_back(*goal.second);

  std::vector<int> grow_targets;
  if (goal.kind != GoalKind::grasp) grow_targets.push_back(goal.first.kind);
  if (goal.kind == GoalKind::seq_grow_grow) grow_targets.push_back(goal.second->kind);

  auto feeds_all = [&](int supply) {
    return std::all_of(grow_targets.begin(), grow_targets.end(),
                       [&](int t) { return lexicon_.feeds(supply, t); });
  };
  if (!grow_targets.empty()) {
    const bool covered = std::any_of(scene.begin(), scene.end(), [&](Descriptor d) {
      return lexicon_.category(d.kind) == Category::supply && feeds_all(d.kind);
    });
    if (!covered) {
      std::vector<Descriptor> options;
      for (int k = 0; k < static_cast<int>(lexicon_.kinds().size()); ++k) {
        if (lexicon_.category(k) != Category::supply || !feeds_all(k)) continue;
        for (int c = 0; c < static_cast<int>(lexicon_.colors().size()); ++c) {
          const Descriptor d{c, k};
          if (std::find(scene.begin(), scene.end(), d) == scene.end()) options.push_back(d);
        }
      }
      if (options.empty()) {
        throw ConfigError("goal '" + goal_text(goal) + "' has no compatible supply in the lexicon");
      }
      // Pick the supply kind first, then its color, so water and food are equally likely for animals.
      std::vector<int> supply_kinds;
      for (const auto& d : options) {
        if (std::find(supply_kinds.begin(), supply_kinds.end(), d.kind) == supply_kinds.end()) {
          supply_kinds.push_back(d.kind);
        }
      }
      const int kind = supply_kinds[rng.index(supply_kinds.size())];
      std::vector<Descriptor> colored;
      for (const auto& d : options) {
        if (d.kind == kind) colored.push_back(d);
      }
      scene.push_back(colored[rng.index(colored.size())]);
    }
  }
  if (static_cast<int>(scene.size()) > n_objects) {
    throw ConfigError("goal '" + goal_text(goal) + "' needs " + std::to_string(scene.size()) +
                      " objects but the scene holds " + std::to_string(n_objects));
  }
  if (static_cast<std::size_t>(n_objects) > lexicon_.descriptor_count()) {
    throw ConfigError("n_objects exceeds the number of distinct objects in the lexicon");
  }
  std::vector<Descriptor> pool;
  for (const auto& d : all_descriptors(lexicon_)) {
    if (std::find(scene.begin(), scene.end(), d) == scene.end()) pool.push_back(d);
  }
  while (static_cast<int>(scene.size()) < n_objects) {
    const std::size_t i = rng.index(pool.size());
    scene.push_back(pool[i]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
  }
  rng.shuffle(scene);

  WorldState state;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    state.objects.push_back({static_cast<int>(i), scene[i].color, scene[i].kind,
                             lexicon_.category(scene[i].kind), false});
  }
  return state;
}

std::vector<ActionSpec> Playground::actions(const WorldState& state) const {
  std::vector<ActionSpec> out;
  out.reserve(state.objects.size() + 2);
  for (const auto& o : state.objects) {
    out.push_back({ActionKind::go_to, o.id, "Go to " + describe(o)});
  }
  out.push_back({ActionKind::grasp, std::nullopt, "Grasp"});
  out.push_back({ActionKind::release, std::nullopt, "Release"});
  return out;
}

StepResult Playground::step(const WorldState& state, const ActionSpec& action, const Goal& goal) const {
  WorldState next = state;
  const int t = state.step_count;
  switch (action.kind) {
    case ActionKind::go_to: {
      if (!action.target || *action.target < 0 ||
          *action.target >= static_cast<int>(state.objects.size())) {
        throw InvalidActionError("go to: no object with id " +
                                 (action.target ? std::to_string(*action.target) : std::string("<none>")));
      }
      if (next.holding != action.target) next.agent_on = action.target;
      break;
    }
    case ActionKind::grasp: {
      if (next.agent_on && !next.holding) {
        const int id = *next.agent_on;
        next.holding = id;
        next.agent_on.reset();
        const Descriptor b = next.objects[static_cast<std::size_t>(id)].descriptor();
        next.achieved_log.push_back({Goal::grasp(b), t});
        for (int grown : state.grown_set) {
          const auto seq = Goal::grow_then_grasp(next.objects[static_cast<std::size_t>(grown)].descriptor(), b);
          if (!logged(next, seq)) next.achieved_log.push_back({seq, t});
        }
      }
      break;
    }
    case ActionKind::release: {
      if (!next.holding) break;
      const auto& held = next.objects[static_cast<std::size_t>(*next.holding)];
      if (next.agent_on) {
        auto& target = next.objects[static_cast<std::size_t>(*next.agent_on)];
        if (held.category == Category::supply && lexicon_.growable(target.kind) && !target.grown &&
            lexicon_.feeds(held.kind, target.kind)) {
          target.grown = true;
          next.grown_set.push_back(target.id);
          const Descriptor b = target.descriptor();
          next.achieved_log.push_back({Goal::grow(b), t});
          for (int grown : state.grown_set) {
            next.achieved_log.push_back(
                {Goal::grow_then_grow(next.objects[static_cast<std::size_t>(grown)].descriptor(), b), t});
          }
        }
      }
      next.holding.reset();
      break;
    }
  }
  next.step_count = t + 1;
  StepResult result{std::move(next), 0.0, false};
  if (goal_satisfied(result.state, goal)) {
    result.reward = 1.0;
    result.done = true;
  } else if (result.state.step_count >= config_.horizon) {
    result.done = true;
  }
  return result;
}

std::string Playground::render_observation(const WorldState& state, const Goal& goal) const {
  std::vector<std::string> seen;
  for (const auto& o : state.objects) {
    if (state.holding != o.id) seen.push_back(describe(o));
  }
  std::vector<std::string> grown;
  for (int id : state.grown_set) grown.push_back(describe(state.objects[static_cast<std::size_t>(id)]));
  auto name = [&](const std::optional<int>& id) {
    return id ? describe(state.objects[static_cast<std::size_t>(*id)]) : std::string("nothing");
  };
  std::string out;
  out += "Goal: " + goal_text(goal) + "\n";
  out += "You see: " + join(seen) + "\n";
  out += "You are on: " + name(state.agent_on) + "\n";
  out += "You are holding: " + name(state.holding) + "\n";
  out += "You have grown: " + join(grown) + "\n";
  out += "Action: ";
  return out;
}

std::vector<Achievement> Playground::achievements_from_log(const WorldState& final_state) const {
  std::vector<Achievement> out;
  for (const auto& a : final_state.achieved_log) {
    if (!in_goal_space(a.goal)) continue;
    const bool seen = std::any_of(out.begin(), out.end(), [&](const Achievement& x) { return x.goal == a.goal; });
    if (!seen) out.push_back(a);
  }
  std::sort(out.begin(), out.end(), [](const Achievement& a, const Achievement& b) {
    return std::tie(a.step, a.goal) < std::tie(b.step, b.goal);
  });
  return out;
}

std::vector<Achievement> Playground::social_partner_achievements(
    const std::vector<std::pair<WorldState, ActionSpec>>& episode) const {
  if (episode.empty()) return {};
  const auto& [last_state, last_action] = episode.back();
  const auto final_state = step(last_state, last_action, goals_.front()).state;
  auto out = achievements_from_log(final_state);
  const int start = episode.front().first.step_count;
  std::erase_if(out, [&](const Achievement& a) { return a.step < start; });
  return out;
}

}  // namespace sactext::env
