#include "sactext/replay/replay.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "sactext/common/errors.hpp"

namespace sactext::replay {

NStep nstep_at(std::span<const double> rewards, int t, int n, double gamma) {
  const int length = static_cast<int>(rewards.size());
  if (t < 0 || t >= length) throw ContractError("n-step index out of range");
  if (n < 1) throw ContractError("n must be at least 1");
  NStep out;
  out.effective_n = std::min(n, length - t);
  double discount = 1.0;
  for (int i = 0; i < out.effective_n; ++i) {
    out.reward += discount * rewards[static_cast<std::size_t>(t + i)];
    discount *= gamma;
  }
  out.terminal = t + out.effective_n == length;
  return out;
}

namespace {

void append_segment(std::vector<Transition>& out, const env::Playground& world, const env::EpisodeRecord& episode,
                    const env::Goal& goal, std::span<const double> rewards, bool hindsight, int n, double gamma) {
  const int length = static_cast<int>(rewards.size());
  std::vector<std::string> prompts;
  prompts.reserve(static_cast<std::size_t>(length) + 1);
  for (int t = 0; t <= length; ++t) {
    prompts.push_back(world.render_observation(episode.states[static_cast<std::size_t>(t)], goal));
  }
  for (int t = 0; t < length; ++t) {
    const NStep ns = nstep_at(rewards, t, n, gamma);
    Transition tr;
    tr.prompt = prompts[static_cast<std::size_t>(t)];
    tr.goal = goal;
    tr.action = episode.actions[static_cast<std::size_t>(t)];
    tr.action_text = episode.action_texts->at(static_cast<std::size_t>(tr.action));
    tr.nstep_reward = ns.reward;
    tr.bootstrap_prompt = prompts[static_cast<std::size_t>(t + ns.effective_n)];
    tr.candidates = episode.action_texts;
    tr.effective_n = ns.effective_n;
    tr.terminal = ns.terminal;
    tr.hindsight = hindsight;
    tr.goal_type = goal.kind;
    out.push_back(std::move(tr));
  }
}

}  // namespace

std::vector<Transition> ingest_episode(const env::Playground& world, const env::EpisodeRecord& episode,
                                       std::span<const env::Achievement> achievements, int n, double gamma) {
  const int length = episode.length();
  if (length < 1) throw ContractError("cannot ingest an empty episode");
  if (episode.states.size() != static_cast<std::size_t>(length) + 1 ||
      episode.rewards.size() != static_cast<std::size_t>(length)) {
    throw ContractError("episode record is inconsistent");
  }
  std::vector<Transition> out;
  append_segment(out, world, episode, episode.goal, episode.rewards, false, n, gamma);
  for (const auto& a : achievements) {
    if (a.step < 0 || a.step >= length) {
      throw ContractError("achievement step " + std::to_string(a.step) + " outside an episode of length " +
                          std::to_string(length));
    }
    if (a.goal == episode.goal) continue;
    std::vector<double> rewards(static_cast<std::size_t>(a.step) + 1, 0.0);
    rewards.back() = 1.0;
    append_segment(out, world, episode, a.goal, rewards, true, n, gamma);
  }
  return out;
}

std::string_view to_string(Sampling s) {
  switch (s) {
    case Sampling::uniform: return "uniform";
    case Sampling::ratio: return "ratio";
    case Sampling::prior: return "prior";
  }
  return "?";
}

Sampling parse_sampling(std::string_view name) {
  if (name == "uniform") return Sampling::uniform;
  if (name == "ratio") return Sampling::ratio;
  if (name == "prior") return Sampling::prior;
  throw ConfigError("unknown sampling strategy '" + std::string(name) + "' (uniform, ratio, prior)");
}

void ReplayBuffer::Pool::insert(std::size_t slot, std::vector<std::size_t>& pos) {
  pos[slot] = members.size();
  members.push_back(slot);
}

void ReplayBuffer::Pool::erase(std::size_t slot, std::vector<std::size_t>& pos) {
  const std::size_t i = pos[slot];
  const std::size_t last = members.back();
  members[i] = last;
  pos[last] = i;
  members.pop_back();
}

ReplayBuffer::ReplayBuffer(std::size_t capacity)
    : slots_(capacity), hindsight_pos_(capacity), type_pos_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::index(std::size_t slot) {
  const auto& t = slots_[slot];
  by_hindsight_[t.hindsight ? 1 : 0].insert(slot, hindsight_pos_);
  by_type_[static_cast<std::size_t>(t.goal_type)].insert(slot, type_pos_);
}

void ReplayBuffer::unindex(std::size_t slot) {
  const auto& t = slots_[slot];
  by_hindsight_[t.hindsight ? 1 : 0].erase(slot, hindsight_pos_);
  by_type_[static_cast<std::size_t>(t.goal_type)].erase(slot, type_pos_);
}

void ReplayBuffer::add(Transition t) {
  if (size_ == capacity()) {
    unindex(head_);
  } else {
    ++size_;
  }
  slots_[head_] = std::move(t);
  index(head_);
  head_ = (head_ + 1) % capacity();
  ++inserted_;
}

void ReplayBuffer::add(std::vector<Transition> ts) {
  for (auto& t : ts) add(std::move(t));
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw ContractError("replay index out of range");
  const std::size_t oldest = (head_ + capacity() - size_) % capacity();
  return slots_[(oldest + i) % capacity()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, const SamplingOptions& options,
                                                    Rng& rng) const {
  if (batch > size_) {
    throw ContractError("batch of " + std::to_string(batch) + " requested from a buffer of " +
                        std::to_string(size_));
  }
  std::vector<const Transition*> out;
  out.reserve(batch);
  auto uniform_slot = [&] { return &at(rng.index(size_)); };

  switch (options.strategy) {
    case Sampling::uniform:
      for (std::size_t i = 0; i < batch; ++i) out.push_back(uniform_slot());
      break;

    case Sampling::ratio: {
      const auto& hind = by_hindsight_[1].members;
      const auto& envp = by_hindsight_[0].members;
      std::size_t h = static_cast<std::size_t>(std::ceil(static_cast<double>(batch) * options.hindsight_proportion));
      h = std::min(h, batch);
      std::size_t e = batch - h;
      if (hind.size() < h) {
        e += h - hind.size();
        h = hind.size();
      }
      if (envp.size() < e) {
        h += e - envp.size();
        e = envp.size();
      }
      // Floyd's algorithm: k distinct members of a pool, in a deterministic order.
      auto distinct = [&](const std::vector<std::size_t>& pool, std::size_t k) {
        std::unordered_set<std::size_t> chosen;
        const std::size_t m = pool.size();
        for (std::size_t j = m - k; j < m; ++j) {
          const std::size_t r = rng.index(j + 1);
          const std::size_t pick = chosen.contains(r) ? j : r;
          chosen.insert(pick);
          out.push_back(&slots_[pool[pick]]);
        }
      };
      distinct(hind, h);
      distinct(envp, e);
      break;
    }

    case Sampling::prior: {
      std::array<double, env::kGoalKindCount> share{};
      double total = 0.0;
      for (double p : options.goal_type_target) total += p;
      if (!(total > 0.0)) throw ConfigError("prior sampling needs a positive goal-type target");
      std::array<std::size_t, env::kGoalKindCount> counts{};
      std::array<double, env::kGoalKindCount> remainders{};
      std::size_t allocated = 0;
      for (std::size_t k = 0; k < env::kGoalKindCount; ++k) {
        share[k] = static_cast<double>(batch) * options.goal_type_target[k] / total;
        counts[k] = static_cast<std::size_t>(std::floor(share[k]));
        remainders[k] = share[k] - static_cast<double>(counts[k]);
        allocated += counts[k];
      }
      for (std::size_t r = allocated; r < batch; ++r) counts[rng.categorical(remainders)] += 1;
      for (std::size_t k = 0; k < env::kGoalKindCount; ++k) {
        for (std::size_t i = 0; i < counts[k]; ++i) {
          out.push_back(by_type_[k].members.empty() ? uniform_slot() : &slots_[draw_from(by_type_[k], rng)]);
        }
      }
      break;
    }
  }
  return out;
}

Composition ReplayBuffer::composition() const {
  Composition c;
  c.size = size_;
  c.hindsight = by_hindsight_[1].members.size();
  for (std::size_t k = 0; k < env::kGoalKindCount; ++k) c.by_goal_type[k] = by_type_[k].members.size();
  return c;
}

void ReplayBuffer::dump(const std::filesystem::path& path, const env::Playground& world) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (std::size_t i = 0; i < size_; ++i) {
    const auto& t = at(i);
    nlohmann::json j;
    j["insertion"] = insertion_index(i);
    j["goal"] = world.goal_text(t.goal);
    j["goal_type"] = env::to_string(t.goal_type);
    j["prompt"] = t.prompt;
    j["action"] = t.action;
    j["action_text"] = t.action_text;
    j["nstep_reward"] = t.nstep_reward;
    j["bootstrap_prompt"] = t.bootstrap_prompt;
    j["candidates"] = t.candidates ? *t.candidates : std::vector<std::string>{};
    j["effective_n"] = t.effective_n;
    j["terminal"] = t.terminal;
    j["hindsight"] = t.hindsight;
    out << j.dump() << '\n';
  }
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& path, const env::Playground& world,
                                std::size_t capacity) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  ReplayBuffer buffer(capacity);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Transition t;
      const auto goal = world.parse_goal(j.at("goal").get<std::string>());
      if (!goal) throw ConfigError("unknown goal '" + j.at("goal").get<std::string>() + "'");
      t.goal = *goal;
      t.goal_type = goal->kind;
      t.prompt = j.at("prompt").get<std::string>();
      t.action = j.at("action").get<int>();
      t.action_text = j.at("action_text").get<std::string>();
      t.nstep_reward = j.at("nstep_reward").get<double>();
      t.bootstrap_prompt = j.at("bootstrap_prompt").get<std::string>();
      t.candidates = std::make_shared<const std::vector<std::string>>(j.at("candidates").get<std::vector<std::string>>());
      t.effective_n = j.at("effective_n").get<int>();
      t.terminal = j.at("terminal").get<bool>();
      t.hindsight = j.at("hindsight").get<bool>();
      buffer.add(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return buffer;
}

}  // namespace sactext::replay
