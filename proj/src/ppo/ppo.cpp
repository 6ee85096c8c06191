#include "sactext/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sactext/common/errors.hpp"
#include "sactext/common/parallel.hpp"
#include "sactext/nn/adam.hpp"

namespace sactext::ppo {

using nn::Var;

std::string_view to_string(Variant v) { return v == Variant::clip ? "clip" : "kl"; }

Variant parse_variant(std::string_view name) {
  if (name == "clip") return Variant::clip;
  if (name == "kl") return Variant::kl;
  throw ConfigError("unknown PPO variant '" + std::string(name) + "' (clip, kl)");
}

std::string_view to_string(HerMode m) {
  switch (m) {
    case HerMode::off: return "off";
    case HerMode::plain: return "plain";
    case HerMode::aligned: return "aligned";
    case HerMode::aligned_centered: return "aligned_centered";
  }
  return "?";
}

HerMode parse_her_mode(std::string_view name) {
  if (name == "off") return HerMode::off;
  if (name == "plain") return HerMode::plain;
  if (name == "aligned") return HerMode::aligned;
  if (name == "aligned_centered") return HerMode::aligned_centered;
  throw ConfigError("unknown her_mode '" + std::string(name) + "' (off, plain, aligned, aligned_centered)");
}

void PpoConfig::validate() const {
  if (rollout_length < 1) throw ConfigError("rollout_length must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("clip_epsilon must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (gae_lambda < 0.0 || gae_lambda > 1.0) throw ConfigError("gae_lambda must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (max_grad_norm < 0.0) throw ConfigError("max_grad_norm must be non-negative");
  if (entropy_coef < 0.0 || value_coef < 0.0 || kl_beta < 0.0) {
    throw ConfigError("entropy_coef, value_coef and kl_beta must be non-negative");
  }
  if (value_hidden < 1 || grad_chunks < 1 || threads < 1) {
    throw ConfigError("value_hidden, grad_chunks and threads must be positive");
  }
}

Gae gae_advantages(std::span<const double> rewards, std::span<const double> values, const std::vector<bool>& dones,
                   double bootstrap_value, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ShapeError("GAE inputs differ in length");
  Gae out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_value = dones[k] ? 0.0 : (k + 1 < n ? values[k + 1] : bootstrap_value);
    const double carry = dones[k] ? 0.0 : next_adv;
    const double delta = rewards[k] + gamma * next_value - values[k];
    next_adv = delta + gamma * lambda * carry;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
  }
  return out;
}

void normalize(std::vector<double>& xs) {
  if (xs.empty()) return;
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (double& x : xs) x = sd > 1e-12 ? (x - mean) / sd : 0.0;
}

double discrete_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("KL over distributions of different sizes");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

bool aligned_filter(const env::Goal& goal, const env::Goal& sub) {
  using env::Goal;
  using env::GoalKind;
  if (goal == sub) return false;
  switch (goal.kind) {
    case GoalKind::grasp:
      return false;
    case GoalKind::grow:
      return sub == Goal::grasp(goal.first);
    case GoalKind::seq_grow_grasp:
      return sub == Goal::grow(goal.first) || sub == Goal::grasp(*goal.second) || sub == Goal::grasp(goal.first);
    case GoalKind::seq_grow_grow:
      return sub == Goal::grow(goal.first) || sub == Goal::grow(*goal.second) || sub == Goal::grasp(goal.first) ||
             sub == Goal::grasp(*goal.second);
  }
  return false;
}

Var clip_term(nn::Tape& tape, Var ratio, double advantage, double center, double epsilon) {
  const Var unclipped = nn::scale(tape, ratio, advantage);
  const Var clipped = nn::scale(tape, nn::clamp(tape, ratio, center - epsilon, center + epsilon), advantage);
  return nn::scale(tape, nn::minimum(tape, unclipped, clipped), -1.0);
}

PpoAgent::PpoAgent(PpoConfig config, policy::ScorerConfig scorer_config, policy::Tokenizer tokenizer,
                   std::uint64_t init_seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng init_rng(init_seed);
  scorer_ = std::make_unique<policy::Scorer>(scorer_config, std::move(tokenizer), store_, init_rng);
  value_ = std::make_unique<critic::MlpHead>("value", scorer_->code_width(), config_.value_hidden, 1, store_, init_rng);
  all_ids_ = store_.all_ids();
}

Evaluation PpoAgent::evaluate(std::string_view prompt, std::span<const std::string> candidates) const {
  nn::Tape tape;
  const auto tokens = scorer_->tokenize_prompt(prompt);
  const Var code = scorer_->encode(tape, store_, tokens);
  const auto scores = scorer_->action_logprobs(tape, store_, code, scorer_->tokenize_actions(candidates));
  Evaluation out;
  out.log_probs = tape.value(nn::log_softmax(tape, nn::concat(tape, scores)));
  out.value = tape.item(value_->forward(tape, store_, code));
  return out;
}

double PpoAgent::importance_ratio(const Sample& s) const {
  const auto e = evaluate(s.prompt, *s.candidates);
  return std::exp(e.log_probs.at(static_cast<std::size_t>(s.action)) - s.old_logprob);
}

Var PpoAgent::loss_term(nn::Tape& tape, const Sample& s, LossParts* parts) const {
  const auto tokens = scorer_->tokenize_prompt(s.prompt);
  const Var code = scorer_->encode(tape, store_, tokens);
  const auto scores = scorer_->action_logprobs(tape, store_, code, scorer_->tokenize_actions(*s.candidates));
  const Var logp = nn::log_softmax(tape, nn::concat(tape, scores));
  const Var value = value_->forward(tape, store_, code);

  const Var ratio = nn::exp(tape, nn::add_scalar(tape, nn::pick(tape, logp, static_cast<std::size_t>(s.action)),
                                                 -s.old_logprob));
  Var policy_term;
  double kl_value = 0.0;
  if (config_.variant == Variant::clip) {
    policy_term = clip_term(tape, ratio, s.advantage, s.center, config_.clip_epsilon);
  } else {
    if (s.old_probs.size() != tape.value(logp).size()) throw ShapeError("old distribution has the wrong size");
    double self = 0.0;
    for (double p : s.old_probs) {
      if (p > 0.0) self += p * std::log(p);
    }
    const Var cross = nn::dot(tape, tape.constant(s.old_probs), logp);
    const Var kl = nn::add_scalar(tape, nn::scale(tape, cross, -1.0), self);
    kl_value = tape.item(kl);
    policy_term = nn::add(tape, nn::scale(tape, ratio, -s.advantage), nn::scale(tape, kl, config_.kl_beta));
  }
  const Var entropy = nn::scale(tape, nn::dot(tape, nn::exp(tape, logp), logp), -1.0);
  const Var value_error = nn::square(tape, nn::add_scalar(tape, value, -s.ret));
  if (parts) {
    parts->policy = tape.item(policy_term);
    parts->value = tape.item(value_error);
    parts->entropy = tape.item(entropy);
    parts->ratio = tape.item(ratio);
    parts->kl = kl_value;
  }
  const Var with_entropy = nn::add(tape, policy_term, nn::scale(tape, entropy, -config_.entropy_coef));
  return nn::add(tape, with_entropy, nn::scale(tape, value_error, config_.value_coef));
}

LossParts PpoAgent::update(std::span<const Sample* const> batch) {
  if (batch.empty()) throw ContractError("empty batch");
  const std::size_t n = batch.size();
  const double weight = 1.0 / static_cast<double>(n);
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(config_.grad_chunks, n));
  std::vector<nn::GradientBuffer> sinks(chunks, nn::GradientBuffer(store_));
  std::vector<LossParts> partial(chunks);
  store_.zero_grad();
  for_each_chunk(n, chunks, static_cast<std::size_t>(config_.threads), [&](std::size_t c, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      nn::Tape tape(store_, sinks[c]);
      LossParts p;
      tape.backward(nn::scale(tape, loss_term(tape, *batch[i], &p), weight));
      partial[c].policy += p.policy * weight;
      partial[c].value += p.value * weight;
      partial[c].entropy += p.entropy * weight;
      partial[c].ratio += p.ratio * weight;
      partial[c].kl += p.kl * weight;
    }
  });
  LossParts total;
  for (std::size_t c = 0; c < chunks; ++c) {
    sinks[c].add_into(store_);
    total.policy += partial[c].policy;
    total.value += partial[c].value;
    total.entropy += partial[c].entropy;
    total.ratio += partial[c].ratio;
    total.kl += partial[c].kl;
  }
  if (!std::isfinite(total.policy) || !std::isfinite(total.value)) {
    throw TrainingAbort("PPO loss is not finite (policy " + std::to_string(total.policy) + ", value " +
                        std::to_string(total.value) + "); first prompt:\n" + batch.front()->prompt);
  }
  nn::adam_step(store_, all_ids_,
                nn::AdamConfig{.learning_rate = config_.learning_rate, .max_grad_norm = config_.max_grad_norm});
  store_.zero_grad();
  return total;
}

PpoTrainer::PpoTrainer(const env::Playground& world, PpoConfig config, policy::ScorerConfig scorer_config,
                       int num_envs, std::uint64_t seed)
    : world_(&world),
      agent_(config, scorer_config, policy::Tokenizer::for_lexicon(world.lexicon()), derive_seed(seed, 3)),
      envs_(world, num_envs, derive_seed(seed, 0)),
      act_rng_(derive_seed(seed, 1)),
      shuffle_rng_(derive_seed(seed, 2)) {
  policy::fit_uniform_prior(agent_.scorer(), agent_.store(), world, agent_.config().prior, derive_seed(seed, 4));
}

void PpoTrainer::relabel(const env::EpisodeRecord& episode, const std::vector<Step>& steps, std::size_t first) {
  const auto mode = agent_.config().her_mode;
  const auto& cfg = agent_.config();
  for (const auto& a : world_->achievements_from_log(episode.states.back())) {
    if (a.goal == episode.goal) continue;
    if (mode != HerMode::plain && !aligned_filter(episode.goal, a.goal)) continue;
    std::vector<Sample> segment;
    for (std::size_t i = first; i < steps.size() && steps[i].episode_step <= a.step; ++i) {
      Sample s = steps[i].sample;
      s.prompt = world_->render_observation(episode.states[static_cast<std::size_t>(steps[i].episode_step)], a.goal);
      s.reward = steps[i].episode_step == a.step ? 1.0 : 0.0;
      s.done = steps[i].episode_step == a.step;
      s.value = agent_.evaluate(s.prompt, *s.candidates).value;
      s.relabeled = true;
      s.goal_type = a.goal.kind;
      s.center = mode == HerMode::aligned_centered ? agent_.importance_ratio(s) : 1.0;
      segment.push_back(std::move(s));
    }
    if (segment.empty() || !segment.back().done) continue;
    std::vector<double> r, v;
    std::vector<bool> d;
    for (const auto& s : segment) {
      r.push_back(s.reward);
      v.push_back(s.value);
      d.push_back(s.done);
    }
    const auto gae = gae_advantages(r, v, d, 0.0, cfg.gamma, cfg.gae_lambda);
    for (std::size_t k = 0; k < segment.size(); ++k) {
      segment[k].advantage = gae.advantages[k];
      segment[k].ret = gae.returns[k];
      relabeled_.push_back(std::move(segment[k]));
    }
  }
}

CycleMetrics PpoTrainer::run_cycle() {
  const auto& cfg = agent_.config();
  const std::size_t num_envs = envs_.size();
  const int per_env = (cfg.rollout_length + static_cast<int>(num_envs) - 1) / static_cast<int>(num_envs);
  std::vector<std::vector<Step>> seqs(num_envs);
  std::vector<std::size_t> episode_first(num_envs, 0);
  relabeled_.clear();
  double entropy_sum = 0.0;

  for (int t = 0; t < per_env; ++t) {
    for (std::size_t i = 0; i < num_envs; ++i) {
      auto& env = envs_[i];
      Step step;
      step.episode_step = env.state().step_count;
      step.sample.prompt = env.observation();
      step.sample.candidates = env.action_texts();
      step.sample.goal_type = env.goal().kind;
      const auto e = agent_.evaluate(step.sample.prompt, *step.sample.candidates);
      std::vector<double> probs(e.log_probs.size());
      for (std::size_t a = 0; a < probs.size(); ++a) probs[a] = std::exp(e.log_probs[a]);
      entropy_sum += policy::entropy(probs);
      const auto action = policy::sample_action(probs, act_rng_);
      step.sample.action = static_cast<int>(action);
      step.sample.old_logprob = e.log_probs[action];
      step.sample.old_probs = std::move(probs);
      step.sample.value = e.value;
      const auto outcome = env.step(static_cast<int>(action));
      ++env_steps_;
      step.sample.reward = outcome.reward;
      step.sample.done = outcome.done;
      seqs[i].push_back(std::move(step));
      if (outcome.episode) {
        tracker_.record(outcome.episode->goal.kind, outcome.episode->success);
        if (cfg.her_mode != HerMode::off) relabel(*outcome.episode, seqs[i], episode_first[i]);
        episode_first[i] = seqs[i].size();
      }
    }
  }

  samples_.clear();
  for (std::size_t i = 0; i < num_envs; ++i) {
    std::vector<double> r, v;
    std::vector<bool> d;
    for (const auto& s : seqs[i]) {
      r.push_back(s.sample.reward);
      v.push_back(s.sample.value);
      d.push_back(s.sample.done);
    }
    const double bootstrap =
        d.back() ? 0.0 : agent_.evaluate(envs_[i].observation(), *envs_[i].action_texts()).value;
    const auto gae = gae_advantages(r, v, d, bootstrap, cfg.gamma, cfg.gae_lambda);
    for (std::size_t k = 0; k < seqs[i].size(); ++k) {
      seqs[i][k].sample.advantage = gae.advantages[k];
      seqs[i][k].sample.ret = gae.returns[k];
      samples_.push_back(std::move(seqs[i][k].sample));
    }
  }
  for (auto& s : relabeled_) samples_.push_back(std::move(s));
  relabeled_.clear();

  std::vector<double> adv;
  adv.reserve(samples_.size());
  for (const auto& s : samples_) adv.push_back(s.advantage);
  normalize(adv);
  for (std::size_t k = 0; k < samples_.size(); ++k) samples_[k].advantage = adv[k];

  check_ = FirstEpochCheck{};
  check_.samples = samples_.size();
  for (const auto& s : samples_) {
    const auto e = agent_.evaluate(s.prompt, *s.candidates);
    const double ratio = std::exp(e.log_probs[static_cast<std::size_t>(s.action)] - s.old_logprob);
    if (s.relabeled) {
      ++check_.relabeled;
      check_.mean_relabeled_ratio_deviation += std::abs(ratio - 1.0);
      continue;
    }
    std::vector<double> now(e.log_probs.size());
    for (std::size_t a = 0; a < now.size(); ++a) now[a] = std::exp(e.log_probs[a]);
    check_.max_ratio_deviation = std::max(check_.max_ratio_deviation, std::abs(ratio - 1.0));
    check_.max_kl = std::max(check_.max_kl, std::abs(discrete_kl(s.old_probs, now)));
  }
  if (check_.relabeled > 0) check_.mean_relabeled_ratio_deviation /= static_cast<double>(check_.relabeled);

  std::vector<std::size_t> order(samples_.size());
  std::iota(order.begin(), order.end(), 0);
  LossParts sum;
  int batches = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng_.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Sample*> batch;
      for (std::size_t k = b; k < e; ++k) batch.push_back(&samples_[order[k]]);
      const auto parts = agent_.update(batch);
      sum.policy += parts.policy;
      sum.value += parts.value;
      ++batches;
    }
  }
  ++updates_;

  std::size_t hindsight = 0;
  for (const auto& s : samples_) hindsight += s.relabeled ? 1 : 0;

  CycleMetrics m;
  m.cycle = cycle_++;
  m.env_steps = env_steps_;
  m.episodes = tracker_.episodes();
  m.updates = updates_;
  m.success_rate = tracker_.rate();
  for (std::size_t k = 0; k < env::kGoalKindCount; ++k) m.success_by_type[k] = tracker_.rate(static_cast<env::GoalKind>(k));
  m.entropy = entropy_sum / static_cast<double>(per_env * static_cast<int>(num_envs));
  m.actor_loss = sum.policy / batches;
  m.value_loss = sum.value / batches;
  if (cfg.her_mode != HerMode::off) {
    m.buffer_hindsight_fraction = static_cast<double>(hindsight) / static_cast<double>(samples_.size());
  }
  m.buffer_size = static_cast<long>(samples_.size());
  return m;
}

}  // namespace sactext::ppo
