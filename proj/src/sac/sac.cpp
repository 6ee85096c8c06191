#include "sactext/sac/sac.hpp"

#include <cmath>
#include <sstream>

#include "sactext/common/errors.hpp"
#include "sactext/common/parallel.hpp"

namespace sactext::sac {

using nn::Var;
using replay::Transition;

SacConfig SacConfig::with_her() {
  SacConfig c;
  c.her = true;
  c.alpha_init = 0.05;
  c.target_entropy = 0.01;
  c.sampling.strategy = replay::Sampling::ratio;
  c.sampling.hindsight_proportion = 0.5;
  return c;
}

void SacConfig::validate() const {
  auto positive = [](double x, const char* name) {
    if (!(x > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(gamma, "gamma");
  if (gamma > 1.0) throw ConfigError("gamma must not exceed 1");
  positive(update_frequency, "update_frequency");
  positive(updates_per_cycle, "updates_per_cycle");
  positive(batch_size, "batch_size");
  positive(actor_lr, "actor_lr");
  positive(critic_lr, "critic_lr");
  positive(alpha_lr, "alpha_lr");
  positive(alpha_init, "alpha_init");
  positive(n_step, "n_step");
  positive(static_cast<double>(buffer_capacity), "buffer_capacity");
  positive(grad_chunks, "grad_chunks");
  positive(threads, "threads");
  if (target_entropy < 0.0) throw ConfigError("target_entropy must be non-negative");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (max_grad_norm < 0.0) throw ConfigError("max_grad_norm must be non-negative");
  if (sampling.hindsight_proportion < 0.0 || sampling.hindsight_proportion > 1.0) {
    throw ConfigError("hindsight_proportion must lie in [0, 1]");
  }
  if (static_cast<std::size_t>(batch_size) > buffer_capacity) {
    throw ConfigError("batch_size exceeds buffer_capacity");
  }
}

SacAgent::SacAgent(SacConfig config, policy::ScorerConfig scorer_config, policy::Tokenizer tokenizer,
                   critic::CriticConfig critic_config, int action_count, std::uint64_t init_seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng init_rng(init_seed);
  scorer_ = std::make_unique<policy::Scorer>(scorer_config, std::move(tokenizer), store_, init_rng);
  critic_ = std::make_unique<critic::Critic>(critic_config, *scorer_, action_count, store_, init_rng);
  target_ = store_;
  log_alpha_ = alpha_store_.add("log_alpha", {1});
  set_alpha(config_.alpha_init);

  const auto& enc = scorer_->encoder_ids();
  const auto& heads = critic_->head_ids();
  critic_group_ = heads;
  if (critic_config.shared_backprop) critic_group_.insert(critic_group_.end(), enc.begin(), enc.end());
  actor_group_ = scorer_->actor_head_ids();
  actor_group_.insert(actor_group_.end(), enc.begin(), enc.end());
  target_group_ = enc;
  target_group_.insert(target_group_.end(), heads.begin(), heads.end());
}

double SacAgent::alpha() const { return std::exp(alpha_store_[log_alpha_].value[0]); }

void SacAgent::set_alpha(double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  alpha_store_[log_alpha_].value[0] = std::log(alpha);
}

std::vector<double> SacAgent::policy(std::string_view prompt, std::span<const std::string> candidates) const {
  return scorer_->policy_distribution(store_, prompt, candidates);
}

namespace {

std::vector<double> elementwise_min(const nn::Tape& tape, std::span<const Var> heads) {
  std::vector<double> out = tape.value(heads.front());
  for (std::size_t k = 1; k < heads.size(); ++k) {
    const auto& v = tape.value(heads[k]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], v[i]);
  }
  return out;
}

const std::vector<std::string>& candidates_of(const Transition& t) {
  if (!t.candidates || t.candidates->empty()) throw ContractError("transition has no candidate actions");
  return *t.candidates;
}

}  // namespace

double SacAgent::critic_target(const Transition& t, double alpha) const {
  if (t.terminal) return t.nstep_reward;
  const auto prompt = scorer_->tokenize_prompt(t.bootstrap_prompt);
  const auto cands = scorer_->tokenize_actions(candidates_of(t));
  nn::Tape tape;
  const std::vector<double> log_pi = tape.value(scorer_->policy_log_probs(tape, store_, prompt, cands));
  const nn::ParameterStore& q_store = critic_->config().use_target_network ? target_ : store_;
  const Var prefix = scorer_->encode_prefix(tape, q_store, prompt);
  const auto q = elementwise_min(tape, critic_->q_all(tape, q_store, prompt, prefix, cands));
  double soft_value = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) soft_value += std::exp(log_pi[a]) * (q[a] - alpha * log_pi[a]);
  return t.nstep_reward + std::pow(config_.gamma, t.effective_n) * soft_value;
}

std::vector<double> SacAgent::critic_targets(std::span<const Transition* const> batch, double alpha) const {
  std::vector<double> y(batch.size());
  for_each_chunk(batch.size(), static_cast<std::size_t>(config_.grad_chunks), static_cast<std::size_t>(config_.threads),
                 [&](std::size_t, std::size_t b, std::size_t e) {
                   for (std::size_t i = b; i < e; ++i) y[i] = critic_target(*batch[i], alpha);
                 });
  return y;
}

Var SacAgent::critic_loss_term(nn::Tape& tape, const Transition& t, double y) const {
  const auto prompt = scorer_->tokenize_prompt(t.prompt);
  const auto cands = scorer_->tokenize_actions(candidates_of(t));
  const Var prefix = scorer_->encode_prefix(tape, store_, prompt);
  const auto qs = critic_->q_one(tape, store_, prompt, prefix, cands, static_cast<std::size_t>(t.action));
  const Var target = tape.scalar(y);
  std::vector<Var> errors;
  for (Var q : qs) errors.push_back(nn::square(tape, nn::sub(tape, q, target)));
  return nn::sum_scalars(tape, errors);
}

std::vector<double> SacAgent::actor_q(const Transition& t) const {
  const auto prompt = scorer_->tokenize_prompt(t.prompt);
  const auto cands = scorer_->tokenize_actions(candidates_of(t));
  nn::Tape frozen;
  const Var prefix = scorer_->encode_prefix(frozen, store_, prompt);
  return elementwise_min(frozen, critic_->q_all(frozen, store_, prompt, prefix, cands));
}

Var SacAgent::actor_loss_term(nn::Tape& tape, const Transition& t, double alpha, std::span<const double> q,
                              double* entropy) const {
  const auto prompt = scorer_->tokenize_prompt(t.prompt);
  const auto cands = scorer_->tokenize_actions(candidates_of(t));
  if (q.size() != cands.size()) throw ShapeError("actor loss: one value per candidate expected");
  const Var logp = scorer_->policy_log_probs(tape, store_, prompt, cands);
  if (entropy) {
    const auto& lp = tape.value(logp);
    double h = 0.0;
    for (double x : lp) h -= std::exp(x) * x;
    *entropy = h;
  }
  const Var pi = nn::exp(tape, logp);
  std::vector<double> neg_q(q.size());
  for (std::size_t a = 0; a < q.size(); ++a) neg_q[a] = -q[a];
  const Var inner = nn::add(tape, nn::scale(tape, logp, alpha), tape.constant(std::move(neg_q)));
  return nn::dot(tape, pi, inner);
}

template <class TermFn>
double SacAgent::accumulate(std::span<const Transition* const> batch, const TermFn& term) {
  const std::size_t n = batch.size();
  const double weight = 1.0 / static_cast<double>(n);
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(config_.grad_chunks, n));
  std::vector<nn::GradientBuffer> sinks(chunks, nn::GradientBuffer(store_));
  std::vector<double> partial(chunks, 0.0);
  for_each_chunk(n, chunks, static_cast<std::size_t>(config_.threads), [&](std::size_t c, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      nn::Tape tape(store_, sinks[c]);
      const Var loss = nn::scale(tape, term(tape, i), weight);
      partial[c] += tape.item(loss);
      if (tape.requires_grad(loss)) tape.backward(loss);
    }
  });
  double total = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    sinks[c].add_into(store_);
    total += partial[c];
  }
  return total;
}

namespace {

void check_finite(double value, const char* what, std::span<const Transition* const> batch) {
  if (std::isfinite(value)) return;
  std::ostringstream msg;
  msg << what << " is " << value << " on a batch of " << batch.size();
  if (!batch.empty()) msg << "; first prompt:\n" << batch.front()->prompt;
  throw TrainingAbort(msg.str());
}

}  // namespace

UpdateStats SacAgent::update_critic(std::span<const Transition* const> batch) {
  if (batch.empty()) throw ContractError("empty batch");
  const auto y = critic_targets(batch, alpha());
  UpdateStats stats;
  for (double v : y) stats.mean_q += v;
  stats.mean_q /= static_cast<double>(y.size());
  store_.zero_grad();
  stats.loss = accumulate(batch, [&](nn::Tape& tape, std::size_t i) { return critic_loss_term(tape, *batch[i], y[i]); });
  check_finite(stats.loss, "critic loss", batch);
  nn::AdamConfig adam{.learning_rate = config_.critic_lr, .max_grad_norm = config_.max_grad_norm};
  stats.grad_norm = nn::adam_step(store_, critic_group_, adam).grad_norm;
  store_.zero_grad();
  return stats;
}

UpdateStats SacAgent::update_actor_and_alpha(std::span<const Transition* const> batch) {
  if (batch.empty()) throw ContractError("empty batch");
  const double a = alpha();
  std::vector<double> entropies(batch.size());
  UpdateStats stats;
  store_.zero_grad();
  stats.loss = accumulate(batch, [&](nn::Tape& tape, std::size_t i) {
    return actor_loss_term(tape, *batch[i], a, &entropies[i]);
  });
  check_finite(stats.loss, "actor loss", batch);
  nn::AdamConfig adam{.learning_rate = config_.actor_lr, .max_grad_norm = config_.max_grad_norm};
  stats.grad_norm = nn::adam_step(store_, actor_group_, adam).grad_norm;
  store_.zero_grad();
  for (double h : entropies) stats.mean_entropy += h;
  stats.mean_entropy /= static_cast<double>(entropies.size());
  if (config_.auto_alpha) alpha_step(stats.mean_entropy);
  return stats;
}

double SacAgent::alpha_gradient(double mean_entropy) const {
  return alpha() * (mean_entropy - config_.target_entropy);
}

void SacAgent::alpha_step(double mean_entropy) {
  auto& p = alpha_store_[log_alpha_];
  p.grad[0] = alpha_gradient(mean_entropy);
  nn::adam_step(alpha_store_, nn::AdamConfig{.learning_rate = config_.alpha_lr});
}

void SacAgent::update_target() {
  critic::polyak_update(store_, target_, target_group_, critic_->config().tau);
}

void SacAgent::sync_target() {
  const auto ids = store_.all_ids();
  critic::polyak_update(store_, target_, ids, 1.0);
}

SacTrainer::SacTrainer(const env::Playground& world, SacConfig config, policy::ScorerConfig scorer_config,
                       critic::CriticConfig critic_config, int num_envs, std::uint64_t seed)
    : world_(&world),
      agent_(config, scorer_config, policy::Tokenizer::for_lexicon(world.lexicon()), critic_config,
             world.config().n_objects + 2, derive_seed(seed, 3)),
      envs_(world, num_envs, derive_seed(seed, 0)),
      buffer_(config.buffer_capacity),
      act_rng_(derive_seed(seed, 1)),
      sample_rng_(derive_seed(seed, 2)) {
  policy::fit_uniform_prior(agent_.scorer(), agent_.store(), world, agent_.config().prior, derive_seed(seed, 4));
  agent_.sync_target();
}

CycleMetrics SacTrainer::run_cycle() {
  const auto& cfg = agent_.config();
  const bool warmup = in_warmup();
  double entropy_sum = 0.0;
  long acted = 0;
  for (int s = 0; s < cfg.update_frequency; ++s) {
    for (std::size_t i = 0; i < envs_.size(); ++i) {
      auto& env = envs_[i];
      const auto probs = agent_.policy(env.observation(), *env.action_texts());
      entropy_sum += policy::entropy(probs);
      ++acted;
      const auto action = policy::sample_action(probs, act_rng_);
      auto outcome = env.step(static_cast<int>(action));
      ++env_steps_;
      if (!outcome.episode) continue;
      const auto& episode = *outcome.episode;
      tracker_.record(episode.goal.kind, episode.success);
      std::vector<env::Achievement> achievements;
      if (cfg.her) achievements = world_->achievements_from_log(episode.states.back());
      buffer_.add(replay::ingest_episode(*world_, episode, achievements, cfg.n_step, cfg.gamma));
    }
  }

  CycleMetrics m;
  m.cycle = cycle_++;
  m.warmup = warmup;
  double critic_loss = 0.0, actor_loss = 0.0, q_mean = 0.0;
  int critic_updates = 0, actor_updates = 0;
  if (buffer_.size() >= static_cast<std::size_t>(cfg.batch_size)) {
    for (int u = 0; u < cfg.updates_per_cycle; ++u) {
      const auto batch = buffer_.sample(static_cast<std::size_t>(cfg.batch_size), cfg.sampling, sample_rng_);
      const auto c = agent_.update_critic(batch);
      critic_loss += c.loss;
      q_mean += c.mean_q;
      ++critic_updates;
      if (!m.warmup) {
        actor_loss += agent_.update_actor_and_alpha(batch).loss;
        ++actor_updates;
      }
      ++updates_;
    }
    agent_.update_target();
  }

  m.env_steps = env_steps_;
  m.episodes = tracker_.episodes();
  m.updates = updates_;
  m.success_rate = tracker_.rate();
  for (std::size_t k = 0; k < env::kGoalKindCount; ++k) m.success_by_type[k] = tracker_.rate(static_cast<env::GoalKind>(k));
  if (acted > 0) m.entropy = entropy_sum / static_cast<double>(acted);
  m.alpha = agent_.alpha();
  if (critic_updates > 0) {
    m.critic_loss = critic_loss / critic_updates;
    m.q_mean = q_mean / critic_updates;
  }
  if (actor_updates > 0) m.actor_loss = actor_loss / actor_updates;
  m.buffer_hindsight_fraction = buffer_.composition().hindsight_fraction();
  m.buffer_size = static_cast<long>(buffer_.size());
  return m;
}

}  // namespace sactext::sac
