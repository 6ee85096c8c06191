#include <chrono>
#include <cmath>

#include "doctest.h"
#include "sactext/common/errors.hpp"
#include "sactext/sac/sac.hpp"
#include "support/bandit.hpp"
#include "support/gradcheck.hpp"

using namespace sactext;
using sactext::testing::Bandit;

namespace {

std::unique_ptr<sac::SacAgent> bandit_agent(sac::SacConfig cfg = Bandit::config(),
                                            critic::CriticConfig ccfg = Bandit::critic_config(),
                                            std::uint64_t seed = 3) {
  return std::make_unique<sac::SacAgent>(cfg, Bandit::scorer_config(), Bandit::tokenizer(), ccfg, 2, seed);
}

/// Zero the token head and set the bias so that pi("pull left") = p exactly.
void force_policy(sac::SacAgent& agent, nn::ParameterStore& store, double p) {
  const auto& tok = agent.scorer().tokenizer();
  for (auto& w : store[agent.scorer().token_out_weight()].value) w = 0.0;
  auto& b = store[agent.scorer().token_out_bias()].value;
  for (auto& x : b) x = 0.0;
  b[static_cast<std::size_t>(tok.id("left"))] = std::log(p / (1.0 - p));
}

/// Make head `prefix` output the constant vector `values` regardless of its input.
void force_head(nn::ParameterStore& store, const std::string& prefix, const std::vector<double>& values) {
  for (auto& w : store[store.id(prefix + ".out.w")].value) w = 0.0;
  store[store.id(prefix + ".out.b")].value = values;
}

replay::Transition bootstrap_transition(const Bandit& bandit, double reward, int n) {
  auto t = bandit.transition(0);
  t.nstep_reward = reward;
  t.effective_n = n;
  t.terminal = false;
  return t;
}

}  // namespace

TEST_CASE("critic target examples") {
  Bandit bandit;
  auto agent = bandit_agent();

  SUBCASE("terminal transition keeps only the reward") {
    auto t = bandit.transition(0);
    t.nstep_reward = 0.9801;
    CHECK(agent->critic_target(t, 0.3) == 0.9801);
  }
  SUBCASE("deterministic policy, Q = 2, alpha = 0") {
    force_policy(*agent, agent->store(), 1.0 - 1e-15);
    force_head(agent->target_store(), "q1", {2.0});
    force_head(agent->target_store(), "q2", {2.0});
    CHECK(agent->critic_target(bootstrap_transition(bandit, 0.0, 1), 0.0) == doctest::Approx(1.98).epsilon(1e-12));
  }
  SUBCASE("uniform policy over equal values gives gamma^n q") {
    force_policy(*agent, agent->store(), 0.5);
    force_head(agent->target_store(), "q1", {0.7});
    force_head(agent->target_store(), "q2", {0.7});
    const double expect = std::pow(0.99, 3) * 0.7;
    CHECK(agent->critic_target(bootstrap_transition(bandit, 0.0, 3), 0.0) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("twin heads use the smaller target") {
    force_policy(*agent, agent->store(), 0.5);
    force_head(agent->target_store(), "q1", {2.0});
    force_head(agent->target_store(), "q2", {1.0});
    CHECK(agent->critic_target(bootstrap_transition(bandit, 0.5, 1), 0.0) == doctest::Approx(0.5 + 0.99).epsilon(1e-12));
  }
  SUBCASE("online critic when the target network is disabled") {
    auto ccfg = Bandit::critic_config();
    ccfg.use_target_network = false;
    auto online = bandit_agent(Bandit::config(), ccfg);
    force_policy(*online, online->store(), 0.5);
    force_head(online->store(), "q1", {3.0});
    force_head(online->store(), "q2", {3.0});
    force_head(online->target_store(), "q1", {-5.0});
    force_head(online->target_store(), "q2", {-5.0});
    CHECK(online->critic_target(bootstrap_transition(bandit, 0.0, 1), 0.0) == doctest::Approx(2.97).epsilon(1e-12));
  }
}

TEST_CASE("critic target equals the closed-form soft value") {
  Bandit bandit;
  auto agent = bandit_agent();
  Rng rng(17);
  for (auto& id : agent->target_store().all_ids()) {
    for (auto& x : agent->target_store()[id].value) x += rng.uniform(-0.3, 0.3);
  }
  const double alpha = 0.2;
  for (int n = 1; n <= 3; ++n) {
    const auto t = bootstrap_transition(bandit, 0.25, n);
    const auto pi = agent->policy(t.bootstrap_prompt, *t.candidates);
    const auto q1 = agent->critic().q_values(agent->target_store(), t.bootstrap_prompt, *t.candidates, 0);
    const auto q2 = agent->critic().q_values(agent->target_store(), t.bootstrap_prompt, *t.candidates, 1);
    double v = 0.0;
    for (std::size_t a = 0; a < pi.size(); ++a) v += pi[a] * (std::min(q1[a], q2[a]) - alpha * std::log(pi[a]));
    const double y = agent->critic_target(t, alpha);
    CHECK(y == doctest::Approx(0.25 + std::pow(0.99, n) * v).epsilon(1e-12));
    CHECK(agent->critic_target(t, alpha) == y);
  }
}

TEST_CASE("critic loss examples") {
  Bandit bandit;
  auto ccfg = Bandit::critic_config();
  ccfg.twin = false;
  auto agent = bandit_agent(Bandit::config(), ccfg);
  const auto t = bandit.transition(1);

  force_head(agent->store(), "q1", {0.0});
  nn::Tape tape;
  CHECK(tape.item(agent->critic_loss_term(tape, t, 1.0)) == 1.0);

  const double q = agent->critic().q_values(agent->store(), t.prompt, *t.candidates)[1];
  CHECK(tape.item(agent->critic_loss_term(tape, t, q)) == 0.0);
}

TEST_CASE("SAC losses match finite differences") {
  Bandit bandit;
  auto cfg = Bandit::config();
  for (auto mode : {critic::InputMode::observation_action, critic::InputMode::observation}) {
    CAPTURE(critic::to_string(mode));
    auto ccfg = Bandit::critic_config();
    ccfg.input_mode = mode;
    ccfg.head_hidden = 8;
    sac::SacAgent agent(cfg, {4, 5, 6}, Bandit::tokenizer(), ccfg, 2, 5);
    const auto t0 = bandit.transition(0);
    const auto t1 = bandit.transition(1);

    const auto critic = testing::grad_check(agent.store(), [&](nn::Tape& tape) {
      const nn::Var a = agent.critic_loss_term(tape, t0, 0.8);
      const nn::Var b = agent.critic_loss_term(tape, t1, -0.3);
      return nn::scale(tape, nn::add(tape, a, b), 0.5);
    }, agent.critic_group());
    CHECK_MESSAGE(critic.max_rel_error < 1e-4, critic.worst);

    // Q is a constant of the actor loss, so hold it fixed while perturbing the encoder.
    const auto q0 = agent.actor_q(t0);
    const auto q1 = agent.actor_q(t1);
    const auto actor = testing::grad_check(agent.store(), [&](nn::Tape& tape) {
      const nn::Var a = agent.actor_loss_term(tape, t0, 0.3, q0);
      const nn::Var b = agent.actor_loss_term(tape, t1, 0.3, q1);
      return nn::scale(tape, nn::add(tape, a, b), 0.5);
    }, agent.actor_group());
    CHECK_MESSAGE(actor.max_rel_error < 1e-4, actor.worst);
  }
}

TEST_CASE("actor loss examples") {
  Bandit bandit;
  auto ccfg = Bandit::critic_config();
  ccfg.input_mode = critic::InputMode::observation;
  auto agent = bandit_agent(Bandit::config(), ccfg);
  const auto t = bandit.transition(0);
  auto loss_at = [&](double p, double alpha) {
    force_policy(*agent, agent->store(), p);
    nn::Tape tape;
    return tape.item(agent->actor_loss_term(tape, t, alpha));
  };

  SUBCASE("equal values leave no gradient on the policy at alpha 0") {
    force_head(agent->store(), "q1", {0.4, 0.4});
    force_head(agent->store(), "q2", {0.4, 0.4});
    agent->store().zero_grad();
    nn::Tape tape(agent->store());
    tape.backward(agent->actor_loss_term(tape, t, 0.0));
    for (auto id : agent->actor_group()) {
      for (double g : agent->store()[id].grad) CHECK(std::abs(g) < 1e-12);
    }
    agent->store().zero_grad();
  }
  SUBCASE("values (1, 0) at alpha 0: loss is -pi(best) and falls as pi(best) grows") {
    force_head(agent->store(), "q1", {1.0, 0.0});
    force_head(agent->store(), "q2", {1.0, 0.0});
    double previous = 1.0;
    for (double p : {0.2, 0.5, 0.9}) {
      const double loss = loss_at(p, 0.0);
      CHECK(loss == doctest::Approx(-p).epsilon(1e-12));
      CHECK(loss < previous);
      previous = loss;
    }
  }
  SUBCASE("a large temperature favours the uniform policy") {
    force_head(agent->store(), "q1", {1.0, 0.0});
    force_head(agent->store(), "q2", {1.0, 0.0});
    const double uniform = loss_at(0.5, 100.0);
    for (double p : {0.1, 0.3, 0.7, 0.9}) CHECK(loss_at(p, 100.0) > uniform);
  }
}

TEST_CASE("temperature update") {
  auto agent = bandit_agent();
  SUBCASE("entropy at target is a fixed point") {
    auto cfg = Bandit::config();
    cfg.auto_alpha = true;
    cfg.target_entropy = 0.3;
    auto a = bandit_agent(cfg);
    const double before = a->alpha();
    a->alpha_step(0.3);
    CHECK(a->alpha() == before);
  }
  SUBCASE("gradient sign matches finite differences of J(log alpha)") {
    auto cfg = Bandit::config();
    cfg.target_entropy = 0.4;
    auto a = bandit_agent(cfg);
    for (double h_bar : {0.1, 0.4, 0.9}) {
      const double la = std::log(a->alpha());
      auto j = [&](double log_alpha) { return std::exp(log_alpha) * (h_bar - cfg.target_entropy); };
      const double numeric = (j(la + 1e-6) - j(la - 1e-6)) / 2e-6;
      CHECK(a->alpha_gradient(h_bar) == doctest::Approx(numeric).epsilon(1e-6));
    }
  }
  SUBCASE("alpha rises below the target entropy and falls above it") {
    auto cfg = Bandit::config();
    cfg.target_entropy = 0.5;
    auto a = bandit_agent(cfg);
    const double start = a->alpha();
    a->alpha_step(0.1);
    CHECK(a->alpha() > start);
    auto b = bandit_agent(cfg);
    b->alpha_step(0.9);
    CHECK(b->alpha() < start);
    CHECK(b->alpha() > 0.0);
  }
  SUBCASE("defaults") {
    const sac::SacConfig plain;
    CHECK(plain.alpha_init == 0.005);
    CHECK(plain.target_entropy == 0.0);
    const auto her = sac::SacConfig::with_her();
    CHECK(her.alpha_init == 0.05);
    CHECK(her.target_entropy == 0.01);
    CHECK(her.sampling.strategy == replay::Sampling::ratio);
    CHECK(plain.update_frequency == 32);
    CHECK(plain.updates_per_cycle == 2);
    CHECK(plain.batch_size == 256);
    CHECK(plain.alpha_lr == 2e-3);
  }
  SUBCASE("invalid configuration") {
    auto cfg = Bandit::config();
    cfg.target_entropy = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = Bandit::config();
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("bandit convergence") {
  const auto out = testing::train_bandit(2000, 11);
  for (const auto& q : {out.q1, out.q2}) {
    CHECK(std::abs(q[0] - 1.0) < 0.05);
    CHECK(std::abs(q[1]) < 0.05);
  }
  CHECK(out.pi[0] > 0.9);
}

namespace {

struct Small {
  env::Playground world{env::Lexicon::standard(), env::EnvConfig::simplified()};

  static sac::SacConfig config() {
    sac::SacConfig c;
    c.update_frequency = 4;
    c.batch_size = 16;
    c.buffer_capacity = 2000;
    c.warmup_steps = 0;
    return c;
  }
  std::unique_ptr<sac::SacTrainer> trainer(sac::SacConfig cfg, critic::CriticConfig ccfg = {},
                                           std::uint64_t seed = 9) const {
    ccfg.head_hidden = 16;
    return std::make_unique<sac::SacTrainer>(world, cfg, policy::ScorerConfig{8, 16, 6}, ccfg, 2, seed);
  }
};

bool same(const nn::ParameterStore& a, const nn::ParameterStore& b, std::span<const nn::ParamId> ids) {
  for (auto id : ids) {
    if (a[id].value != b[id].value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("warmup isolation") {
  Small small;
  auto cfg = Small::config();
  cfg.warmup_steps = 1'000'000;
  cfg.auto_alpha = true;

  SUBCASE("actor head and alpha stay bit-identical") {
    auto tr = small.trainer(cfg);
    const nn::ParameterStore initial = tr->agent().store();
    const double alpha = tr->agent().alpha();
    for (int i = 0; i < 8; ++i) {
      const auto m = tr->run_cycle();
      CHECK(m.warmup);
      CHECK_FALSE(m.actor_loss.has_value());
    }
    CHECK(tr->updates() > 0);
    CHECK(same(initial, tr->agent().store(), tr->agent().actor_exclusive()));
    CHECK(tr->agent().alpha() == alpha);
    CHECK_FALSE(same(initial, tr->agent().store(), tr->agent().critic().head_ids()));
  }
  SUBCASE("without shared backprop the encoder stays bit-identical") {
    critic::CriticConfig ccfg;
    ccfg.shared_backprop = false;
    auto tr = small.trainer(cfg, ccfg);
    const nn::ParameterStore initial = tr->agent().store();
    for (int i = 0; i < 8; ++i) tr->run_cycle();
    CHECK(tr->updates() > 0);
    CHECK(same(initial, tr->agent().store(), tr->agent().scorer().encoder_ids()));
    CHECK(same(initial, tr->agent().store(), tr->agent().actor_exclusive()));
    CHECK_FALSE(same(initial, tr->agent().store(), tr->agent().critic().head_ids()));
  }
}

TEST_CASE("trainer determinism and metrics") {
  Small small;
  auto cfg = sac::SacConfig::with_her();
  cfg.update_frequency = 4;
  cfg.batch_size = 16;
  cfg.buffer_capacity = 2000;
  cfg.warmup_steps = 40;
  auto a = small.trainer(cfg);
  auto b = small.trainer(cfg);
  long last_steps = 0;
  for (int i = 0; i < 12; ++i) {
    const auto ma = a->run_cycle();
    const auto mb = b->run_cycle();
    CHECK(ma.env_steps == mb.env_steps);
    CHECK(ma.critic_loss == mb.critic_loss);
    CHECK(ma.actor_loss == mb.actor_loss);
    CHECK(ma.alpha == mb.alpha);
    CHECK(ma.success_rate == mb.success_rate);
    CHECK(ma.env_steps > last_steps);
    CHECK(ma.env_steps == 8 * (i + 1));
    last_steps = ma.env_steps;
    CHECK(ma.buffer_hindsight_fraction.has_value());
    if (ma.success_rate) CHECK((*ma.success_rate >= 0.0 && *ma.success_rate <= 1.0));
  }
  CHECK(a->agent().store().snapshot() == b->agent().store().snapshot());
  CHECK(a->buffer().composition().hindsight > 0);
}

TEST_CASE("thread count does not change results") {
  Small small;
  auto cfg = Small::config();
  auto one = small.trainer(cfg);
  cfg.threads = 3;
  auto three = small.trainer(cfg);
  for (int i = 0; i < 6; ++i) {
    one->run_cycle();
    three->run_cycle();
  }
  CHECK(one->agent().store().snapshot() == three->agent().store().snapshot());
}
