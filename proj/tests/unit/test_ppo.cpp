#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "sactext/common/errors.hpp"
#include "sactext/ppo/ppo.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace sactext;
using namespace sactext::ppo;

namespace {

const char* kPrompt =
    "Goal: Grow red lion\n"
    "You see: red water, red lion, blue rose\n"
    "You are on: nothing\n"
    "You are holding: nothing\n"
    "You have grown: nothing\n"
    "Action: ";

const char* kOtherPrompt =
    "Goal: Grasp blue rose\n"
    "You see: red water, red lion, blue rose\n"
    "You are on: nothing\n"
    "You are holding: nothing\n"
    "You have grown: nothing\n"
    "Action: ";

std::shared_ptr<const std::vector<std::string>> candidates() {
  return std::make_shared<const std::vector<std::string>>(std::vector<std::string>{
      "Go to red water", "Go to red lion", "Go to blue rose", "Grasp", "Release"});
}

std::unique_ptr<PpoAgent> agent(PpoConfig cfg = {}, std::uint64_t seed = 4) {
  cfg.value_hidden = 8;
  return std::make_unique<PpoAgent>(cfg, policy::ScorerConfig{4, 6, 6},
                                    policy::Tokenizer::for_lexicon(env::Lexicon::standard()), seed);
}

Sample fresh_sample(const PpoAgent& a, const char* prompt, int action, double advantage) {
  Sample s;
  s.prompt = prompt;
  s.candidates = candidates();
  s.action = action;
  const auto e = a.evaluate(prompt, *s.candidates);
  s.old_logprob = e.log_probs[static_cast<std::size_t>(action)];
  for (double lp : e.log_probs) s.old_probs.push_back(std::exp(lp));
  s.advantage = advantage;
  s.ret = 0.5;
  return s;
}

env::Descriptor d(const env::Lexicon& lex, const char* color, const char* kind) {
  return {*lex.find_color(color), *lex.find_kind(kind)};
}

}  // namespace

TEST_CASE("GAE examples") {
  SUBCASE("zero rewards and values") {
    const auto g = gae_advantages(std::vector<double>(4, 0.0), std::vector<double>(4, 0.0),
                                  {false, false, true, false}, 0.0, 0.99, 0.95);
    for (double a : g.advantages) CHECK(a == 0.0);
  }
  SUBCASE("single terminal step") {
    const auto g = gae_advantages(std::vector<double>{1.0}, std::vector<double>{0.0}, {true}, 5.0, 0.99, 0.99);
    CHECK(g.advantages[0] == 1.0);
    CHECK(g.returns[0] == 1.0);
  }
  SUBCASE("three fixed steps") {
    const std::vector<double> r{0.0, 0.5, 1.0}, v{0.2, -0.1, 0.4};
    const std::vector<bool> done{false, false, false};
    const auto g = gae_advantages(r, v, done, 0.3, 0.9, 0.8);
    const auto oracle = testing::brute_force_gae(r, v, done, 0.3, 0.9, 0.8);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(g.advantages[i] - oracle[i]) < 1e-12);
  }
  SUBCASE("mismatched lengths") {
    CHECK_THROWS_AS(gae_advantages(std::vector<double>{1.0}, std::vector<double>{}, {true}, 0.0, 0.9, 0.9),
                    ShapeError);
  }
}

TEST_CASE("GAE matches the brute-force oracle on 100 random rollouts") {
  Rng rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(40);
    std::vector<double> r(n), v(n);
    std::vector<bool> done(n);
    for (std::size_t k = 0; k < n; ++k) {
      r[k] = rng.bernoulli(0.2) ? 1.0 : 0.0;
      v[k] = rng.uniform(-1.0, 1.0);
      done[k] = rng.bernoulli(0.15);
    }
    const double boot = rng.uniform(-1.0, 1.0);
    const double gamma = rng.uniform(0.8, 1.0), lambda = rng.uniform(0.0, 1.0);
    const auto g = gae_advantages(r, v, done, boot, gamma, lambda);
    const auto oracle = testing::brute_force_gae(r, v, done, boot, gamma, lambda);
    for (std::size_t k = 0; k < n; ++k) {
      worst = std::max(worst, std::abs(g.advantages[k] - oracle[k]));
      CHECK(g.returns[k] == doctest::Approx(g.advantages[k] + v[k]).epsilon(1e-14));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("advantage normalization") {
  std::vector<double> xs{1.0, 2.0, 3.0, 6.0};
  normalize(xs);
  double mean = 0.0, var = 0.0;
  for (double x : xs) mean += x / 4;
  for (double x : xs) var += (x - mean) * (x - mean) / 4;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> flat{2.0, 2.0};
  normalize(flat);
  CHECK(flat == std::vector<double>{0.0, 0.0});
}

TEST_CASE("discrete KL") {
  const std::vector<double> p{0.5, 0.5}, q{0.9, 0.1};
  CHECK(discrete_kl(p, q) == doctest::Approx(0.5108).epsilon(1e-4));
  CHECK(std::abs(discrete_kl(p, q) - (0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1))) < 1e-15);
  CHECK(discrete_kl(q, q) == 0.0);
  CHECK_THROWS_AS(discrete_kl(p, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("aligned subgoal relation") {
  const auto lex = env::Lexicon::standard();
  const auto red_lion = d(lex, "red", "lion"), blue_tree = d(lex, "blue", "tree"), red_rose = d(lex, "red", "rose");
  using env::Goal;
  CHECK(aligned_filter(Goal::grow(red_lion), Goal::grasp(red_lion)));
  CHECK_FALSE(aligned_filter(Goal::grasp(red_lion), Goal::grasp(blue_tree)));
  CHECK_FALSE(aligned_filter(Goal::grow(red_lion), Goal::grow(red_lion)));
  CHECK_FALSE(aligned_filter(Goal::grasp(red_lion), Goal::grow(red_lion)));
  CHECK_FALSE(aligned_filter(Goal::grow(red_lion), Goal::grasp(red_rose)));

  const auto gg = Goal::grow_then_grasp(red_lion, blue_tree);
  CHECK(aligned_filter(gg, Goal::grow(red_lion)));
  CHECK(aligned_filter(gg, Goal::grasp(blue_tree)));
  CHECK(aligned_filter(gg, Goal::grasp(red_lion)));
  CHECK_FALSE(aligned_filter(gg, Goal::grow(blue_tree)));

  const auto gw = Goal::grow_then_grow(red_lion, red_rose);
  for (const auto& sub : {Goal::grow(red_lion), Goal::grow(red_rose), Goal::grasp(red_lion), Goal::grasp(red_rose)}) {
    CHECK(aligned_filter(gw, sub));
  }
  CHECK_FALSE(aligned_filter(gw, Goal::grow_then_grow(red_rose, red_lion)));
  CHECK_FALSE(aligned_filter(gw, gw));
}

TEST_CASE("clip term") {
  nn::Tape tape;
  CHECK(tape.item(clip_term(tape, tape.scalar(1.0), 2.0, 1.0, 0.2)) == -2.0);
  CHECK(tape.item(clip_term(tape, tape.scalar(2.0), 1.0, 1.0, 0.2)) == doctest::Approx(-1.2).epsilon(1e-15));

  SUBCASE("centers of 1 reproduce the standard clipped surrogate bit for bit") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
      const double r = rng.uniform(0.0, 3.0), adv = rng.uniform(-2.0, 2.0), eps = rng.uniform(0.05, 0.5);
      const double standard = -std::min(r * adv, std::clamp(r, 1.0 - eps, 1.0 + eps) * adv);
      CHECK(tape.item(clip_term(tape, tape.scalar(r), adv, 1.0, eps)) == standard);
    }
  }
}

TEST_CASE("first-epoch identities without relabeling") {
  for (auto variant : {Variant::clip, Variant::kl}) {
    CAPTURE(to_string(variant));
    PpoConfig cfg;
    cfg.variant = variant;
    auto a = agent(cfg);
    const auto s = fresh_sample(*a, kPrompt, 2, 1.3);
    CHECK(std::abs(a->importance_ratio(s) - 1.0) < 1e-9);
    nn::Tape tape;
    LossParts parts;
    a->loss_term(tape, s, &parts);
    CHECK(std::abs(parts.ratio - 1.0) < 1e-9);
    CHECK(std::abs(parts.kl) < 1e-9);
  }
}

TEST_CASE("first-epoch gradient is the vanilla policy gradient") {
  for (auto variant : {Variant::clip, Variant::kl}) {
    CAPTURE(to_string(variant));
    PpoConfig cfg;
    cfg.variant = variant;
    cfg.entropy_coef = 0.0;
    cfg.value_coef = 0.0;
    auto a = agent(cfg);
    const auto s = fresh_sample(*a, kPrompt, 1, -0.7);
    auto& store = a->store();

    store.zero_grad();
    {
      nn::Tape tape(store);
      tape.backward(a->loss_term(tape, s));
    }
    const auto ppo_grad = [&] {
      std::vector<std::vector<double>> g;
      for (auto id : store.all_ids()) g.push_back(store[id].grad);
      return g;
    }();

    store.zero_grad();
    {
      nn::Tape tape(store);
      const auto& sc = a->scorer();
      const auto logp = sc.policy_log_probs(tape, store, sc.tokenize_prompt(s.prompt), sc.tokenize_actions(*s.candidates));
      tape.backward(nn::scale(tape, nn::pick(tape, logp, 1), -s.advantage));
    }
    double worst = 0.0;
    const auto ids = store.all_ids();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      for (std::size_t i = 0; i < ppo_grad[k].size(); ++i) {
        worst = std::max(worst, testing::rel_error(ppo_grad[k][i], store[ids[k]].grad[i]));
      }
    }
    store.zero_grad();
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("relabeled ratios") {
  auto a = agent();
  auto s = fresh_sample(*a, kPrompt, 3, 1.0);
  SUBCASE("relabeling with the original goal changes nothing") {
    Sample same = s;
    same.relabeled = true;
    CHECK(a->importance_ratio(same) == a->importance_ratio(s));
  }
  SUBCASE("a different goal gives a ratio away from 1") {
    Sample other = s;
    other.prompt = kOtherPrompt;
    other.relabeled = true;
    CHECK(std::abs(a->importance_ratio(other) - 1.0) > 1e-6);
  }
}

TEST_CASE("PPO losses match finite differences") {
  for (auto variant : {Variant::clip, Variant::kl}) {
    CAPTURE(to_string(variant));
    PpoConfig cfg;
    cfg.variant = variant;
    auto a = agent(cfg, 8);
    auto s1 = fresh_sample(*a, kPrompt, 0, 0.9);
    auto s2 = fresh_sample(*a, kOtherPrompt, 4, -1.1);
    // Move the old policy so ratios differ from 1 on both sides of the clip range.
    s1.old_logprob -= 0.1;
    s2.old_logprob += 0.05;
    s2.center = 1.1;
    const auto r = testing::grad_check(a->store(), [&](nn::Tape& tape) {
      return nn::add(tape, a->loss_term(tape, s1), a->loss_term(tape, s2));
    });
    CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
  }
}

TEST_CASE("PPO trainer") {
  env::Playground world(env::Lexicon::standard(), env::EnvConfig::simplified());
  PpoConfig cfg;
  cfg.rollout_length = 64;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.value_hidden = 8;
  auto make = [&](PpoConfig c) { return std::make_unique<PpoTrainer>(world, c, policy::ScorerConfig{4, 8, 6}, 2, 13); };

  SUBCASE("deterministic, first-epoch ratio 1 and KL 0") {
    for (auto variant : {Variant::clip, Variant::kl}) {
      cfg.variant = variant;
      auto a = make(cfg);
      auto b = make(cfg);
      for (int i = 0; i < 3; ++i) {
        const auto ma = a->run_cycle();
        const auto mb = b->run_cycle();
        CHECK(ma.env_steps == 64 * (i + 1));
        CHECK(ma.actor_loss == mb.actor_loss);
        CHECK(ma.value_loss == mb.value_loss);
        CHECK_FALSE(ma.buffer_hindsight_fraction.has_value());
        CHECK(a->last_check().relabeled == 0);
        CHECK(a->last_check().max_ratio_deviation < 1e-9);
        CHECK(a->last_check().max_kl < 1e-9);
      }
      CHECK(a->agent().store().snapshot() == b->agent().store().snapshot());
    }
  }
  SUBCASE("relabeling appends flagged samples") {
    cfg.her_mode = HerMode::plain;
    auto t = make(cfg);
    std::size_t relabeled = 0;
    for (int i = 0; i < 4; ++i) {
      const auto m = t->run_cycle();
      CHECK(m.buffer_hindsight_fraction.has_value());
      relabeled += t->last_check().relabeled;
      CHECK(t->last_check().max_ratio_deviation < 1e-9);
      const auto& samples = t->last_samples();
      const auto first_relabeled = std::find_if(samples.begin(), samples.end(), [](const Sample& s) { return s.relabeled; });
      CHECK(std::all_of(first_relabeled, samples.end(), [](const Sample& s) { return s.relabeled; }));
      CHECK(std::all_of(samples.begin(), samples.end(), [](const Sample& s) { return s.center == 1.0; }));
    }
    CHECK(relabeled > 0);
  }
  SUBCASE("centered mode records the start ratio as the center") {
    cfg.her_mode = HerMode::aligned_centered;
    auto t = make(cfg);
    for (int i = 0; i < 6; ++i) {
      t->run_cycle();
      for (const auto& s : t->last_samples()) {
        if (!s.relabeled) CHECK(s.center == 1.0);
      }
    }
  }
  SUBCASE("invalid configuration") {
    cfg.clip_epsilon = 1.5;
    CHECK_THROWS_AS(make(cfg), ConfigError);
    CHECK_THROWS_AS(parse_her_mode("sometimes"), ConfigError);
  }
}
