#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "sactext/common/errors.hpp"
#include "sactext/common/parallel.hpp"
#include "sactext/nn/adam.hpp"
#include "sactext/nn/tape.hpp"
#include "support/gradcheck.hpp"

using namespace sactext;
using namespace sactext::nn;

namespace {

ParamId add_random(ParameterStore& store, const std::string& name, Shape shape, Rng& rng, double scale = 1.0) {
  const auto id = store.add(name, std::move(shape));
  for (auto& x : store[id].value) x = rng.uniform(-scale, scale);
  return id;
}

}  // namespace

TEST_CASE("dense forward examples") {
  ParameterStore store;
  const auto w = store.add("id.w", {2, 2});
  const auto b = store.add("id.b", {2});
  store[w].value = {1, 0, 0, 1};
  Tape tape;
  CHECK(tape.value(dense(tape, store, w, b, tape.constant({3, -1}))) == std::vector<double>{3, -1});

  const auto w2 = store.add("row.w", {1, 2});
  const auto b2 = store.add("row.b", {1});
  store[w2].value = {1, 1};
  store[b2].value = {0.5};
  CHECK(tape.item(dense(tape, store, "row", tape.constant({1, 2}))) == 3.5);

  const auto w3 = store.add("zero.w", {3, 2});
  const auto b3 = store.add("zero.b", {3});
  CHECK(tape.value(dense(tape, store, w3, b3, tape.constant({7, -9}))) == std::vector<double>{0, 0, 0});

  try {
    dense(tape, store, "row", tape.constant({1, 2, 3}));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("'row'") != std::string::npos);
  }
}

TEST_CASE("backward basics") {
  ParameterStore store;
  const auto w = store.add("l.w", {2, 3});
  const auto unused = store.add("unused", {4});
  Rng rng(3);
  for (auto& x : store[w].value) x = rng.uniform(-1, 1);
  const std::vector<double> x = {0.5, -2.0, 3.0};
  {
    Tape tape(store);
    tape.backward(sum(tape, dense(tape, store, w, std::nullopt, tape.constant(x))));
  }
  // d/dW sum(W x) = outer(1, x)
  CHECK(store[w].grad == std::vector<double>{0.5, -2.0, 3.0, 0.5, -2.0, 3.0});
  CHECK(store[unused].grad == std::vector<double>(4, 0.0));
  {
    Tape tape(store);
    tape.backward(sum(tape, dense(tape, store, w, std::nullopt, tape.constant(x))));
  }
  CHECK(store[w].grad == std::vector<double>{1.0, -4.0, 6.0, 1.0, -4.0, 6.0});

  Tape tape(store);
  CHECK_THROWS_AS(tape.backward(dense(tape, store, w, std::nullopt, tape.constant(x))), ContractError);
}

TEST_CASE("finite differences on every primitive") {
  Rng rng(17);
  ParameterStore store;
  const auto a = add_random(store, "a", {5}, rng);
  const auto b = add_random(store, "b", {5}, rng);
  const auto w = add_random(store, "w", {3, 5}, rng);
  const auto bias = add_random(store, "bias", {3}, rng);
  const auto emb = add_random(store, "emb", {4, 5}, rng);
  const auto ids = store.all_ids();

  auto check = [&](const char* name, const std::function<Var(Tape&)>& f) {
    const auto r = testing::grad_check(store, f, ids);
    INFO(std::string(name) << ": " << r.worst);
    CHECK(r.max_rel_error < 1e-4);
  };
  auto raw = [&](Tape& t, ParamId id) {
    // a rank-1 parameter is an {n, 1} matrix; multiplying by [1] lifts it onto the tape
    return dense(t, store, id, std::nullopt, t.constant({1.0}));
  };

  check("dense", [&](Tape& t) { return sum(t, square(t, dense(t, store, w, bias, raw(t, a)))); });
  check("dense_slice", [&](Tape& t) {
    return sum(t, square(t, dense_slice(t, store, w, 2, t.constant({0.3, -0.7, 1.1}), bias)));
  });
  check("embed_mean", [&](Tape& t) {
    return dot(t, embed_mean(t, store, emb, std::vector<int>{0, 2, 2, 3}), raw(t, b));
  });
  check("add/sub/mul", [&](Tape& t) {
    return sum(t, mul(t, add(t, raw(t, a), raw(t, b)), sub(t, raw(t, a), raw(t, b))));
  });
  check("scale/add_scalar", [&](Tape& t) { return sum(t, square(t, add_scalar(t, scale(t, raw(t, a), -2.5), 0.7))); });
  check("relu", [&](Tape& t) { return dot(t, relu(t, raw(t, a)), raw(t, b)); });
  check("exp", [&](Tape& t) { return sum(t, exp(t, raw(t, a))); });
  check("clamp", [&](Tape& t) { return dot(t, clamp(t, raw(t, a), -0.4, 0.4), raw(t, b)); });
  check("minimum", [&](Tape& t) { return sum(t, square(t, minimum(t, raw(t, a), raw(t, b)))); });
  {
    // finite differences see through a stop-gradient, so check it directly
    store.zero_grad();
    Tape t(store);
    t.backward(dot(t, detach(t, raw(t, a)), raw(t, b)));
    CHECK(store[a].grad == std::vector<double>(5, 0.0));
    CHECK(store[b].grad == store[a].value);
    store.zero_grad();
  }
  check("log_softmax/pick", [&](Tape& t) {
    return pick(t, log_softmax(t, mul(t, raw(t, a), raw(t, b))), 2);
  });
  check("concat/sum_scalars", [&](Tape& t) {
    const std::vector<Var> parts = {raw(t, a), raw(t, bias)};
    const Var c = concat(t, parts);
    const std::vector<Var> scalars = {pick(t, c, 1), pick(t, c, 6), dot(t, c, c)};
    return sum_scalars(t, scalars);
  });
}

TEST_CASE("finite differences on a random 10-parameter net") {
  Rng rng(8);
  ParameterStore store;
  const auto w1 = add_random(store, "l1.w", {2, 3}, rng);
  const auto b1 = add_random(store, "l1.b", {2}, rng);
  const auto w2 = add_random(store, "l2.w", {1, 2}, rng);
  REQUIRE(store.element_count() == 10);
  const auto r = testing::grad_check(store, [&](Tape& t) {
    const Var h = relu(t, dense(t, store, w1, b1, t.constant({0.4, -1.3, 0.9})));
    return square(t, dense(t, store, w2, std::nullopt, h));
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("log_softmax properties") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(1 + rng.index(40));
    for (auto& x : logits) x = rng.uniform(-30, 30);
    Tape tape;
    const auto ls = tape.value(log_softmax(tape, tape.constant(logits)));
    double total = 0.0;
    for (double x : ls) total += std::exp(x);
    CHECK(std::abs(total - 1.0) < 1e-12);
    const double shift = rng.uniform(-100, 100);
    auto shifted = logits;
    for (auto& x : shifted) x += shift;
    const auto& ls2 = tape.value(log_softmax(tape, tape.constant(shifted)));
    for (std::size_t i = 0; i < ls.size(); ++i) CHECK(std::abs(ls[i] - ls2[i]) < 1e-12);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient is a fixed point") {
    ParameterStore store;
    const auto p = store.add("p", {3});
    store[p].value = {1, 2, 3};
    adam_step(store, AdamConfig{0.1});
    CHECK(store[p].value == std::vector<double>{1, 2, 3});
  }
  SUBCASE("first step moves by the learning rate") {
    ParameterStore store;
    const auto p = store.add("p", {1});
    store[p].value = {0.0};
    store[p].grad = {1.0};
    adam_step(store, AdamConfig{0.1});
    // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    CHECK(store[p].value[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(store[p].grad[0] == 0.0);
  }
  SUBCASE("global norm clipping") {
    ParameterStore store;
    const auto p = store.add("p", {2});
    store[p].grad = {3.0, 4.0};
    AdamConfig cfg;
    cfg.max_grad_norm = 0.5;
    const auto report = adam_step(store, cfg);
    CHECK(report.grad_norm == doctest::Approx(5.0));
    CHECK(report.clip_scale == doctest::Approx(0.1));
    // first moment holds (1 - beta1) * clipped gradient
    CHECK(store[p].m[0] == doctest::Approx(0.1 * 0.3));
    CHECK(store[p].m[1] == doctest::Approx(0.1 * 0.4));
  }
  SUBCASE("non-finite gradient aborts without touching values") {
    ParameterStore store;
    const auto p = store.add("p", {2});
    store[p].value = {1, 1};
    store[p].grad = {0.5, std::nan("")};
    CHECK_THROWS_AS(adam_step(store, AdamConfig{}), TrainingAbort);
    CHECK(store[p].value == std::vector<double>{1, 1});
  }
}

TEST_CASE("snapshots and checkpoints") {
  Rng rng(12);
  ParameterStore store;
  const auto w = add_random(store, "l.w", {3, 4}, rng);
  const auto b = add_random(store, "l.b", {3}, rng);
  const std::vector<double> x = {0.1, 0.2, -0.3, 0.4};
  auto forward = [&] {
    Tape t;
    return t.value(dense(t, store, w, b, t.constant(x)));
  };
  const auto before = forward();
  const auto snap = store.snapshot();
  for (auto& v : store[w].value) v += 1.0;
  CHECK(forward() != before);
  store.restore(snap);
  CHECK(forward() == before);

  store[w].grad[0] = 1.0;
  adam_step(store, AdamConfig{});
  const auto path = std::filesystem::temp_directory_path() / "sactext_params_test.bin";
  store.save(path);
  ParameterStore other;
  other.add("l.w", {3, 4});
  other.add("l.b", {3});
  other.load(path);
  for (ParamId id = 0; id < store.size(); ++id) {
    CHECK(other[id].value == store[id].value);
    CHECK(other[id].m == store[id].m);
    CHECK(other[id].v == store[id].v);
    CHECK(other[id].adam_steps == store[id].adam_steps);
  }
  ParameterStore wrong;
  wrong.add("l.w", {4, 3});
  wrong.add("l.b", {3});
  CHECK_THROWS_AS(wrong.load(path), ShapeError);
  std::filesystem::remove(path);
}

TEST_CASE("per-worker gradient buffers sum to the serial gradient") {
  Rng rng(21);
  ParameterStore store;
  const auto w = add_random(store, "l.w", {4, 6}, rng);
  const auto b = add_random(store, "l.b", {4}, rng);
  std::vector<std::vector<double>> xs(37, std::vector<double>(6));
  for (auto& x : xs) {
    for (auto& v : x) v = rng.uniform(-1, 1);
  }
  auto loss = [&](Tape& t, const std::vector<double>& x) {
    return sum(t, square(t, relu(t, dense(t, store, w, b, t.constant(x)))));
  };
  for (const auto& x : xs) {
    Tape t(store);
    t.backward(loss(t, x));
  }
  const auto serial = store[w].grad;
  store.zero_grad();

  const int chunks = 5;
  std::vector<GradientBuffer> buffers(chunks, GradientBuffer(store));
  for_each_chunk(xs.size(), chunks, 3, [&](std::size_t c, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Tape t(store, buffers[c]);
      t.backward(loss(t, xs[i]));
    }
  });
  for (const auto& buf : buffers) buf.add_into(store);
  for (std::size_t i = 0; i < serial.size(); ++i) CHECK(store[w].grad[i] == doctest::Approx(serial[i]).epsilon(1e-12));
}
