#include <doctest.h>

#include <cmath>

#include "fpnseg/error.hpp"
#include "fpnseg/optim.hpp"
#include "support/oracles.hpp"

using namespace fpnseg;
using fpnseg::testing::random_tensor;

TEST_CASE("learning rate decays as lr0 / (1 + decay * t)") {
  AdamConfig c;
  CHECK(adam_learning_rate(c, 1) == doctest::Approx(1e-4 / (1 + 1e-4)));
  CHECK(adam_learning_rate(c, 10000) == doctest::Approx(0.5e-4));
  c.decay = 0;
  CHECK(adam_learning_rate(c, 500) == 1e-4);
}

TEST_CASE("ten Adam steps agree with the scalar reference") {
  ParameterSet params;
  params.add("a", random_tensor({3, 4}, 1));
  params.add("b", random_tensor({5}, 2));
  AdamConfig cfg;
  cfg.lr0 = 1e-2;
  cfg.decay = 0.05;
  testing::AdamReference ref{cfg.lr0, cfg.decay, cfg.beta1, cfg.beta2, cfg.epsilon, {}, {}, 0};
  std::vector<double> w;
  for (const auto& p : params)
    for (float v : p.value.data()) w.push_back(v);
  for (int t = 0; t < 10; ++t) {
    GradMap<float> g;
    g["a"] = random_tensor({3, 4}, 100 + static_cast<uint64_t>(t));
    g["b"] = random_tensor({5}, 200 + static_cast<uint64_t>(t), -0.01, 0.01);
    std::vector<double> flat;
    for (const auto& name : {"a", "b"})
      for (float v : g[name].data()) flat.push_back(v);
    adam_step(params, g, cfg);
    ref.step(w, flat);
  }
  size_t k = 0;
  for (const auto& p : params)
    for (float v : p.value.data()) CHECK(std::abs(v - w[k++]) <= 1e-6);
  CHECK(params.get("a").step == 10);
}

TEST_CASE("weight decay mode adds decay * w to the gradient") {
  ParameterSet params;
  params.add("w", Tensor({1}, 2.0f));
  AdamConfig cfg;
  cfg.decay_mode = DecayMode::Weight;
  cfg.decay = 0.5;
  cfg.lr0 = 0.1;
  GradMap<float> g{{"w", Tensor({1}, 0.0f)}};
  adam_step(params, g, cfg);
  // First step: m_hat / sqrt(v_hat) = sign(grad) = 1 for grad = 0.5 * 2.
  CHECK(params.get("w").value[0] == doctest::Approx(2.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("adam_step validates gradients before touching parameters") {
  ParameterSet params;
  params.add("a", Tensor({2}, 1.0f));
  params.add("b", Tensor({2}, 1.0f));
  GradMap<float> g{{"a", Tensor({2}, 1.0f)}};
  CHECK_THROWS_AS(adam_step(params, g, AdamConfig{}), ValueError);
  CHECK(params.get("a").value == Tensor({2}, 1.0f));
  g["b"] = Tensor({3}, 1.0f);
  CHECK_THROWS_AS(adam_step(params, g, AdamConfig{}), ShapeError);
}

TEST_CASE("parameter set keeps insertion order and rejects duplicates") {
  ParameterSet ps;
  ps.add("z", Tensor({2}));
  ps.add("a", Tensor({3, 2}));
  CHECK(ps.items()[0].name == "z");
  CHECK(ps.scalar_count() == 8);
  CHECK_THROWS_AS(ps.add("z", Tensor({1})), ValueError);
  CHECK_THROWS_AS(ps.get("missing"), ValueError);
}
