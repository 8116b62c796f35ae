#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "ap/mlm.hpp"
#include "ap/promptgen.hpp"

using namespace ap;

namespace {

PromptGenConfig tiny_cfg() {
  PromptGenConfig cfg;
  cfg.d_model = 16;
  cfg.d_hidden = 12;
  cfg.s = 2;
  cfg.seed = 21;
  return cfg;
}

Tensor<double> random_input(int n, int d, uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t({n, d});
  for (auto& x : t.data) x = rng.normal(0.0, 0.5);
  return t;
}

}  // namespace

TEST_CASE("config validation") {
  auto bad = tiny_cfg();
  bad.s = 0;
  CHECK_THROWS_AS(init_prompt_layer<double>(bad), Error);
}

TEST_CASE("encoder state shapes and order sensitivity") {
  auto layer = init_prompt_layer<double>(tiny_cfg());

  Graph<double> g1;
  Value one = encode_input(g1, layer, g1.input(random_input(1, 16, 1)));
  CHECK(g1.value(one).shape == Shape{1, 12});

  // reversing the input rows must change the states of a random layer
  auto x = random_input(6, 16, 2);
  Tensor<double> rev({6, 16});
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 16; ++j) rev.at(i, j) = x.at(5 - i, j);
  Graph<double> g2, g3;
  const auto fwd = g2.value(encode_input(g2, layer, g2.input(x)));
  const auto bwd = g3.value(encode_input(g3, layer, g3.input(rev)));
  double diff = 0;
  for (size_t i = 0; i < fwd.data.size(); ++i) diff = std::max(diff, std::abs(fwd.data[i] - bwd.data[i]));
  CHECK(diff > 1e-6);

  Graph<double> g4;
  CHECK_THROWS_AS(encode_input(g4, layer, g4.input(Tensor<double>::zeros({0, 16}))), Error);
}

TEST_CASE("zero parameters give all-zero encoder states") {
  auto layer = init_prompt_layer<double>(tiny_cfg());
  for (auto* p : layer.params())
    for (auto& v : p->value.data) v = 0.0;
  Graph<double> g;
  const auto states = g.value(encode_input(g, layer, g.input(random_input(4, 16, 3))));
  for (double v : states.data) CHECK(v == 0.0);
}

TEST_CASE("attention weights") {
  auto layer = init_prompt_layer<double>(tiny_cfg());

  SECTION("singleton input gets weight one") {
    Graph<double> g;
    Value enc = encode_input(g, layer, g.input(random_input(1, 16, 4)));
    Value state = g.input(random_input(1, 12, 5));
    auto [ctx, w] = attend(g, layer, state, enc);
    CHECK(g.value(w).shape == Shape{1, 1});
    CHECK(g.value(w).at(0, 0) == Catch::Approx(1.0).margin(1e-12));
    for (int j = 0; j < 12; ++j) CHECK(g.value(ctx).at(0, j) == Catch::Approx(g.value(enc).at(0, j)).margin(1e-12));
  }

  SECTION("identical encoder states get uniform weights") {
    Graph<double> g;
    auto row = random_input(1, 12, 6);
    Tensor<double> same({5, 12});
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 12; ++j) same.at(i, j) = row.at(0, j);
    auto [ctx, w] = attend(g, layer, g.input(random_input(1, 12, 7)), g.input(same));
    for (int j = 0; j < 5; ++j) CHECK(g.value(w).at(0, j) == Catch::Approx(0.2).margin(1e-9));
  }

  SECTION("weights sum to one on random inputs") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
      Graph<double> g;
      const int n = 1 + static_cast<int>(seed % 7);
      auto [ctx, w] = attend(g, layer, g.input(random_input(1, 12, seed + 50)),
                             g.input(random_input(n, 12, seed + 100)));
      double s = 0;
      for (int j = 0; j < n; ++j) s += g.value(w).at(0, j);
      CHECK(s == Catch::Approx(1.0).margin(1e-6));
    }
  }
}

TEST_CASE("generate_prompt shapes and attention trace") {
  auto layer = init_prompt_layer<double>(tiny_cfg());
  Graph<double> g;
  auto ap = generate_prompt(g, layer, g.input(random_input(5, 16, 8)));
  CHECK(g.value(ap.vectors).shape == Shape{2, 16});
  REQUIRE(ap.attention_trace.shape == Shape{2, 5});
  for (int i = 0; i < 2; ++i) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += ap.attention_trace.at(i, j);
    CHECK(s == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("prompt is a deterministic function of layer and input") {
  auto layer = init_prompt_layer<double>(tiny_cfg());
  auto x = random_input(4, 16, 9);
  auto run = [&]() {
    Graph<double> g;
    return g.value(generate_prompt(g, layer, g.input(x)).vectors).data;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("prompt depends on the input sentence") {
  // the adaptive claim: different inputs map to different prompts
  for (uint64_t trial = 0; trial < 100; ++trial) {
    auto cfg = tiny_cfg();
    cfg.seed = 1000 + trial;
    auto layer = init_prompt_layer<double>(cfg);
    Graph<double> ga, gb;
    const auto ha = ga.value(generate_prompt(ga, layer, ga.input(random_input(5, 16, 2 * trial))).vectors);
    const auto hb = gb.value(generate_prompt(gb, layer, gb.input(random_input(5, 16, 2 * trial + 1))).vectors);
    double diff = 0;
    for (size_t i = 0; i < ha.data.size(); ++i) diff = std::max(diff, std::abs(ha.data[i] - hb.data[i]));
    CHECK(diff > 1e-6);
  }
}

TEST_CASE("prompt reacts to single input-row perturbations") {
  auto layer = init_prompt_layer<double>(tiny_cfg());
  auto x = random_input(5, 16, 11);
  Graph<double> g1;
  const auto base = g1.value(generate_prompt(g1, layer, g1.input(x)).vectors);
  auto x2 = x;
  x2.at(2, 3) += 1e-3;
  Graph<double> g2;
  const auto moved = g2.value(generate_prompt(g2, layer, g2.input(x2)).vectors);
  double diff = 0;
  for (size_t i = 0; i < base.data.size(); ++i) diff = std::max(diff, std::abs(base.data[i] - moved.data[i]));
  CHECK(diff > 0.0);
}

TEST_CASE("generate_prompt gradients pass grad_check") {
  auto layer = init_prompt_layer<double>(tiny_cfg());
  for (auto* p : layer.params()) p->trainable = true;
  auto x = random_input(4, 16, 12);
  auto build = [&](Graph<double>& g) { return g.sum(generate_prompt(g, layer, g.input(x)).vectors); };
  CHECK(grad_check<double>(build, layer.params(), 1e-4) < 1e-4);
}

TEST_CASE("gradients flow into the input embeddings") {
  auto layer = init_prompt_layer<double>(tiny_cfg());
  Parameter<double> x("x", random_input(4, 16, 13));
  auto build = [&](Graph<double>& g) { return g.sum(generate_prompt(g, layer, g.param(x)).vectors); };
  CHECK(grad_check<double>(build, {&x}, 1e-4) < 1e-4);
}

TEST_CASE("prompt-layer parameters are disjoint from the LM's") {
  MlmConfig mc;
  mc.d_model = 16;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.d_ff = 32;
  mc.vocab_size = 30;
  auto model = init_model<double>(mc);
  auto layer = init_prompt_layer<double>(tiny_cfg());
  for (auto* lp : layer.params())
    for (auto* mp : model.params()) CHECK(lp != mp);
}
