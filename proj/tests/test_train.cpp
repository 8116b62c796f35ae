#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ap/train.hpp"

using namespace ap;

namespace {

struct Fixture {
  Vocab vocab;
  MlmConfig mlm_cfg;
  PromptGenConfig pg_cfg;
  MlmModel<double> model;
  PromptGenLayer<double> layer;
  ClozeTask task;

  Fixture() {
    Vocab v;
    for (const char* w : {"it", "is", "was", "good", "bad", "fine", "awful", "phone", "food", "room", "the",
                          "really", "very", "!", "."})
      v.add(w);
    vocab = v;
    mlm_cfg.d_model = 16;
    mlm_cfg.n_layers = 1;
    mlm_cfg.n_heads = 2;
    mlm_cfg.d_ff = 32;
    mlm_cfg.vocab_size = v.size();
    mlm_cfg.max_positions = 32;
    mlm_cfg.seed = 11;
    model = init_model<double>(mlm_cfg);
    pg_cfg.d_model = 16;
    pg_cfg.d_hidden = 12;
    pg_cfg.s = 2;
    pg_cfg.seed = 12;
    layer = init_prompt_layer<double>(pg_cfg);
    task.prompt = parse_prompt_spec("it was [MASK]", vocab);
    task.verbalizer = Verbalizer({{"positive", "good"}, {"negative", "bad"}}, vocab);
    task.max_len = 16;
  }
};

std::vector<LabeledExample> toy_set(int n, uint64_t seed) {
  // positive sentences mention "good"/"fine", negative ones "bad"/"awful"
  Rng rng(seed);
  std::vector<std::string> subjects = {"phone", "food", "room"};
  std::vector<LabeledExample> out;
  for (int i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    const std::string adj = pos ? (rng.bernoulli(0.5) ? "good" : "fine") : (rng.bernoulli(0.5) ? "bad" : "awful");
    const std::string subj = subjects[static_cast<size_t>(rng.below(subjects.size()))];
    const std::string filler = rng.bernoulli(0.5) ? "really" : "very";
    out.push_back({"the " + subj + " is " + filler + " " + adj + " " + std::to_string(i), pos ? "positive" : "negative",
                   "toy"});
  }
  return out;
}

template <class Real>
std::vector<Tensor<Real>> snapshot(std::vector<Parameter<Real>*> params) {
  std::vector<Tensor<Real>> out;
  for (auto* p : params) out.push_back(p->value);
  return out;
}

}  // namespace

TEST_CASE("trainable_partition per regime") {
  Fixture f;
  auto zero = trainable_partition(f.model, &f.layer, RegimeKind::ZeroShot);
  CHECK(zero.empty());
  for (auto* p : f.model.params()) CHECK(!p->trainable);
  for (auto* p : f.layer.params()) CHECK(!p->trainable);

  auto hpl = trainable_partition(f.model, &f.layer, RegimeKind::Hpl);
  CHECK(hpl.size() == f.model.params().size());
  CHECK(f.model.tok_emb.trainable);
  CHECK(!f.layer.out_w.trainable);

  auto fixed = trainable_partition(f.model, &f.layer, RegimeKind::ApFixedLm);
  CHECK(fixed.size() == f.layer.params().size());
  CHECK(!f.model.tok_emb.trainable);
  CHECK(f.layer.out_w.trainable);

  auto full = trainable_partition(f.model, &f.layer, RegimeKind::ApFull);
  CHECK(full.size() == f.model.params().size() + f.layer.params().size());

  try {
    trainable_partition<double>(f.model, nullptr, RegimeKind::ApFull);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::config);
  }
}

TEST_CASE("classification loss values") {
  Fixture f;
  LabeledExample ex{"the phone is very good", "positive", "toy"};

  // force equal verbalizer logits by zeroing the two embedding rows and the bias
  auto model = f.model;
  const int good = f.vocab.id("good"), bad = f.vocab.id("bad");
  for (int j = 0; j < 16; ++j) {
    model.tok_emb.value.at(good, j) = 0.0;
    model.tok_emb.value.at(bad, j) = 0.0;
  }
  model.head_bias.value.at(good) = 0.0;
  model.head_bias.value.at(bad) = 0.0;
  Graph<double> g;
  Value loss = classification_loss<double>(g, f.vocab, model, nullptr, f.task, ex);
  CHECK(g.value(loss).item() == Catch::Approx(std::log(2.0)).epsilon(1e-9));

  // gold logit far above the other: loss tends to zero
  model.head_bias.value.at(good) = 40.0;
  Graph<double> g2;
  CHECK(g2.value(classification_loss<double>(g2, f.vocab, model, nullptr, f.task, ex)).item() < 1e-6);

  // unknown label
  Graph<double> g3;
  LabeledExample unk{"the phone is very good", "neutral", "toy"};
  try {
    classification_loss<double>(g3, f.vocab, f.model, nullptr, f.task, unk);
    FAIL("expected label error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::label);
  }
}

TEST_CASE("classification loss gradient passes grad_check in both regimes") {
  Fixture f;
  LabeledExample ex{"the phone is really bad", "negative", "toy"};
  auto model_x = init_model<long double>(f.mlm_cfg);
  auto layer_x = init_prompt_layer<long double>(f.pg_cfg);
  auto build_d = [&](Graph<double>& g) { return classification_loss(g, f.vocab, f.model, &f.layer, f.task, ex); };
  auto build_x = [&](Graph<long double>& g) {
    return classification_loss(g, f.vocab, model_x, &layer_x, f.task, ex);
  };

  auto partition = trainable_partition(f.model, &f.layer, RegimeKind::ApFull);
  auto partition_x = trainable_partition(model_x, &layer_x, RegimeKind::ApFull);
  CHECK(grad_check_ext(build_d, partition, build_x, partition_x, 1e-4) < 1e-4);

  auto fixed = trainable_partition(f.model, &f.layer, RegimeKind::ApFixedLm);
  auto fixed_x = trainable_partition(model_x, &layer_x, RegimeKind::ApFixedLm);
  CHECK(grad_check_ext(build_d, fixed, build_x, fixed_x, 1e-4) < 1e-4);
}

TEST_CASE("gradients reach both the prompt rows and the adaptive path") {
  Fixture f;
  LabeledExample ex{"the room is very good", "positive", "toy"};
  trainable_partition(f.model, &f.layer, RegimeKind::ApFull);
  Graph<double> g;
  Value loss = classification_loss(g, f.vocab, f.model, &f.layer, f.task, ex);
  g.backward(loss);

  // e(P) rows: the embedding-table gradient at the prompt tokens is nonzero
  const auto emb_grad = g.grad_of(f.model.tok_emb);
  for (int tok : {f.vocab.id("it"), f.vocab.id("was")}) {
    double row = 0;
    for (int j = 0; j < 16; ++j) row += std::abs(emb_grad.at(tok, j));
    CHECK(row > 0.0);
  }
  // h path: every prompt-layer weight matrix collects gradient
  double pg_grad = 0;
  for (auto* p : f.layer.params())
    for (double v : g.grad_of(*p).data) pg_grad += std::abs(v);
  CHECK(pg_grad > 0.0);
  // LM gradient nonzero as well
  double lm_grad = 0;
  for (double v : g.grad_of(f.model.layers[0].wq).data) lm_grad += std::abs(v);
  CHECK(lm_grad > 0.0);
}

TEST_CASE("adam first step and fixed point") {
  Parameter<double> p("p", Tensor<double>({3}, {1.0, -2.0, 0.5}));
  auto st = AdamState::for_params<double>({&p});

  SECTION("zero gradient leaves parameters unchanged") {
    auto before = p.value;
    adam_step<double>({&p}, {Tensor<double>::zeros({3})}, st, 0.1);
    CHECK(st.step == 1);
    CHECK(bit_equal(p.value, before));
  }

  SECTION("first step moves by ~lr per coordinate") {
    Tensor<double> g({3}, {0.3, -4.0, 1e-3});
    auto before = p.value;
    adam_step<double>({&p}, {g}, st, 0.01);
    for (int i = 0; i < 3; ++i) {
      // closed form for step 1: delta = lr * g / (|g| + eps)
      const double expect = 0.01 * g.at(i) / (std::abs(g.at(i)) + AdamState::eps);
      CHECK(p.value.at(i) - before.at(i) == Catch::Approx(-expect).epsilon(1e-9));
    }
  }

  SECTION("shape mismatch is rejected") {
    CHECK_THROWS_AS(adam_step<double>({&p}, {Tensor<double>::zeros({4})}, st, 0.1), Error);
  }
}

TEST_CASE("adam runs are deterministic") {
  auto run = [&]() {
    Parameter<double> p("p", Tensor<double>({2}, {1.0, 2.0}));
    auto st = AdamState::for_params<double>({&p});
    for (int i = 0; i < 25; ++i)
      adam_step<double>({&p}, {Tensor<double>({2}, {0.1 * (i + 1), -0.2})}, st, 0.05);
    return p.value;
  };
  CHECK(bit_equal(run(), run()));
}

TEST_CASE("train freezes the LM under AP_FIXED_LM") {
  Fixture f;
  DatasetSplit split;
  split.train = toy_set(8, 1);
  split.test = toy_set(6, 2);
  Regime regime{RegimeKind::ApFixedLm, 1e-3, 4, 3};

  auto lm_before = snapshot(f.model.params());
  auto pg_before = snapshot(f.layer.params());
  auto history = train(f.vocab, f.model, &f.layer, f.task, split, regime, 5);
  REQUIRE(history.epochs.size() == 3);

  auto lm_after = snapshot(f.model.params());
  for (size_t i = 0; i < lm_before.size(); ++i) CHECK(bit_equal(lm_before[i], lm_after[i]));

  bool any_changed = false;
  auto pg_after = snapshot(f.layer.params());
  for (size_t i = 0; i < pg_before.size(); ++i) any_changed = any_changed || !bit_equal(pg_before[i], pg_after[i]);
  CHECK(any_changed);
}

TEST_CASE("train is deterministic in the seed") {
  Fixture f;
  DatasetSplit split;
  split.train = toy_set(8, 3);
  split.test = toy_set(6, 4);
  Regime regime{RegimeKind::ApFull, 1e-3, 4, 2};

  auto run = [&]() {
    auto model = f.model;
    auto layer = f.layer;
    return train(f.vocab, model, &layer, f.task, split, regime, 9);
  };
  auto h1 = run();
  auto h2 = run();
  REQUIRE(h1.epochs.size() == h2.epochs.size());
  for (size_t i = 0; i < h1.epochs.size(); ++i) {
    CHECK(h1.epochs[i].train_loss == h2.epochs[i].train_loss);
    CHECK(h1.epochs[i].test_accuracy == h2.epochs[i].test_accuracy);
  }
}

TEST_CASE("zero-shot regime trains nothing and just evaluates") {
  Fixture f;
  DatasetSplit split;
  split.train = toy_set(8, 5);
  split.test = toy_set(6, 6);
  Regime regime{RegimeKind::ZeroShot, 0.0, 4, 7};
  auto before = snapshot(f.model.params());
  auto history = train(f.vocab, f.model, &f.layer, f.task, split, regime, 1);
  REQUIRE(history.epochs.size() == 1);
  auto after = snapshot(f.model.params());
  for (size_t i = 0; i < before.size(); ++i) CHECK(bit_equal(before[i], after[i]));
}

TEST_CASE("training loss decreases on a memorizable set") {
  Fixture f;
  DatasetSplit split;
  split.train = toy_set(8, 7);
  split.test = split.train;  // memorization check evaluates on the train set
  Regime regime{RegimeKind::ApFull, 2e-3, 4, 30};
  auto model = f.model;
  auto layer = f.layer;
  auto history = train(f.vocab, model, &layer, f.task, split, regime, 13);
  CHECK(history.epochs.back().train_loss < history.epochs.front().train_loss);
  CHECK(history.epochs.back().test_accuracy == 1.0);
}

TEST_CASE("empty train split is rejected for tuning regimes") {
  Fixture f;
  DatasetSplit split;
  split.test = toy_set(4, 8);
  Regime regime{RegimeKind::Hpl, 1e-3, 4, 2};
  try {
    train<double>(f.vocab, f.model, nullptr, f.task, split, regime, 1);
    FAIL("expected empty-input error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::empty_input);
  }
}
