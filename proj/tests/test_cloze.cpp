#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ap/cloze.hpp"
#include "ap/train.hpp"

using namespace ap;

namespace {

Vocab demo_vocab() {
  Vocab v;
  for (const char* w : {"it", "is", "was", "the", "weather", "very", "good", "bad", "just", "great", "awful",
                        "phone", "movie", "a", "b", "c", "d", "e"})
    v.add(w);
  return v;
}

MlmModel<double> demo_model(const Vocab& v, int max_positions = 32) {
  MlmConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.vocab_size = v.size();
  cfg.max_positions = max_positions;
  cfg.seed = 17;
  return init_model<double>(cfg);
}

}  // namespace

TEST_CASE("parse_prompt_spec") {
  auto v = demo_vocab();
  auto p = parse_prompt_spec("it is [MASK]", v);
  CHECK(p.tokens == std::vector<int>{v.id("it"), v.id("is")});
  CHECK(p.mask_slot == 2);

  auto pure = parse_prompt_spec("[MASK]", v);
  CHECK(pure.tokens.empty());
  CHECK(pure.mask_slot == 0);

  auto mid = parse_prompt_spec("it [MASK] good", v);
  CHECK(mid.mask_slot == 1);
  CHECK(mid.tokens == std::vector<int>{v.id("it"), v.id("good")});

  try {
    parse_prompt_spec("good [MASK] bad [MASK]", v);
    FAIL("expected pattern error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::pattern);
  }
  try {
    parse_prompt_spec("no mask here", v);
    FAIL("expected pattern error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::pattern);
  }
  try {
    parse_prompt_spec("zzzunknown [MASK]", v);
    FAIL("expected vocab error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::vocab);
  }
}

TEST_CASE("verbalizer construction rules") {
  auto v = demo_vocab();
  Verbalizer w({{"positive", "good"}, {"negative", "bad"}}, v);
  CHECK(w.size() == 2);
  CHECK(w.labels() == std::vector<std::string>{"positive", "negative"});
  CHECK(w.token_ids() == std::vector<int>{v.id("good"), v.id("bad")});
  CHECK(w.index_of("negative") == 1);
  CHECK_THROWS_AS(w.index_of("neutral"), Error);

  CHECK_THROWS_AS(Verbalizer({{"p", "very good"}}, v), Error);       // multi-token
  CHECK_THROWS_AS(Verbalizer({{"p", "zzz"}}, v), Error);             // out of vocab
  CHECK_THROWS_AS(Verbalizer({{"p", "good"}, {"n", "good"}}, v), Error);  // duplicate word
  CHECK_THROWS_AS(Verbalizer({{"p", "[MASK]"}}, v), Error);          // reserved
}

TEST_CASE("assemble_hybrid layout") {
  auto v = demo_vocab();
  auto model = demo_model(v);
  auto prompt = parse_prompt_spec("it is [MASK]", v);
  const auto x_ids = v.encode(tokenize("the weather is very good"));

  SECTION("with adaptive vectors") {
    Graph<double> g;
    PromptGenConfig pc;
    pc.d_model = 16;
    pc.d_hidden = 8;
    pc.s = 2;
    auto layer = init_prompt_layer<double>(pc);
    auto ap = generate_prompt(g, layer, g.input(embed_tokens(model, x_ids)));
    auto t = assemble_hybrid<double>(g, model, prompt, ap, x_ids);
    CHECK(t.length == 3 + 2 + 5);
    CHECK(t.mask_index == 2);
    CHECK(g.value(t.embeddings).shape == Shape{10, 16});
    CHECK(t.p_span == std::pair<int, int>{0, 3});
    CHECK(t.h_span == std::pair<int, int>{3, 5});
    CHECK(t.x_span == std::pair<int, int>{5, 10});

    // the h segment is exactly the generated vectors
    const auto& emb = g.value(t.embeddings);
    const auto& hv = g.value(ap.vectors);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 16; ++j) CHECK(emb.at(3 + i, j) == hv.at(i, j));
  }

  SECTION("absent adaptive prompt gives the hand-crafted template") {
    Graph<double> g;
    auto t = assemble_hybrid<double>(g, model, prompt, std::nullopt, x_ids);
    CHECK(t.length == 3 + 0 + 5);
    CHECK(t.mask_index == 2);
    CHECK(t.h_span.first == t.h_span.second);
    const auto& emb = g.value(t.embeddings);
    // row for row: e(it), e(is), e([MASK]), e(the), e(weather), e(is), e(very), e(good)
    std::vector<int> expect = {v.id("it"), v.id("is"), Vocab::kMask};
    expect.insert(expect.end(), x_ids.begin(), x_ids.end());
    auto rows = embed_tokens(model, expect);
    for (size_t i = 0; i < rows.data.size(); ++i) CHECK(emb.data[i] == rows.data[i]);
  }

  SECTION("pure adaptive template: mask only") {
    Graph<double> g;
    PromptGenConfig pc;
    pc.d_model = 16;
    pc.d_hidden = 8;
    pc.s = 4;
    auto layer = init_prompt_layer<double>(pc);
    auto one = std::vector<int>{v.id("good")};
    auto ap = generate_prompt(g, layer, g.input(embed_tokens(model, one)));
    auto t = assemble_hybrid<double>(g, model, parse_prompt_spec("[MASK]", v), ap, one);
    CHECK(t.length == 6);
    CHECK(t.mask_index == 0);
  }
}

TEST_CASE("template length identity over random cases") {
  auto v = demo_vocab();
  auto model = demo_model(v, 64);
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = static_cast<int>(rng.below(5));
    const int s = static_cast<int>(rng.below(4));
    const int n = 1 + static_cast<int>(rng.below(8));
    PromptSpec prompt;
    for (int i = 0; i < m; ++i) prompt.tokens.push_back(5 + static_cast<int>(rng.below(10)));
    prompt.mask_slot = static_cast<int>(rng.below(static_cast<uint64_t>(m) + 1));
    std::vector<int> x_ids;
    for (int i = 0; i < n; ++i) x_ids.push_back(5 + static_cast<int>(rng.below(10)));

    Graph<double> g;
    std::optional<AdaptivePrompt<double>> ap;
    if (s > 0) {
      PromptGenConfig pc;
      pc.d_model = 16;
      pc.d_hidden = 8;
      pc.s = s;
      pc.seed = static_cast<uint64_t>(trial);
      auto layer = init_prompt_layer<double>(pc);
      ap = generate_prompt(g, layer, g.input(embed_tokens(model, x_ids)));
    }
    auto t = assemble_hybrid<double>(g, model, prompt, ap, x_ids);
    REQUIRE(t.length == m + 1 + s + n);
    REQUIRE(t.mask_index == prompt.mask_slot);
    // mask row equals e([MASK]) bit for bit
    const auto& emb = g.value(t.embeddings);
    const auto mask_row = embed_tokens(model, {Vocab::kMask});
    for (int j = 0; j < 16; ++j) REQUIRE(emb.at(t.mask_index, j) == mask_row.at(0, j));
  }
}

TEST_CASE("assemble_hybrid rejects overflow") {
  auto v = demo_vocab();
  auto model = demo_model(v, 8);
  auto prompt = parse_prompt_spec("it is [MASK]", v);
  std::vector<int> x_ids(6, v.id("good"));  // 3 + 6 > 8
  Graph<double> g;
  try {
    assemble_hybrid<double>(g, model, prompt, std::nullopt, x_ids);
    FAIL("expected capacity error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::capacity);
  }
}

TEST_CASE("verbalizer posterior") {
  auto v = demo_vocab();
  Verbalizer w({{"positive", "good"}, {"negative", "bad"}}, v);

  Tensor<double> logits({v.size()});
  Rng rng(5);
  for (auto& x : logits.data) x = rng.normal();
  logits.at(v.id("good")) = 2.0;
  logits.at(v.id("bad")) = 1.0;
  auto post = verbalizer_posterior(logits, w);
  REQUIRE(post.labels == std::vector<std::string>{"positive", "negative"});
  CHECK(post.probs[0] == Catch::Approx(0.731058578630004879).epsilon(1e-9));
  CHECK(post.probs[1] == Catch::Approx(0.268941421369995121).epsilon(1e-9));

  // equal logits: uniform
  logits.at(v.id("bad")) = 2.0;
  auto even = verbalizer_posterior(logits, w);
  CHECK(even.probs[0] == Catch::Approx(0.5).margin(1e-12));

  // shift invariance
  logits.at(v.id("bad")) = 1.0;
  auto shifted = logits;
  for (auto& x : shifted.data) x += 123.456;
  auto post2 = verbalizer_posterior(shifted, w);
  CHECK(std::abs(post2.probs[0] - post.probs[0]) < 1e-9);
  CHECK(std::abs(post2.probs[1] - post.probs[1]) < 1e-9);
}

TEST_CASE("posterior properties on random logits") {
  auto v = demo_vocab();
  Verbalizer w({{"a", "good"}, {"b", "bad"}, {"c", "great"}}, v);
  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    Tensor<double> logits({v.size()});
    for (auto& x : logits.data) x = rng.normal(0.0, 3.0);
    auto post = verbalizer_posterior(logits, w);
    double s = 0;
    for (double p : post.probs) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      s += p;
    }
    CHECK(s == Catch::Approx(1.0).margin(1e-6));

    // argmax invariance under a strictly monotone transform of the logits
    auto warped = logits;
    for (auto& x : warped.data) x = 2.5 * x + 0.1 * x * x * x + 7.0;
    CHECK(predict_label(verbalizer_posterior(warped, w)) == predict_label(post));
  }
}

TEST_CASE("predict_label tie breaks by verbalizer order") {
  LabelPosterior post;
  post.labels = {"pos", "neg"};
  post.probs = {0.5, 0.5};
  CHECK(predict_label(post) == "pos");
  post.probs = {0.1, 0.9};
  CHECK(predict_label(post) == "neg");
}
