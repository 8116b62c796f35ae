#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <set>

#include "ap/text.hpp"

using namespace ap;

namespace {

std::vector<LabeledExample> corpus(std::initializer_list<const char*> texts) {
  std::vector<LabeledExample> out;
  for (const char* t : texts) out.push_back({t, "positive", "d"});
  return out;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& content) {
    path = std::string("ap_test_") + std::to_string(reinterpret_cast<uintptr_t>(this)) + ".jsonl";
    std::ofstream f(path);
    f << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("tokenize basics") {
  CHECK(tokenize("The weather is very good") == std::vector<std::string>{"the", "weather", "is", "very", "good"});
  CHECK(tokenize("Good!") == std::vector<std::string>{"good", "!"});
  CHECK(tokenize("it's ok.") == std::vector<std::string>{"it", "'", "s", "ok", "."});
  try {
    tokenize("   ");
    FAIL("expected empty-input error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::empty_input);
  }
}

TEST_CASE("vocab reserved tokens and ordering") {
  auto v = build_vocab(corpus({"a b", "a"}), 1);
  CHECK(v.size() == 7);
  CHECK(v.token(Vocab::kPad) == "[PAD]");
  CHECK(v.token(Vocab::kMask) == "[MASK]");
  CHECK(v.token(Vocab::kCls) == "[CLS]");
  CHECK(v.token(Vocab::kSep) == "[SEP]");
  CHECK(v.token(Vocab::kUnk) == "[UNK]");
  CHECK(v.token(5) == "a");  // freq 2 before freq 1
  CHECK(v.token(6) == "b");

  auto v2 = build_vocab(corpus({"a b", "a"}), 2);
  CHECK(v2.size() == 6);
  CHECK(v2.contains("a"));
  CHECK(!v2.contains("b"));
  CHECK(v.id("c") == Vocab::kUnk);
  CHECK(v2.id("c") == Vocab::kUnk);

  CHECK_THROWS_AS(build_vocab({}, 1), Error);
}

TEST_CASE("vocab ties broken lexicographically") {
  auto v = build_vocab(corpus({"pear apple"}), 1);
  CHECK(v.token(5) == "apple");
  CHECK(v.token(6) == "pear");
}

TEST_CASE("encode/decode round trip") {
  auto v = build_vocab(corpus({"alpha beta gamma", "alpha beta"}), 1);
  for (int id = 0; id < v.size(); ++id) CHECK(v.id(v.token(id)) == id);
  auto toks = tokenize("alpha gamma beta");
  CHECK(v.decode(v.encode(toks)) == toks);
}

TEST_CASE("encode_text truncates from the right") {
  auto v = build_vocab(corpus({"a b c d e"}), 1);
  auto ids = encode_text(v, "a b c d e", 3);
  CHECK(ids.size() == 3);
  CHECK(v.token(ids[0]) == "a");
  CHECK(v.token(ids[2]) == "c");
}

TEST_CASE("load_dataset parses JSONL") {
  TempFile f(R"({"text":"great phone","label":"positive","domain":"shopping"})"
             "\n"
             R"({"text":"broken screen","label":"negative","domain":"shopping"})"
             "\n");
  auto ex = load_dataset(f.path);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].text == "great phone");
  CHECK(ex[0].label == "positive");
  CHECK(ex[0].domain == "shopping");
  CHECK(ex[1].text == "broken screen");
}

TEST_CASE("load_dataset errors carry line numbers") {
  TempFile bad(R"({"text":"ok","label":"positive","domain":"d"})"
               "\nnot json\n");
  try {
    load_dataset(bad.path);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::parse);
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  TempFile missing(R"({"text":"ok","domain":"d"})"
                   "\n");
  try {
    load_dataset(missing.path);
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::schema);
    CHECK(std::string(e.what()).find("label") != std::string::npos);
  }
}

TEST_CASE("load_dataset on empty file gives empty list") {
  TempFile f("");
  CHECK(load_dataset(f.path).empty());
}

TEST_CASE("dataset save/load round trip") {
  std::vector<LabeledExample> ex = {{"nice view", "positive", "hotel"}, {"cold soup", "negative", "takeout"}};
  TempFile f("");
  save_dataset(ex, f.path);
  auto back = load_dataset(f.path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].text == "cold soup");
  CHECK(back[1].domain == "takeout");
}

TEST_CASE("sample_few_shot balances and is deterministic") {
  std::vector<LabeledExample> pool;
  for (int i = 0; i < 500; ++i) pool.push_back({"pos text " + std::to_string(i), "positive", "d"});
  for (int i = 0; i < 500; ++i) pool.push_back({"neg text " + std::to_string(i), "negative", "d"});

  auto s1 = sample_few_shot(pool, 32, 600, 7);
  auto s2 = sample_few_shot(pool, 32, 600, 7);
  REQUIRE(s1.train.size() == 32);
  REQUIRE(s1.test.size() == 600);
  int pos = 0;
  for (const auto& e : s1.train) pos += e.label == "positive";
  CHECK(pos == 16);
  for (size_t i = 0; i < s1.train.size(); ++i) CHECK(s1.train[i].text == s2.train[i].text);
  for (size_t i = 0; i < s1.test.size(); ++i) CHECK(s1.test[i].text == s2.test[i].text);

  auto s3 = sample_few_shot(pool, 32, 600, 8);
  bool any_diff = false;
  for (size_t i = 0; i < s1.train.size(); ++i) any_diff = any_diff || s1.train[i].text != s3.train[i].text;
  CHECK(any_diff);
}

TEST_CASE("sample_few_shot rejects starved labels") {
  std::vector<LabeledExample> pool;
  for (int i = 0; i < 10; ++i) pool.push_back({"p" + std::to_string(i), "positive", "d"});
  for (int i = 0; i < 100; ++i) pool.push_back({"n" + std::to_string(i), "negative", "d"});
  try {
    sample_few_shot(pool, 32, 10, 1);
    FAIL("expected capacity error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::capacity);
  }
}

TEST_CASE("sample_few_shot splits are always text-disjoint") {
  // exhaustive over seeds on the smallest interesting pool
  std::vector<LabeledExample> pool = {
      {"pa", "positive", "d"}, {"pb", "positive", "d"}, {"na", "negative", "d"}, {"nb", "negative", "d"}};
  for (uint64_t seed = 0; seed < 200; ++seed) {
    auto s = sample_few_shot(pool, 2, 2, seed);
    REQUIRE(s.train.size() == 2);
    REQUIRE(s.test.size() == 2);
    std::set<std::string> train_texts, test_texts;
    for (const auto& e : s.train) train_texts.insert(e.text);
    for (const auto& e : s.test) test_texts.insert(e.text);
    for (const auto& t : test_texts) CHECK(train_texts.count(t) == 0);
  }
}

TEST_CASE("odd k stays balanced within one") {
  std::vector<LabeledExample> pool;
  for (int i = 0; i < 50; ++i) pool.push_back({"p" + std::to_string(i), "positive", "d"});
  for (int i = 0; i < 50; ++i) pool.push_back({"n" + std::to_string(i), "negative", "d"});
  auto s = sample_few_shot(pool, 7, 10, 3);
  int pos = 0;
  for (const auto& e : s.train) pos += e.label == "positive";
  CHECK(std::abs(2 * pos - 7) == 1);
}
