#pragma once

// Tokenization, vocabulary, dataset files and few-shot sampling.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ap/common.hpp"

namespace ap {

// Lowercased, whitespace-split; punctuation becomes single-char tokens.
// Bytes >= 0x80 are treated as word characters so multi-byte sequences stay
// intact.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (unsigned char c : text) {
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && !std::isalnum(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      word.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  if (out.empty()) throw Error(errc::empty_input, "tokenize: text is empty after trimming");
  return out;
}

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kUnk = 4;

  Vocab() {
    for (const char* t : {"[PAD]", "[MASK]", "[CLS]", "[SEP]", "[UNK]"}) add(t);
  }

  // Rebuild from an explicit id -> token list (checkpoint load).
  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    if (tokens.size() < 5) throw Error(errc::schema, "vocab dump shorter than reserved range");
    for (size_t i = 0; i < 5; ++i)
      if (tokens[i] != v.token(static_cast<int>(i)))
        throw Error(errc::schema, "vocab dump: reserved token mismatch at id " + std::to_string(i));
    for (size_t i = 5; i < tokens.size(); ++i) v.add(tokens[i]);
    if (v.size() != static_cast<int>(tokens.size())) throw Error(errc::schema, "vocab dump contains duplicates");
    return v;
  }

  int add(const std::string& tok) {
    auto it = ids_.find(tok);
    if (it != ids_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
    ids_.emplace(tok, id);
    return id;
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& tok) const { return ids_.count(tok) > 0; }

  int id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw Error(errc::index, "token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<size_t>(id)];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct LabeledExample {
  std::string text;
  std::string label;
  std::string domain;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  uint64_t seed = 0;
};

inline Vocab build_vocab(const std::vector<LabeledExample>& corpus, int min_count = 1) {
  if (corpus.empty()) throw Error(errc::empty_input, "build_vocab: empty corpus");
  std::unordered_map<std::string, int64_t> freq;
  for (const auto& ex : corpus)
    for (const auto& tok : tokenize(ex.text)) ++freq[tok];
  std::vector<std::pair<std::string, int64_t>> items(freq.begin(), freq.end());
  // descending frequency, then lexicographic, so the ordering is deterministic
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, n] : items)
    if (n >= min_count) v.add(tok);
  return v;
}

// Encode text to token ids, truncating from the right to max_len.
inline std::vector<int> encode_text(const Vocab& v, const std::string& text, int max_len) {
  auto ids = v.encode(tokenize(text));
  if (max_len > 0 && static_cast<int>(ids.size()) > max_len) ids.resize(static_cast<size_t>(max_len));
  return ids;
}

// One JSON object per line: {"text": ..., "label": ..., "domain": ...}.
inline std::vector<LabeledExample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io, "cannot open dataset file " + path);
  std::vector<LabeledExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(errc::parse, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    for (const char* field : {"text", "label", "domain"})
      if (!j.contains(field) || !j[field].is_string())
        throw Error(errc::schema,
                    path + ":" + std::to_string(lineno) + ": missing string field \"" + field + "\"");
    out.push_back({j["text"].get<std::string>(), j["label"].get<std::string>(), j["domain"].get<std::string>()});
  }
  return out;
}

inline void save_dataset(const std::vector<LabeledExample>& examples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write dataset file " + path);
  for (const auto& ex : examples) {
    nlohmann::ordered_json j;
    j["text"] = ex.text;
    j["label"] = ex.label;
    j["domain"] = ex.domain;
    out << j.dump() << "\n";
  }
}

// Label-balanced k-shot split. Train labels balanced to within one example;
// test drawn from the remainder, disjoint from train by exact text match.
inline DatasetSplit sample_few_shot(const std::vector<LabeledExample>& examples, int k_train, int n_test,
                                    uint64_t seed) {
  if (k_train < 0 || n_test < 0) throw Error(errc::contract, "sample_few_shot: negative sizes");
  std::map<std::string, std::vector<size_t>> by_label;  // ordered for determinism
  for (size_t i = 0; i < examples.size(); ++i) by_label[examples[i].label].push_back(i);
  if (by_label.size() < 2) throw Error(errc::contract, "sample_few_shot: need at least two labels");

  const int l = static_cast<int>(by_label.size());
  const int base = k_train / l;
  int remainder = k_train % l;

  Rng rng(mix_seed(seed, 0x5alu));
  DatasetSplit split;
  split.seed = seed;
  std::unordered_set<std::string> train_texts;
  for (auto& [label, idxs] : by_label) {
    const int want = base + (remainder > 0 ? 1 : 0);
    if (remainder > 0) --remainder;
    if (static_cast<int>(idxs.size()) < want)
      throw Error(errc::capacity, "sample_few_shot: label \"" + label + "\" has " + std::to_string(idxs.size()) +
                                      " examples, need " + std::to_string(want));
    rng.shuffle(idxs);
    for (int i = 0; i < want; ++i) {
      split.train.push_back(examples[idxs[static_cast<size_t>(i)]]);
      train_texts.insert(examples[idxs[static_cast<size_t>(i)]].text);
    }
  }
  rng.shuffle(split.train);

  std::vector<size_t> pool;
  for (size_t i = 0; i < examples.size(); ++i)
    if (!train_texts.count(examples[i].text)) pool.push_back(i);
  if (static_cast<int>(pool.size()) < n_test)
    throw Error(errc::capacity, "sample_few_shot: test pool has " + std::to_string(pool.size()) + " examples, need " +
                                    std::to_string(n_test));
  rng.shuffle(pool);
  for (int i = 0; i < n_test; ++i) split.test.push_back(examples[pool[static_cast<size_t>(i)]]);
  return split;
}

}  // namespace ap
