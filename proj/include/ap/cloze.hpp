#pragma once

// Hand-crafted prompt parsing, hybrid template assembly and the verbalizer.
// The assembled template is the embedding sequence
//   e(p_1..p_i), e([MASK]), e(p_{i+1}..p_m), h_1..h_s, e(x_1..x_n)
// and the label is read off the [MASK] row through the verbalizer words.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ap/common.hpp"
#include "ap/graph.hpp"
#include "ap/mlm.hpp"
#include "ap/promptgen.hpp"
#include "ap/text.hpp"

namespace ap {

struct PromptSpec {
  std::vector<int> tokens;  // prompt token ids, mask excluded
  int mask_slot = 0;        // insertion index in [0, tokens.size()]

  int m() const { return static_cast<int>(tokens.size()); }
};

// Pattern string is literal text with exactly one [MASK] placeholder.
inline PromptSpec parse_prompt_spec(const std::string& pattern, const Vocab& vocab) {
  const std::string placeholder = "[MASK]";
  std::vector<size_t> hits;
  for (size_t pos = pattern.find(placeholder); pos != std::string::npos;
       pos = pattern.find(placeholder, pos + 1))
    hits.push_back(pos);
  if (hits.size() != 1)
    throw Error(errc::pattern, "prompt pattern must contain exactly one [MASK], found " +
                                   std::to_string(hits.size()) + " in \"" + pattern + "\"");
  auto tokenize_part = [&](const std::string& part) -> std::vector<int> {
    if (part.find_first_not_of(" \t\r\n") == std::string::npos) return {};
    std::vector<int> ids;
    for (const auto& tok : tokenize(part)) {
      if (!vocab.contains(tok))
        throw Error(errc::vocab, "prompt token \"" + tok + "\" is not in the vocabulary");
      ids.push_back(vocab.id(tok));
    }
    return ids;
  };
  PromptSpec spec;
  auto before = tokenize_part(pattern.substr(0, hits[0]));
  auto after = tokenize_part(pattern.substr(hits[0] + placeholder.size()));
  spec.mask_slot = static_cast<int>(before.size());
  spec.tokens = std::move(before);
  spec.tokens.insert(spec.tokens.end(), after.begin(), after.end());
  return spec;
}

// Ordered label -> single-token-word map.
class Verbalizer {
 public:
  Verbalizer() = default;
  Verbalizer(const std::vector<std::pair<std::string, std::string>>& label_words, const Vocab& vocab) {
    if (label_words.empty()) throw Error(errc::contract, "verbalizer: no labels");
    for (const auto& [label, word] : label_words) {
      auto toks = tokenize(word);
      if (toks.size() != 1)
        throw Error(errc::vocab, "verbalizer word \"" + word + "\" must be a single token");
      if (!vocab.contains(toks[0]))
        throw Error(errc::vocab, "verbalizer word \"" + word + "\" is not in the vocabulary");
      const int id = vocab.id(toks[0]);
      if (id <= Vocab::kUnk) throw Error(errc::vocab, "verbalizer word \"" + word + "\" maps to a reserved token");
      if (std::find(token_ids_.begin(), token_ids_.end(), id) != token_ids_.end())
        throw Error(errc::vocab, "verbalizer words must map to distinct tokens");
      for (const auto& l : labels_)
        if (l == label) throw Error(errc::contract, "duplicate verbalizer label \"" + label + "\"");
      labels_.push_back(label);
      words_.push_back(toks[0]);
      token_ids_.push_back(id);
    }
  }

  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<int>& token_ids() const { return token_ids_; }

  int index_of(const std::string& label) const {
    for (size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return static_cast<int>(i);
    throw Error(errc::label, "label \"" + label + "\" is not in the verbalizer");
  }

 private:
  std::vector<std::string> labels_;
  std::vector<std::string> words_;
  std::vector<int> token_ids_;
};

struct HybridTemplate {
  Value embeddings;  // [T, d_model] node in the assembling graph
  int mask_index = 0;
  int length = 0;
  std::pair<int, int> p_span;  // [begin, end) rows of the prompt segment (mask included)
  std::pair<int, int> h_span;  // adaptive segment; empty when absent
  std::pair<int, int> x_span;  // input segment
};

// Concatenates prompt rows, adaptive vectors and input rows in the fixed
// P, h, X order. `adaptive` absent gives the plain hand-crafted template.
template <class Real>
HybridTemplate assemble_hybrid(Graph<Real>& g, MlmModel<Real>& model, const PromptSpec& prompt,
                               const std::optional<AdaptivePrompt<Real>>& adaptive, const std::vector<int>& x_ids) {
  const int m = prompt.m();
  const int n = static_cast<int>(x_ids.size());
  int s = 0;
  if (adaptive) {
    const auto& hv = g.value(adaptive->vectors);
    if (hv.ndim() != 2 || hv.shape[1] != model.cfg.d_model)
      throw Error(errc::shape, "assemble_hybrid: adaptive prompt width != d_model");
    s = hv.shape[0];
  }
  const int total = m + 1 + s + n;
  if (total > model.cfg.max_positions)
    throw Error(errc::capacity, "assemble_hybrid: template length " + std::to_string(total) +
                                    " exceeds max_positions " + std::to_string(model.cfg.max_positions));

  std::vector<int> prompt_ids;
  prompt_ids.reserve(static_cast<size_t>(m) + 1);
  for (int i = 0; i < prompt.mask_slot; ++i) prompt_ids.push_back(prompt.tokens[static_cast<size_t>(i)]);
  prompt_ids.push_back(Vocab::kMask);
  for (int i = prompt.mask_slot; i < m; ++i) prompt_ids.push_back(prompt.tokens[static_cast<size_t>(i)]);

  std::vector<Value> parts;
  parts.push_back(g.gather_rows(g.param(model.tok_emb), prompt_ids));
  if (adaptive) parts.push_back(adaptive->vectors);
  parts.push_back(g.gather_rows(g.param(model.tok_emb), x_ids));

  HybridTemplate t;
  t.embeddings = g.concat_rows(parts);
  t.mask_index = prompt.mask_slot;
  t.length = total;
  t.p_span = {0, m + 1};
  t.h_span = {m + 1, m + 1 + s};
  t.x_span = {m + 1 + s, total};
  return t;
}

struct LabelPosterior {
  std::vector<std::string> labels;
  std::vector<double> probs;
};

// Softmax restricted to the verbalizer words' logits.
template <class Real>
LabelPosterior verbalizer_posterior(const Tensor<Real>& logits_at_mask, const Verbalizer& verbalizer) {
  if (logits_at_mask.ndim() != 1)
    throw Error(errc::shape, "verbalizer_posterior: logits must be a vector");
  LabelPosterior post;
  post.labels = verbalizer.labels();
  double mx = -1e300;
  std::vector<double> sel;
  for (int id : verbalizer.token_ids()) {
    if (id >= logits_at_mask.shape[0]) throw Error(errc::index, "verbalizer token id beyond logits length");
    sel.push_back(static_cast<double>(logits_at_mask.at(id)));
    mx = std::max(mx, sel.back());
  }
  double z = 0;
  for (double& v : sel) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double v : sel) post.probs.push_back(v / z);
  return post;
}

// Argmax with ties broken by verbalizer order.
inline std::string predict_label(const LabelPosterior& posterior) {
  if (posterior.labels.empty() || posterior.labels.size() != posterior.probs.size())
    throw Error(errc::contract, "predict_label: malformed posterior");
  size_t best = 0;
  for (size_t i = 1; i < posterior.probs.size(); ++i)
    if (posterior.probs[i] > posterior.probs[best]) best = i;
  return posterior.labels[best];
}

}  // namespace ap
