#pragma once

// Tiny bidirectional transformer masked LM. The forward path takes a raw
// embedding matrix, so continuous prompt vectors can be spliced in without
// going through the token lookup. The vocabulary head is tied to the token
// embedding table.

#include <cmath>
#include <string>
#include <vector>

#include "ap/common.hpp"
#include "ap/graph.hpp"
#include "ap/tensor.hpp"
#include "ap/text.hpp"

namespace ap {

struct MlmConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 0;
  int max_positions = 64;
  double dropout_rate = 0.0;
  uint64_t seed = 0;

  void validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0)
      throw Error(errc::config, "MlmConfig: dimensions must be positive");
    if (d_model % n_heads != 0)
      throw Error(errc::config, "MlmConfig: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                                    std::to_string(n_heads));
    if (vocab_size < 5) throw Error(errc::config, "MlmConfig: vocab_size must cover the reserved tokens");
    if (max_positions <= 0) throw Error(errc::config, "MlmConfig: max_positions must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw Error(errc::config, "MlmConfig: dropout_rate not in [0,1)");
  }
};

// Per-layer attention weights, one [T,T] matrix per head.
using AttentionTrace = std::vector<std::vector<Tensor<double>>>;

template <class Real>
struct MlmModel {
  MlmConfig cfg;

  Parameter<Real> tok_emb;  // [vocab, d_model], also the output head
  Parameter<Real> pos_emb;  // [max_positions, d_model]
  Parameter<Real> emb_ln_g, emb_ln_b;
  struct Layer {
    Parameter<Real> wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter<Real> ln1_g, ln1_b;
    Parameter<Real> ff1_w, ff1_b, ff2_w, ff2_b;
    Parameter<Real> ln2_g, ln2_b;
  };
  std::vector<Layer> layers;
  Parameter<Real> head_bias;  // [vocab]

  std::vector<Parameter<Real>*> params() {
    std::vector<Parameter<Real>*> out = {&tok_emb, &pos_emb, &emb_ln_g, &emb_ln_b};
    for (auto& l : layers)
      for (Parameter<Real>* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_g, &l.ln1_b,
                                 &l.ff1_w, &l.ff1_b, &l.ff2_w, &l.ff2_b, &l.ln2_g, &l.ln2_b})
        out.push_back(p);
    out.push_back(&head_bias);
    return out;
  }

  std::vector<const Parameter<Real>*> params() const {
    auto* self = const_cast<MlmModel*>(this);
    std::vector<const Parameter<Real>*> out;
    for (auto* p : self->params()) out.push_back(p);
    return out;
  }
};

template <class Real>
MlmModel<Real> init_model(const MlmConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0x4d4c4d));  // "MLM"
  MlmModel<Real> m;
  m.cfg = cfg;
  const int d = cfg.d_model;
  auto w = [&](std::string name, Shape s) { return Parameter<Real>(std::move(name), detail::normal_init<Real>(rng, std::move(s), 0.02)); };
  auto zeros = [&](std::string name, Shape s) { return Parameter<Real>(std::move(name), Tensor<Real>::zeros(std::move(s))); };
  auto ones = [&](std::string name, Shape s) { return Parameter<Real>(std::move(name), Tensor<Real>::full(std::move(s), Real(1))); };

  m.tok_emb = w("mlm.tok_emb", {cfg.vocab_size, d});
  m.pos_emb = w("mlm.pos_emb", {cfg.max_positions, d});
  m.emb_ln_g = ones("mlm.emb_ln.g", {d});
  m.emb_ln_b = zeros("mlm.emb_ln.b", {d});
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string pre = "mlm.layer" + std::to_string(i) + ".";
    typename MlmModel<Real>::Layer l;
    l.wq = w(pre + "attn.wq", {d, d});
    l.bq = zeros(pre + "attn.bq", {d});
    l.wk = w(pre + "attn.wk", {d, d});
    l.bk = zeros(pre + "attn.bk", {d});
    l.wv = w(pre + "attn.wv", {d, d});
    l.bv = zeros(pre + "attn.bv", {d});
    l.wo = w(pre + "attn.wo", {d, d});
    l.bo = zeros(pre + "attn.bo", {d});
    l.ln1_g = ones(pre + "ln1.g", {d});
    l.ln1_b = zeros(pre + "ln1.b", {d});
    l.ff1_w = w(pre + "ff1.w", {d, cfg.d_ff});
    l.ff1_b = zeros(pre + "ff1.b", {cfg.d_ff});
    l.ff2_w = w(pre + "ff2.w", {cfg.d_ff, d});
    l.ff2_b = zeros(pre + "ff2.b", {d});
    l.ln2_g = ones(pre + "ln2.g", {d});
    l.ln2_b = zeros(pre + "ln2.b", {d});
    m.layers.push_back(std::move(l));
  }
  m.head_bias = zeros("mlm.head_bias", {cfg.vocab_size});
  return m;
}

// Token-embedding rows only; positions are added later, when the assembled
// template goes through the encoder.
template <class Real>
Tensor<Real> embed_tokens(const MlmModel<Real>& model, const std::vector<int>& ids) {
  const auto& table = model.tok_emb.value;
  const int d = model.cfg.d_model;
  Tensor<Real> out({static_cast<int>(ids.size()), d});
  for (size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= model.cfg.vocab_size)
      throw Error(errc::index, "embed_tokens: id " + std::to_string(ids[r]) + " out of range");
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(r), j) = table.at(ids[r], j);
  }
  return out;
}

// Encoder stack over an embedding matrix already living in the graph.
// Returns the final hidden states [T, d_model]. When `trace` is given, the
// per-layer per-head attention matrices are copied into it.
template <class Real>
Value mlm_hidden(Graph<Real>& g, MlmModel<Real>& model, Value emb, bool train_mode = false, Rng* rng = nullptr,
                 AttentionTrace* trace = nullptr) {
  const auto& cfg = model.cfg;
  const int t_len = g.value(emb).shape[0];
  const int d = cfg.d_model;
  if (g.value(emb).ndim() != 2 || g.value(emb).shape[1] != d)
    throw Error(errc::shape, "mlm_hidden: embeddings must be [T," + std::to_string(d) + "]");
  if (t_len > cfg.max_positions)
    throw Error(errc::capacity, "mlm_hidden: sequence length " + std::to_string(t_len) + " exceeds max_positions " +
                                    std::to_string(cfg.max_positions));
  const Real droprate = static_cast<Real>(cfg.dropout_rate);
  const bool dropping = train_mode && cfg.dropout_rate > 0.0;
  if (dropping && rng == nullptr) throw Error(errc::contract, "mlm_hidden: dropout needs an rng in train mode");
  auto drop = [&](Value x) { return dropping ? g.dropout(x, droprate, *rng) : x; };

  std::vector<int> pos_ids(static_cast<size_t>(t_len));
  for (int i = 0; i < t_len; ++i) pos_ids[static_cast<size_t>(i)] = i;
  Value x = g.add(emb, g.gather_rows(g.param(model.pos_emb), pos_ids));
  x = g.layer_norm(x, g.param(model.emb_ln_g), g.param(model.emb_ln_b));
  x = drop(x);

  const int dh = d / cfg.n_heads;
  const Real inv_sqrt_dh = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));
  if (trace) trace->assign(static_cast<size_t>(cfg.n_layers), {});

  for (int li = 0; li < cfg.n_layers; ++li) {
    auto& l = model.layers[static_cast<size_t>(li)];
    Value q = g.add_rowvec(g.matmul(x, g.param(l.wq)), g.param(l.bq));
    Value k = g.add_rowvec(g.matmul(x, g.param(l.wk)), g.param(l.bk));
    Value v = g.add_rowvec(g.matmul(x, g.param(l.wv)), g.param(l.bv));
    std::vector<Value> heads;
    for (int h = 0; h < cfg.n_heads; ++h) {
      Value qh = g.slice_cols(q, h * dh, (h + 1) * dh);
      Value kh = g.slice_cols(k, h * dh, (h + 1) * dh);
      Value vh = g.slice_cols(v, h * dh, (h + 1) * dh);
      Value scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_dh);
      Value probs = g.softmax(scores, 1);
      if (trace) {
        const auto& pt = g.value(probs);
        Tensor<double> copy(pt.shape);
        for (size_t i = 0; i < pt.data.size(); ++i) copy.data[i] = static_cast<double>(pt.data[i]);
        (*trace)[static_cast<size_t>(li)].push_back(std::move(copy));
      }
      heads.push_back(g.matmul(probs, vh));
    }
    Value attn = g.add_rowvec(g.matmul(g.concat_cols(heads), g.param(l.wo)), g.param(l.bo));
    x = g.layer_norm(g.add(x, drop(attn)), g.param(l.ln1_g), g.param(l.ln1_b));
    Value ff = g.gelu_(g.add_rowvec(g.matmul(x, g.param(l.ff1_w)), g.param(l.ff1_b)));
    ff = g.add_rowvec(g.matmul(ff, g.param(l.ff2_w)), g.param(l.ff2_b));
    x = g.layer_norm(g.add(x, drop(ff)), g.param(l.ln2_g), g.param(l.ln2_b));
  }
  return x;
}

// Tied-head logits for a subset of rows (saves the full [T,vocab] product
// when only the mask row matters).
template <class Real>
Value mlm_logits_at_rows(Graph<Real>& g, MlmModel<Real>& model, Value hidden, const std::vector<int>& rows) {
  Value h = g.gather_rows(hidden, rows);
  return g.add_rowvec(g.matmul(h, g.transpose(g.param(model.tok_emb))), g.param(model.head_bias));
}

// Full logits matrix [T, vocab_size] for an assembled embedding sequence.
template <class Real>
Value forward_from_embeddings(Graph<Real>& g, MlmModel<Real>& model, Value emb, bool train_mode = false,
                              Rng* rng = nullptr, AttentionTrace* trace = nullptr) {
  Value hidden = mlm_hidden(g, model, emb, train_mode, rng, trace);
  return g.add_rowvec(g.matmul(hidden, g.transpose(g.param(model.tok_emb))), g.param(model.head_bias));
}

// Masked-LM objective for one batch of sequences. Positions are masked
// independently with probability mask_prob, at least one per sequence; loss
// is the mean cross-entropy of the true tokens at masked positions.
template <class Real>
Value mlm_pretrain_loss(Graph<Real>& g, MlmModel<Real>& model, const std::vector<std::vector<int>>& batch,
                        double mask_prob, Rng& rng, bool train_mode = true) {
  if (batch.empty()) throw Error(errc::empty_input, "mlm_pretrain_loss: empty batch");
  if (mask_prob <= 0.0 || mask_prob >= 1.0) throw Error(errc::contract, "mlm_pretrain_loss: mask_prob not in (0,1)");
  std::vector<Value> losses;
  for (const auto& ids : batch) {
    if (ids.empty()) throw Error(errc::empty_input, "mlm_pretrain_loss: empty sequence");
    std::vector<int> masked = ids;
    std::vector<int> positions;
    for (size_t i = 0; i < ids.size(); ++i)
      if (rng.bernoulli(mask_prob)) positions.push_back(static_cast<int>(i));
    if (positions.empty()) positions.push_back(static_cast<int>(rng.below(ids.size())));
    for (int p : positions) masked[static_cast<size_t>(p)] = Vocab::kMask;

    Value emb = g.gather_rows(g.param(model.tok_emb), masked);
    Value hidden = mlm_hidden(g, model, emb, train_mode, &rng);
    Value logits = mlm_logits_at_rows(g, model, hidden, positions);
    for (size_t r = 0; r < positions.size(); ++r) {
      Value row = g.reshape(g.slice_rows(logits, static_cast<int>(r), static_cast<int>(r) + 1),
                            {model.cfg.vocab_size});
      losses.push_back(g.cross_entropy_logits(row, ids[static_cast<size_t>(positions[r])]));
    }
  }
  return g.mean_scalars(losses);
}

}  // namespace ap
