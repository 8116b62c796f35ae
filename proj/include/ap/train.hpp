#pragma once

// Classification loss through the cloze template, Adam, regime-dependent
// parameter freezing, and the training loops (MLM pretraining and the four
// prompt regimes).

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ap/cloze.hpp"
#include "ap/common.hpp"
#include "ap/graph.hpp"
#include "ap/mlm.hpp"
#include "ap/promptgen.hpp"
#include "ap/text.hpp"

namespace ap {

enum class RegimeKind { ZeroShot, Hpl, ApFull, ApFixedLm };

inline const char* regime_name(RegimeKind k) {
  switch (k) {
    case RegimeKind::ZeroShot: return "zero_shot";
    case RegimeKind::Hpl: return "hpl";
    case RegimeKind::ApFull: return "ap_full";
    case RegimeKind::ApFixedLm: return "ap_fixed_lm";
  }
  return "?";
}

inline RegimeKind regime_from_name(const std::string& s) {
  if (s == "zero_shot") return RegimeKind::ZeroShot;
  if (s == "hpl") return RegimeKind::Hpl;
  if (s == "ap_full") return RegimeKind::ApFull;
  if (s == "ap_fixed_lm") return RegimeKind::ApFixedLm;
  throw Error(errc::config, "unknown regime \"" + s + "\"");
}

struct Regime {
  RegimeKind kind = RegimeKind::ApFull;
  double learning_rate = 1e-5;
  int batch_size = 5;
  int epochs = 20;
};

// Prompt pattern + verbalizer + input budget; everything an example needs to
// become a cloze instance.
struct ClozeTask {
  PromptSpec prompt;
  Verbalizer verbalizer;
  int max_len = 32;
};

// Flags exactly the parameters the regime may update; everything else is
// frozen. Returns the trainable set in a stable order.
template <class Real>
std::vector<Parameter<Real>*> trainable_partition(MlmModel<Real>& model, PromptGenLayer<Real>* prompt_layer,
                                                  RegimeKind kind) {
  if ((kind == RegimeKind::ApFull || kind == RegimeKind::ApFixedLm) && prompt_layer == nullptr)
    throw Error(errc::config, "AP regime requires a prompt layer");
  std::vector<Parameter<Real>*> all = model.params();
  if (prompt_layer)
    for (auto* p : prompt_layer->params()) all.push_back(p);
  for (auto* p : all) p->trainable = false;

  std::vector<Parameter<Real>*> out;
  const bool lm = kind == RegimeKind::Hpl || kind == RegimeKind::ApFull;
  const bool pg = kind == RegimeKind::ApFull || kind == RegimeKind::ApFixedLm;
  if (lm)
    for (auto* p : model.params()) out.push_back(p);
  if (pg)
    for (auto* p : prompt_layer->params()) out.push_back(p);
  for (auto* p : out) p->trainable = true;
  return out;
}

struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;
  int64_t step = 0;
  std::vector<Tensor<double>> m, v;  // moments kept in double regardless of Real

  template <class Real>
  static AdamState for_params(const std::vector<Parameter<Real>*>& params) {
    AdamState st;
    for (auto* p : params) {
      st.m.push_back(Tensor<double>::zeros(p->value.shape));
      st.v.push_back(Tensor<double>::zeros(p->value.shape));
    }
    return st;
  }
};

// Bias-corrected Adam update over an aligned parameter/gradient list.
template <class Real>
void adam_step(const std::vector<Parameter<Real>*>& params, const std::vector<Tensor<Real>>& grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw Error(errc::shape, "adam_step: param/grad/state arity mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->value;
    const auto& g = grads[i];
    if (g.shape != p.shape)
      throw Error(errc::shape, "adam_step: grad shape " + shape_str(g.shape) + " != param shape " +
                                   shape_str(p.shape) + " for " + params[i]->name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t k = 0; k < p.data.size(); ++k) {
      const double gk = static_cast<double>(g.data[k]);
      m.data[k] = AdamState::beta1 * m.data[k] + (1.0 - AdamState::beta1) * gk;
      v.data[k] = AdamState::beta2 * v.data[k] + (1.0 - AdamState::beta2) * gk * gk;
      const double mhat = m.data[k] / bc1;
      const double vhat = v.data[k] / bc2;
      p.data[k] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + AdamState::eps));
    }
  }
}

// Input ids for an example, truncated so the assembled template fits.
template <class Real>
std::vector<int> clamp_input_ids(const Vocab& vocab, const MlmModel<Real>& model, const ClozeTask& task, int s,
                                 const std::string& text) {
  const int budget = model.cfg.max_positions - (task.prompt.m() + 1 + s);
  if (budget < 1)
    throw Error(errc::capacity, "prompt plus adaptive segment leaves no room for input tokens");
  return encode_text(vocab, text, std::min(task.max_len, budget));
}

// Forward pass to the restricted verbalizer logits [l] for one example.
template <class Real>
Value verbalizer_logits(Graph<Real>& g, const Vocab& vocab, MlmModel<Real>& model, PromptGenLayer<Real>* prompt_layer,
                        const ClozeTask& task, const std::string& text, bool train_mode = false, Rng* rng = nullptr) {
  const int s = prompt_layer ? prompt_layer->cfg.s : 0;
  const auto x_ids = clamp_input_ids(vocab, model, task, s, text);
  Value x_emb = g.gather_rows(g.param(model.tok_emb), x_ids);
  std::optional<AdaptivePrompt<Real>> adaptive;
  if (prompt_layer) adaptive = generate_prompt(g, *prompt_layer, x_emb);
  HybridTemplate tpl = assemble_hybrid(g, model, task.prompt, adaptive, x_ids);
  Value hidden = mlm_hidden(g, model, tpl.embeddings, train_mode, rng);
  Value mask_logits = g.reshape(mlm_logits_at_rows(g, model, hidden, {tpl.mask_index}), {model.cfg.vocab_size});
  return g.take(mask_logits, task.verbalizer.token_ids());
}

// Cross-entropy of the gold label against the restricted softmax.
template <class Real>
Value classification_loss(Graph<Real>& g, const Vocab& vocab, MlmModel<Real>& model,
                          PromptGenLayer<Real>* prompt_layer, const ClozeTask& task, const LabeledExample& example,
                          bool train_mode = false, Rng* rng = nullptr) {
  const int gold = task.verbalizer.index_of(example.label);
  Value logits = verbalizer_logits(g, vocab, model, prompt_layer, task, example.text, train_mode, rng);
  return g.cross_entropy_logits(logits, gold);
}

// Label posterior for a single text, eval mode.
template <class Real>
LabelPosterior predict_posterior(const Vocab& vocab, MlmModel<Real>& model, PromptGenLayer<Real>* prompt_layer,
                                 const ClozeTask& task, const std::string& text) {
  Graph<Real> g;
  Value logits = verbalizer_logits(g, vocab, model, prompt_layer, task, text);
  LabelPosterior post;
  post.labels = task.verbalizer.labels();
  const auto& t = g.value(logits);
  double mx = -1e300;
  for (int i = 0; i < t.shape[0]; ++i) mx = std::max(mx, static_cast<double>(t.at(i)));
  double z = 0;
  std::vector<double> e(static_cast<size_t>(t.shape[0]));
  for (int i = 0; i < t.shape[0]; ++i) {
    e[static_cast<size_t>(i)] = std::exp(static_cast<double>(t.at(i)) - mx);
    z += e[static_cast<size_t>(i)];
  }
  for (double v : e) post.probs.push_back(v / z);
  return post;
}

// Accuracy of argmax predictions over a test list, eval mode.
template <class Real>
double evaluate(const Vocab& vocab, MlmModel<Real>& model, PromptGenLayer<Real>* prompt_layer, const ClozeTask& task,
                const std::vector<LabeledExample>& test) {
  if (test.empty()) throw Error(errc::empty_input, "evaluate: empty test set");
  int correct = 0;
  for (const auto& ex : test) {
    const auto post = predict_posterior(vocab, model, prompt_layer, task, ex.text);
    if (predict_label(post) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

struct TrainHistory {
  struct Epoch {
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    std::vector<double> extra_accuracies;  // one per extra test set, when given
  };
  std::vector<Epoch> epochs;
};

// One regime run over a few-shot split. The trainable partition is updated
// with Adam; every other parameter is bit-identical before and after.
// `extra_tests` adds per-epoch accuracy tracks beyond split.test.
template <class Real>
TrainHistory train(const Vocab& vocab, MlmModel<Real>& model, PromptGenLayer<Real>* prompt_layer,
                   const ClozeTask& task, const DatasetSplit& split, const Regime& regime, uint64_t seed,
                   const std::vector<std::vector<LabeledExample>>* extra_tests = nullptr) {
  auto partition = trainable_partition(model, prompt_layer, regime.kind);
  auto eval_extra = [&]() {
    std::vector<double> out;
    if (extra_tests)
      for (const auto& t : *extra_tests) out.push_back(evaluate(vocab, model, prompt_layer, task, t));
    return out;
  };
  TrainHistory history;
  if (regime.kind == RegimeKind::ZeroShot) {
    history.epochs.push_back({0.0, evaluate(vocab, model, prompt_layer, task, split.test), eval_extra()});
    return history;
  }
  if (split.train.empty()) throw Error(errc::empty_input, "train: empty train split for a tuning regime");
  if (regime.batch_size < 1 || regime.epochs < 1) throw Error(errc::config, "train: bad batch size or epoch count");

  Rng rng(mix_seed(seed, 0x54524eULL));  // "TRN"
  AdamState adam = AdamState::for_params(partition);
  std::vector<size_t> order(split.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < regime.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(regime.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(regime.batch_size));
      Graph<Real> g;
      std::vector<Value> losses;
      for (size_t i = begin; i < end; ++i)
        losses.push_back(
            classification_loss(g, vocab, model, prompt_layer, task, split.train[order[i]], true, &rng));
      Value batch_loss = g.mean_scalars(losses);
      g.backward(batch_loss);
      std::vector<Tensor<Real>> grads;
      grads.reserve(partition.size());
      for (auto* p : partition) grads.push_back(g.grad_of(*p));
      adam_step(partition, grads, adam, regime.learning_rate);
      loss_sum += static_cast<double>(g.value(batch_loss).item()) * static_cast<double>(end - begin);
    }
    history.epochs.push_back({loss_sum / static_cast<double>(split.train.size()),
                              evaluate(vocab, model, prompt_layer, task, split.test), eval_extra()});
  }
  return history;
}

// Masked-LM pretraining over raw texts; trains every model parameter.
// Returns the mean masked cross-entropy per epoch.
template <class Real>
std::vector<double> pretrain_mlm(MlmModel<Real>& model, const Vocab& vocab, const std::vector<std::string>& texts,
                                 int epochs, int batch_size, double mask_prob, double lr, uint64_t seed,
                                 int max_len = 32) {
  if (texts.empty()) throw Error(errc::empty_input, "pretrain_mlm: empty corpus");
  if (batch_size < 1 || epochs < 1) throw Error(errc::config, "pretrain_mlm: bad batch size or epoch count");
  std::vector<std::vector<int>> encoded;
  encoded.reserve(texts.size());
  for (const auto& t : texts) encoded.push_back(encode_text(vocab, t, std::min(max_len, model.cfg.max_positions)));

  for (auto* p : model.params()) p->trainable = true;
  auto partition = model.params();
  AdamState adam = AdamState::for_params(partition);
  Rng rng(mix_seed(seed, 0x4d4c4dULL));

  std::vector<size_t> order(encoded.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> epoch_losses;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int64_t count = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
      std::vector<std::vector<int>> batch;
      for (size_t i = begin; i < end; ++i) batch.push_back(encoded[order[i]]);
      Graph<Real> g;
      Value loss = mlm_pretrain_loss(g, model, batch, mask_prob, rng);
      g.backward(loss);
      std::vector<Tensor<Real>> grads;
      grads.reserve(partition.size());
      for (auto* p : partition) grads.push_back(g.grad_of(*p));
      adam_step(partition, grads, adam, lr);
      loss_sum += static_cast<double>(g.value(loss).item()) * static_cast<double>(end - begin);
      count += static_cast<int64_t>(end - begin);
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(count));
  }
  return epoch_losses;
}

}  // namespace ap
