#pragma once

// The adaptive prompt layer: a GRU encoder over the input's embedding rows,
// a GRU decoder with additive attention, and an output projection that emits
// s continuous prompt vectors in embedding space. Its parameters are fully
// disjoint from the language model's.

#include <string>
#include <vector>

#include "ap/common.hpp"
#include "ap/graph.hpp"
#include "ap/tensor.hpp"

namespace ap {

struct PromptGenConfig {
  int d_model = 64;   // must match the attached LM
  int d_hidden = 64;  // recurrent state width
  int s = 4;          // number of prompt vectors
  uint64_t seed = 0;

  void validate() const {
    if (d_model <= 0 || d_hidden <= 0) throw Error(errc::config, "PromptGenConfig: widths must be positive");
    if (s < 1) throw Error(errc::config, "PromptGenConfig: s must be >= 1");
  }
};

// Continuous prompt vectors plus the decoder-to-encoder attention weights
// that produced them (one row per prompt vector, one column per input token).
template <class Real>
struct AdaptivePrompt {
  Value vectors;                   // [s, d_model] node in the generating graph
  Tensor<double> attention_trace;  // [s, n]
};

template <class Real>
struct GruCell {
  Parameter<Real> wz, wr, wh;  // [(in + hidden), hidden]
  Parameter<Real> bz, br, bh;  // [hidden]
};

template <class Real>
struct PromptGenLayer {
  PromptGenConfig cfg;
  GruCell<Real> enc;           // input: d_model
  GruCell<Real> dec;           // input: d_model + d_hidden (prev output, context)
  Parameter<Real> att_wq;      // [d_hidden, d_hidden] decoder-state projection
  Parameter<Real> att_wk;      // [d_hidden, d_hidden] encoder-state projection
  Parameter<Real> att_b;       // [d_hidden]
  Parameter<Real> att_v;       // [d_hidden] score vector
  Parameter<Real> out_w;       // [d_hidden, d_model]
  Parameter<Real> out_b;       // [d_model]
  Parameter<Real> start;       // [d_model] learned first decoder input

  std::vector<Parameter<Real>*> params() {
    return {&enc.wz, &enc.wr, &enc.wh, &enc.bz, &enc.br, &enc.bh,
            &dec.wz, &dec.wr, &dec.wh, &dec.bz, &dec.br, &dec.bh,
            &att_wq, &att_wk, &att_b,  &att_v,  &out_w,  &out_b,  &start};
  }
};

template <class Real>
PromptGenLayer<Real> init_prompt_layer(const PromptGenConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0x505247));  // "PRG"
  PromptGenLayer<Real> l;
  l.cfg = cfg;
  const int d = cfg.d_model, h = cfg.d_hidden;
  auto w = [&](std::string name, Shape s) {
    return Parameter<Real>(std::move(name), detail::normal_init<Real>(rng, std::move(s), 0.02));
  };
  auto zeros = [&](std::string name, Shape s) { return Parameter<Real>(std::move(name), Tensor<Real>::zeros(std::move(s))); };
  auto gru = [&](const std::string& pre, int in) {
    GruCell<Real> c;
    c.wz = w(pre + ".wz", {in + h, h});
    c.wr = w(pre + ".wr", {in + h, h});
    c.wh = w(pre + ".wh", {in + h, h});
    c.bz = zeros(pre + ".bz", {h});
    c.br = zeros(pre + ".br", {h});
    c.bh = zeros(pre + ".bh", {h});
    return c;
  };
  l.enc = gru("pg.enc", d);
  l.dec = gru("pg.dec", d + h);
  l.att_wq = w("pg.att.wq", {h, h});
  l.att_wk = w("pg.att.wk", {h, h});
  l.att_b = zeros("pg.att.b", {h});
  l.att_v = w("pg.att.v", {h});
  l.out_w = w("pg.out.w", {h, d});
  l.out_b = zeros("pg.out.b", {d});
  l.start = w("pg.start", {d});
  return l;
}

namespace detail {

// One GRU step: x [1,in], state [1,h] -> new state [1,h].
template <class Real>
Value gru_step(Graph<Real>& g, GruCell<Real>& cell, Value x, Value state) {
  Value xs = g.concat_cols({x, state});
  Value z = g.sigmoid_(g.add_rowvec(g.matmul(xs, g.param(cell.wz)), g.param(cell.bz)));
  Value r = g.sigmoid_(g.add_rowvec(g.matmul(xs, g.param(cell.wr)), g.param(cell.br)));
  Value xrs = g.concat_cols({x, g.mul(r, state)});
  Value cand = g.tanh_(g.add_rowvec(g.matmul(xrs, g.param(cell.wh)), g.param(cell.bh)));
  // state' = (1 - z) * state + z * cand
  Value keep = g.add(g.scale(z, Real(-1)), g.input(Tensor<Real>::full({1, g.value(state).shape[1]}, Real(1))));
  return g.add(g.mul(keep, state), g.mul(z, cand));
}

}  // namespace detail

// Unidirectional recurrent pass over the input rows; state j depends on
// rows 1..j only.
template <class Real>
Value encode_input(Graph<Real>& g, PromptGenLayer<Real>& layer, Value input_embeddings) {
  const auto& emb = g.value(input_embeddings);
  if (emb.ndim() != 2 || emb.shape[1] != layer.cfg.d_model)
    throw Error(errc::shape, "encode_input: expected [n," + std::to_string(layer.cfg.d_model) + "]");
  const int n = emb.shape[0];
  if (n == 0) throw Error(errc::empty_input, "encode_input: empty input sequence");
  Value state = g.input(Tensor<Real>::zeros({1, layer.cfg.d_hidden}));
  std::vector<Value> states;
  for (int j = 0; j < n; ++j) {
    Value xj = g.slice_rows(input_embeddings, j, j + 1);
    state = detail::gru_step(g, layer.enc, xj, state);
    states.push_back(state);
  }
  return g.concat_rows(states);  // [n, d_hidden]
}

// Additive attention of one decoder state over the encoder states.
// Returns the blended context [1, d_hidden] and the weights [1, n].
template <class Real>
std::pair<Value, Value> attend(Graph<Real>& g, PromptGenLayer<Real>& layer, Value decoder_state,
                               Value encoder_states) {
  const auto& es = g.value(encoder_states);
  if (es.ndim() != 2 || es.shape[1] != layer.cfg.d_hidden || g.value(decoder_state).shape != Shape{1, layer.cfg.d_hidden})
    throw Error(errc::shape, "attend: state/encoder shape mismatch");
  if (es.shape[0] < 1) throw Error(errc::empty_input, "attend: no encoder states");
  Value qproj = g.matmul(decoder_state, g.param(layer.att_wq));            // [1,h]
  Value kproj = g.matmul(encoder_states, g.param(layer.att_wk));           // [n,h]
  Value qvec = g.add(g.reshape(qproj, {layer.cfg.d_hidden}), g.param(layer.att_b));
  Value scores_h = g.tanh_(g.add_rowvec(kproj, qvec));                     // [n,h]
  Value scores = g.matmul(scores_h, g.reshape(g.param(layer.att_v), {layer.cfg.d_hidden, 1}));  // [n,1]
  Value weights = g.softmax(g.transpose(scores), 1);                       // [1,n]
  Value context = g.matmul(weights, encoder_states);                       // [1,h]
  return {context, weights};
}

// Runs the full encoder/decoder and emits the adaptive prompt: s vectors in
// embedding space plus the attention trace. Deterministic and differentiable
// end to end.
template <class Real>
AdaptivePrompt<Real> generate_prompt(Graph<Real>& g, PromptGenLayer<Real>& layer, Value input_embeddings) {
  Value enc_states = encode_input(g, layer, input_embeddings);
  const int n = g.value(enc_states).shape[0];
  const int s = layer.cfg.s;

  Tensor<double> trace({s, n});
  Value state = g.input(Tensor<Real>::zeros({1, layer.cfg.d_hidden}));
  Value prev_out = g.reshape(g.param(layer.start), {1, layer.cfg.d_model});
  std::vector<Value> outputs;
  for (int step = 0; step < s; ++step) {
    auto [context, weights] = attend(g, layer, state, enc_states);
    for (int j = 0; j < n; ++j) trace.at(step, j) = static_cast<double>(g.value(weights).at(0, j));
    state = detail::gru_step(g, layer.dec, g.concat_cols({prev_out, context}), state);
    Value h = g.add_rowvec(g.matmul(state, g.param(layer.out_w)), g.param(layer.out_b));  // [1,d_model]
    outputs.push_back(h);
    prev_out = h;
  }
  AdaptivePrompt<Real> out;
  out.vectors = g.concat_rows(outputs);  // [s, d_model]
  out.attention_trace = std::move(trace);
  return out;
}

}  // namespace ap
