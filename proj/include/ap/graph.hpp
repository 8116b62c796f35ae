#pragma once

// Reverse-mode tape. Ops evaluate eagerly at insertion; backward() replays
// the tape once in reverse creation order. A graph is single-use: build,
// backward, read gradients, discard.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ap/common.hpp"
#include "ap/tensor.hpp"

namespace ap {

struct Value {
  int id = -1;
};

template <class Real>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves ------------------------------------------------------------

  Value input(Tensor<Real> t) {
    check_finite(t, "input");
    t.requires_grad = false;
    return push(std::move(t), false, {}, nullptr);
  }

  // Binds a parameter leaf. Repeated binds of the same parameter return the
  // same node, so gradient contributions from every use point sum up.
  Value param(const Parameter<Real>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Value{it->second};
    check_finite(p.value, "param " + p.name);
    Tensor<Real> t = p.value;
    t.requires_grad = p.trainable;
    Value v = push(std::move(t), p.trainable, {}, nullptr);
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  // ---- elementwise -------------------------------------------------------

  Value add(Value a, Value b) {
    const auto& ta = val(a);
    const auto& tb = val(b);
    if (!ta.same_shape(tb))
      throw Error(errc::shape, "add: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor<Real> out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    return push(std::move(out), needs(a) || needs(b), {a.id, b.id}, [this, a, b](int self) {
      const auto& g = grads_[self];
      if (needs(a)) {
        auto& ga = grad_ref(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      }
      if (needs(b)) {
        auto& gb = grad_ref(b);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
      }
    });
  }

  // [m,n] + [n], the vector added to every row.
  Value add_rowvec(Value a, Value v) {
    const auto& ta = val(a);
    const auto& tv = val(v);
    if (ta.ndim() != 2 || tv.ndim() != 1 || ta.shape[1] != tv.shape[0])
      throw Error(errc::shape, "add_rowvec: " + shape_str(ta.shape) + " vs " + shape_str(tv.shape));
    Tensor<Real> out = ta;
    const int m = ta.shape[0], n = ta.shape[1];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.at(i, j) += tv.at(j);
    return push(std::move(out), needs(a) || needs(v), {a.id, v.id}, [this, a, v, m, n](int self) {
      const auto& g = grads_[self];
      if (needs(a)) {
        auto& ga = grad_ref(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      }
      if (needs(v)) {
        auto& gv = grad_ref(v);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gv.at(j) += g.at(i, j);
      }
    });
  }

  Value mul(Value a, Value b) {
    const auto& ta = val(a);
    const auto& tb = val(b);
    if (!ta.same_shape(tb))
      throw Error(errc::shape, "mul: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor<Real> out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    return push(std::move(out), needs(a) || needs(b), {a.id, b.id}, [this, a, b](int self) {
      const auto& g = grads_[self];
      const auto& ta = values_[a.id];
      const auto& tb = values_[b.id];
      if (needs(a)) {
        auto& ga = grad_ref(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * tb.data[i];
      }
      if (needs(b)) {
        auto& gb = grad_ref(b);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * ta.data[i];
      }
    });
  }

  Value scale(Value a, Real c) {
    Tensor<Real> out = val(a);
    for (auto& x : out.data) x *= c;
    return push(std::move(out), needs(a), {a.id}, [this, a, c](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      auto& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * c;
    });
  }

  Value tanh_(Value a) {
    Tensor<Real> out = val(a);
    for (auto& x : out.data) x = std::tanh(x);
    return push(std::move(out), needs(a), {a.id}, [this, a](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      const auto& y = values_[self];
      auto& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * (Real(1) - y.data[i] * y.data[i]);
    });
  }

  Value sigmoid_(Value a) {
    Tensor<Real> out = val(a);
    for (auto& x : out.data) x = stable_sigmoid(x);
    return push(std::move(out), needs(a), {a.id}, [this, a](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      const auto& y = values_[self];
      auto& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * y.data[i] * (Real(1) - y.data[i]);
    });
  }

  // tanh-approximation GELU
  Value gelu_(Value a) {
    Tensor<Real> out = val(a);
    for (auto& x : out.data) {
      const Real u = kGeluC * (x + Real(0.044715) * x * x * x);
      x = Real(0.5) * x * (Real(1) + std::tanh(u));
    }
    return push(std::move(out), needs(a), {a.id}, [this, a](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      const auto& xin = values_[a.id];
      auto& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i) {
        const Real x = xin.data[i];
        const Real u = kGeluC * (x + Real(0.044715) * x * x * x);
        const Real t = std::tanh(u);
        const Real du = kGeluC * (Real(1) + Real(3) * Real(0.044715) * x * x);
        ga.data[i] += g.data[i] * (Real(0.5) * (Real(1) + t) + Real(0.5) * x * (Real(1) - t * t) * du);
      }
    });
  }

  // ---- linear algebra ----------------------------------------------------

  Value matmul(Value a, Value b) {
    const auto& ta = val(a);
    const auto& tb = val(b);
    if (ta.ndim() != 2 || tb.ndim() != 2 || ta.shape[1] != tb.shape[0])
      throw Error(errc::shape, "matmul: " + shape_str(ta.shape) + " x " + shape_str(tb.shape));
    const int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor<Real> out({m, n});
    for (int i = 0; i < m; ++i) {
      Real* orow = out.data.data() + static_cast<size_t>(i) * n;
      const Real* arow = ta.data.data() + static_cast<size_t>(i) * k;
      for (int kk = 0; kk < k; ++kk) {
        const Real aik = arow[kk];
        const Real* brow = tb.data.data() + static_cast<size_t>(kk) * n;
        for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
    return push(std::move(out), needs(a) || needs(b), {a.id, b.id}, [this, a, b, m, k, n](int self) {
      const auto& g = grads_[self];
      const auto& ta = values_[a.id];
      const auto& tb = values_[b.id];
      if (needs(a)) {
        // dA[i,k] += sum_j G[i,j] * B[k,j]
        auto& ga = grad_ref(a);
        for (int i = 0; i < m; ++i) {
          const Real* grow = g.data.data() + static_cast<size_t>(i) * n;
          Real* garow = ga.data.data() + static_cast<size_t>(i) * k;
          for (int kk = 0; kk < k; ++kk) {
            const Real* brow = tb.data.data() + static_cast<size_t>(kk) * n;
            Real acc = 0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            garow[kk] += acc;
          }
        }
      }
      if (needs(b)) {
        // dB[k,j] += sum_i A[i,k] * G[i,j]
        auto& gb = grad_ref(b);
        for (int i = 0; i < m; ++i) {
          const Real* arow = ta.data.data() + static_cast<size_t>(i) * k;
          const Real* grow = g.data.data() + static_cast<size_t>(i) * n;
          for (int kk = 0; kk < k; ++kk) {
            const Real aik = arow[kk];
            Real* gbrow = gb.data.data() + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    });
  }

  Value transpose(Value a) {
    const auto& ta = val(a);
    if (ta.ndim() != 2) throw Error(errc::shape, "transpose: rank != 2");
    const int m = ta.shape[0], n = ta.shape[1];
    Tensor<Real> out({n, m});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.at(j, i) = ta.at(i, j);
    return push(std::move(out), needs(a), {a.id}, [this, a, m, n](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      auto& ga = grad_ref(a);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
    });
  }

  // Per-row normalization: y = gain * (x - mean) / sqrt(var + eps) + bias.
  Value layer_norm(Value a, Value gain, Value bias, Real eps = Real(1e-5)) {
    const auto& ta = val(a);
    const auto& tg = val(gain);
    const auto& tb = val(bias);
    if (ta.ndim() != 2 || tg.ndim() != 1 || tb.ndim() != 1 || tg.shape[0] != ta.shape[1] ||
        tb.shape[0] != ta.shape[1])
      throw Error(errc::shape, "layer_norm: " + shape_str(ta.shape) + " gain " + shape_str(tg.shape));
    const int m = ta.shape[0], n = ta.shape[1];
    Tensor<Real> out({m, n});
    std::vector<Real> inv_sigma(static_cast<size_t>(m));
    std::vector<Real> xhat(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
      Real mean = 0;
      for (int j = 0; j < n; ++j) mean += ta.at(i, j);
      mean /= Real(n);
      Real var = 0;
      for (int j = 0; j < n; ++j) {
        const Real d = ta.at(i, j) - mean;
        var += d * d;
      }
      var /= Real(n);
      const Real is = Real(1) / std::sqrt(var + eps);
      inv_sigma[static_cast<size_t>(i)] = is;
      for (int j = 0; j < n; ++j) {
        const Real xh = (ta.at(i, j) - mean) * is;
        xhat[static_cast<size_t>(i) * n + j] = xh;
        out.at(i, j) = tg.at(j) * xh + tb.at(j);
      }
    }
    return push(std::move(out), needs(a) || needs(gain) || needs(bias), {a.id, gain.id, bias.id},
                [this, a, gain, bias, m, n, inv_sigma = std::move(inv_sigma), xhat = std::move(xhat)](int self) {
                  const auto& g = grads_[self];
                  const auto& tg = values_[gain.id];
                  for (int i = 0; i < m; ++i) {
                    const Real* grow = g.data.data() + static_cast<size_t>(i) * n;
                    const Real* xh = xhat.data() + static_cast<size_t>(i) * n;
                    if (needs(gain)) {
                      auto& gg = grad_ref(gain);
                      for (int j = 0; j < n; ++j) gg.at(j) += grow[j] * xh[j];
                    }
                    if (needs(bias)) {
                      auto& gb = grad_ref(bias);
                      for (int j = 0; j < n; ++j) gb.at(j) += grow[j];
                    }
                    if (needs(a)) {
                      Real s1 = 0, s2 = 0;
                      for (int j = 0; j < n; ++j) {
                        const Real gy = grow[j] * tg.at(j);
                        s1 += gy;
                        s2 += gy * xh[j];
                      }
                      s1 /= Real(n);
                      s2 /= Real(n);
                      auto& ga = grad_ref(a);
                      const Real is = inv_sigma[static_cast<size_t>(i)];
                      for (int j = 0; j < n; ++j) {
                        const Real gy = grow[j] * tg.at(j);
                        ga.at(i, j) += (gy - s1 - xh[j] * s2) * is;
                      }
                    }
                  }
                });
  }

  // ---- shape & selection -------------------------------------------------

  Value gather_rows(Value table, std::vector<int> ids) {
    const auto& tt = val(table);
    if (tt.ndim() != 2) throw Error(errc::shape, "gather_rows: table rank != 2");
    const int v = tt.shape[0], d = tt.shape[1];
    for (int id : ids)
      if (id < 0 || id >= v)
        throw Error(errc::index, "gather_rows: id " + std::to_string(id) + " out of [0," + std::to_string(v) + ")");
    Tensor<Real> out({static_cast<int>(ids.size()), d});
    for (size_t r = 0; r < ids.size(); ++r)
      for (int j = 0; j < d; ++j) out.at(static_cast<int>(r), j) = tt.at(ids[r], j);
    return push(std::move(out), needs(table), {table.id}, [this, table, ids = std::move(ids), d](int self) {
      if (!needs(table)) return;
      const auto& g = grads_[self];
      auto& gt = grad_ref(table);
      for (size_t r = 0; r < ids.size(); ++r)
        for (int j = 0; j < d; ++j) gt.at(ids[r], j) += g.at(static_cast<int>(r), j);
    });
  }

  Value concat_rows(const std::vector<Value>& parts) {
    if (parts.empty()) throw Error(errc::contract, "concat_rows: no parts");
    int cols = -1, rows = 0;
    bool rg = false;
    for (Value p : parts) {
      const auto& t = val(p);
      if (t.ndim() != 2) throw Error(errc::shape, "concat_rows: rank != 2");
      if (cols < 0) cols = t.shape[1];
      if (t.shape[1] != cols) throw Error(errc::shape, "concat_rows: column mismatch");
      rows += t.shape[0];
      rg = rg || needs(p);
    }
    Tensor<Real> out({rows, cols});
    int r0 = 0;
    for (Value p : parts) {
      const auto& t = val(p);
      std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<size_t>(r0) * cols);
      r0 += t.shape[0];
    }
    std::vector<int> pids;
    for (Value p : parts) pids.push_back(p.id);
    return push(std::move(out), rg, pids, [this, parts, cols](int self) {
      const auto& g = grads_[self];
      int r0 = 0;
      for (Value p : parts) {
        const int pr = values_[p.id].shape[0];
        if (needs(p)) {
          auto& gp = grad_ref(p);
          const Real* src = g.data.data() + static_cast<size_t>(r0) * cols;
          for (size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += src[i];
        }
        r0 += pr;
      }
    });
  }

  Value concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw Error(errc::contract, "concat_cols: no parts");
    int rows = -1, cols = 0;
    bool rg = false;
    for (Value p : parts) {
      const auto& t = val(p);
      if (t.ndim() != 2) throw Error(errc::shape, "concat_cols: rank != 2");
      if (rows < 0) rows = t.shape[0];
      if (t.shape[0] != rows) throw Error(errc::shape, "concat_cols: row mismatch");
      cols += t.shape[1];
      rg = rg || needs(p);
    }
    Tensor<Real> out({rows, cols});
    int c0 = 0;
    for (Value p : parts) {
      const auto& t = val(p);
      const int pc = t.shape[1];
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < pc; ++j) out.at(i, c0 + j) = t.at(i, j);
      c0 += pc;
    }
    std::vector<int> pids;
    for (Value p : parts) pids.push_back(p.id);
    return push(std::move(out), rg, pids, [this, parts, rows](int self) {
      const auto& g = grads_[self];
      int c0 = 0;
      for (Value p : parts) {
        const int pc = values_[p.id].shape[1];
        if (needs(p)) {
          auto& gp = grad_ref(p);
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pc; ++j) gp.at(i, j) += g.at(i, c0 + j);
        }
        c0 += pc;
      }
    });
  }

  Value slice_rows(Value a, int r0, int r1) {
    const auto& ta = val(a);
    if (ta.ndim() != 2) throw Error(errc::shape, "slice_rows: rank != 2");
    if (r0 < 0 || r1 < r0 || r1 > ta.shape[0]) throw Error(errc::index, "slice_rows: bad range");
    const int n = ta.shape[1];
    Tensor<Real> out({r1 - r0, n});
    std::copy(ta.data.begin() + static_cast<size_t>(r0) * n, ta.data.begin() + static_cast<size_t>(r1) * n,
              out.data.begin());
    return push(std::move(out), needs(a), {a.id}, [this, a, r0, n](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      auto& ga = grad_ref(a);
      const int rows = g.shape[0];
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) ga.at(r0 + i, j) += g.at(i, j);
    });
  }

  Value slice_cols(Value a, int c0, int c1) {
    const auto& ta = val(a);
    if (ta.ndim() != 2) throw Error(errc::shape, "slice_cols: rank != 2");
    if (c0 < 0 || c1 < c0 || c1 > ta.shape[1]) throw Error(errc::index, "slice_cols: bad range");
    const int m = ta.shape[0], n = ta.shape[1];
    Tensor<Real> out({m, c1 - c0});
    for (int i = 0; i < m; ++i)
      for (int j = c0; j < c1; ++j) out.at(i, j - c0) = ta.at(i, j);
    return push(std::move(out), needs(a), {a.id}, [this, a, c0, m, n](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      auto& ga = grad_ref(a);
      const int w = g.shape[1];
      (void)n;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) ga.at(i, c0 + j) += g.at(i, j);
    });
  }

  // Select arbitrary flat positions; gradient scatters back.
  Value take(Value a, std::vector<int> idx) {
    const auto& ta = val(a);
    for (int i : idx)
      if (i < 0 || i >= ta.numel()) throw Error(errc::index, "take: flat index out of range");
    Tensor<Real> out({static_cast<int>(idx.size())});
    for (size_t k = 0; k < idx.size(); ++k) out.at(static_cast<int>(k)) = ta.data[static_cast<size_t>(idx[k])];
    return push(std::move(out), needs(a), {a.id}, [this, a, idx = std::move(idx)](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      auto& ga = grad_ref(a);
      for (size_t k = 0; k < idx.size(); ++k) ga.data[static_cast<size_t>(idx[k])] += g.at(static_cast<int>(k));
    });
  }

  Value reshape(Value a, Shape s) {
    const auto& ta = val(a);
    if (shape_numel(s) != ta.numel())
      throw Error(errc::shape, "reshape: numel mismatch " + shape_str(ta.shape) + " -> " + shape_str(s));
    Tensor<Real> out(std::move(s), ta.data);
    return push(std::move(out), needs(a), {a.id}, [this, a](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      auto& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    });
  }

  // ---- reductions ----------------------------------------------------------

  Value sum(Value a) {
    const auto& ta = val(a);
    Real acc = 0;
    for (Real x : ta.data) acc += x;
    return push(Tensor<Real>::scalar(acc), needs(a), {a.id}, [this, a](int self) {
      if (!needs(a)) return;
      const Real g = grads_[self].item();
      auto& ga = grad_ref(a);
      for (auto& x : ga.data) x += g;
    });
  }

  Value mean(Value a) {
    const auto& ta = val(a);
    if (ta.numel() == 0) throw Error(errc::empty_input, "mean of empty tensor");
    Real acc = 0;
    for (Real x : ta.data) acc += x;
    acc /= Real(ta.numel());
    return push(Tensor<Real>::scalar(acc), needs(a), {a.id}, [this, a](int self) {
      if (!needs(a)) return;
      const Real g = grads_[self].item() / Real(values_[a.id].numel());
      auto& ga = grad_ref(a);
      for (auto& x : ga.data) x += g;
    });
  }

  // Mean of k scalar nodes (batch-loss aggregation).
  Value mean_scalars(const std::vector<Value>& xs) {
    if (xs.empty()) throw Error(errc::empty_input, "mean_scalars: no terms");
    Real acc = 0;
    bool rg = false;
    std::vector<int> pids;
    for (Value x : xs) {
      acc += val(x).item();
      rg = rg || needs(x);
      pids.push_back(x.id);
    }
    acc /= Real(xs.size());
    return push(Tensor<Real>::scalar(acc), rg, pids, [this, xs](int self) {
      const Real g = grads_[self].item() / Real(xs.size());
      for (Value x : xs)
        if (needs(x)) grad_ref(x).at(0) += g;
    });
  }

  // ---- probability ---------------------------------------------------------

  // Max-subtracted softmax along `axis` of a rank-1 or rank-2 tensor.
  Value softmax(Value a, int axis) {
    const auto& ta = val(a);
    if (ta.ndim() < 1 || ta.ndim() > 2) throw Error(errc::shape, "softmax: rank must be 1 or 2");
    if (axis < 0 || axis >= ta.ndim()) throw Error(errc::contract, "softmax: bad axis");
    Tensor<Real> out = ta;
    for_each_line(ta.shape, axis, [&](int base, int stride, int len) {
      Real mx = out.data[static_cast<size_t>(base)];
      for (int i = 1; i < len; ++i) mx = std::max(mx, out.data[static_cast<size_t>(base + i * stride)]);
      Real z = 0;
      for (int i = 0; i < len; ++i) {
        Real& x = out.data[static_cast<size_t>(base + i * stride)];
        x = std::exp(x - mx);
        z += x;
      }
      for (int i = 0; i < len; ++i) out.data[static_cast<size_t>(base + i * stride)] /= z;
    });
    return push(std::move(out), needs(a), {a.id}, [this, a, axis](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      const auto& y = values_[self];
      auto& ga = grad_ref(a);
      for_each_line(y.shape, axis, [&](int base, int stride, int len) {
        Real dot = 0;
        for (int i = 0; i < len; ++i) {
          const size_t k = static_cast<size_t>(base + i * stride);
          dot += g.data[k] * y.data[k];
        }
        for (int i = 0; i < len; ++i) {
          const size_t k = static_cast<size_t>(base + i * stride);
          ga.data[k] += y.data[k] * (g.data[k] - dot);
        }
      });
    });
  }

  // -log softmax(logits)[target] for a rank-1 logits vector.
  Value cross_entropy_logits(Value logits, int target) {
    const auto& tl = val(logits);
    if (tl.ndim() != 1) throw Error(errc::shape, "cross_entropy_logits: logits rank != 1");
    const int n = tl.shape[0];
    if (target < 0 || target >= n)
      throw Error(errc::index, "cross_entropy_logits: target " + std::to_string(target) + " out of range");
    Real mx = tl.at(0);
    for (int i = 1; i < n; ++i) mx = std::max(mx, tl.at(i));
    Real z = 0;
    for (int i = 0; i < n; ++i) z += std::exp(tl.at(i) - mx);
    const Real loss = std::log(z) + mx - tl.at(target);
    return push(Tensor<Real>::scalar(loss), needs(logits), {logits.id}, [this, logits, target, mx, z, n](int self) {
      if (!needs(logits)) return;
      const Real g = grads_[self].item();
      const auto& tl = values_[logits.id];
      auto& gl = grad_ref(logits);
      for (int i = 0; i < n; ++i) {
        const Real p = std::exp(tl.at(i) - mx) / z;
        gl.at(i) += g * (p - (i == target ? Real(1) : Real(0)));
      }
    });
  }

  // Inverted dropout; identity when rate == 0.
  Value dropout(Value a, Real rate, Rng& rng) {
    if (rate < Real(0) || rate >= Real(1)) throw Error(errc::contract, "dropout: rate must be in [0,1)");
    if (rate == Real(0)) return a;
    const auto& ta = val(a);
    std::vector<Real> mask(ta.data.size());
    const Real keep = Real(1) - rate;
    for (auto& m : mask) m = rng.bernoulli(static_cast<double>(rate)) ? Real(0) : Real(1) / keep;
    Tensor<Real> out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask[i];
    return push(std::move(out), needs(a), {a.id}, [this, a, mask = std::move(mask)](int self) {
      if (!needs(a)) return;
      const auto& g = grads_[self];
      auto& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * mask[i];
    });
  }

  // ---- backward ------------------------------------------------------------

  void backward(Value loss) {
    if (consumed_) throw Error(errc::graph_reuse, "backward already ran on this graph");
    const auto& tl = val(loss);
    if (tl.numel() != 1) throw Error(errc::contract, "backward: loss must be scalar, got " + shape_str(tl.shape));
    consumed_ = true;
    if (!nodes_[static_cast<size_t>(loss.id)].requires_grad) return;  // nothing trainable upstream
    grad_ref(loss).at(0) = Real(1);
    for (int id = loss.id; id >= 0; --id) {
      auto& n = nodes_[static_cast<size_t>(id)];
      if (!n.requires_grad || grads_[static_cast<size_t>(id)].data.empty()) continue;
      if (n.backprop) n.backprop(id);
    }
  }

  bool consumed() const { return consumed_; }
  size_t size() const { return nodes_.size(); }

  const Tensor<Real>& value(Value v) const { return values_[static_cast<size_t>(v.id)]; }

  // Gradient of a node; zeros if the node was never reached.
  Tensor<Real> grad(Value v) const {
    const auto& g = grads_[static_cast<size_t>(v.id)];
    if (g.data.empty()) return Tensor<Real>::zeros(values_[static_cast<size_t>(v.id)].shape);
    return g;
  }

  // Gradient w.r.t. a parameter; zeros when the parameter is unused.
  Tensor<Real> grad_of(const Parameter<Real>& p) const {
    auto it = param_nodes_.find(&p);
    if (it == param_nodes_.end()) return Tensor<Real>::zeros(p.value.shape);
    return grad(Value{it->second});
  }

 private:
  struct Node {
    bool requires_grad = false;
    std::function<void(int)> backprop;
  };

  static constexpr Real kGeluC = Real(0.7978845608028653558798921198687);  // sqrt(2/pi)

  static Real stable_sigmoid(Real x) {
    if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
  }

  void check_finite(const Tensor<Real>& t, const std::string& where) const {
    if (!t.all_finite()) throw Error(errc::numeric, "non-finite value in " + where);
  }

  bool needs(Value v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }

  const Tensor<Real>& val(Value v) const {
    if (v.id < 0 || v.id >= static_cast<int>(values_.size())) throw Error(errc::contract, "stale Value handle");
    return values_[static_cast<size_t>(v.id)];
  }

  Tensor<Real>& grad_ref(Value v) {
    auto& g = grads_[static_cast<size_t>(v.id)];
    if (g.data.empty()) g = Tensor<Real>::zeros(values_[static_cast<size_t>(v.id)].shape);
    return g;
  }

  // Walks every 1-D line of `shape` along `axis` as (base, stride, len).
  template <class F>
  static void for_each_line(const Shape& shape, int axis, F&& f) {
    if (shape.size() == 1) {
      f(0, 1, shape[0]);
      return;
    }
    const int m = shape[0], n = shape[1];
    if (axis == 1) {
      for (int i = 0; i < m; ++i) f(i * n, 1, n);
    } else {
      for (int j = 0; j < n; ++j) f(j, n, m);
    }
  }

  Value push(Tensor<Real> out, bool requires_grad, std::vector<int> parents, std::function<void(int)> backprop) {
    (void)parents;  // recorded implicitly by the closures
    check_finite(out, "op output");
    out.requires_grad = requires_grad;
    values_.push_back(std::move(out));
    grads_.emplace_back();
    nodes_.push_back(Node{requires_grad, std::move(backprop)});
    return Value{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Tensor<Real>> values_;
  std::vector<Tensor<Real>> grads_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Real>*, int> param_nodes_;
  bool consumed_ = false;
};

// ---- finite-difference oracle ----------------------------------------------
//
// Central differences against the tape, coordinate by coordinate. Only
// meaningful in 64-bit mode. Returns the max relative error
// |a - b| / max(|a|, |b|, 1e-8) over all trainable coordinates.

// Variant with the oracle side evaluated at extended precision. The analytic
// gradient still comes from the 64-bit tape; only f(p±ε) runs through a
// long-double instantiation of the same graph code (mirror parameters must
// hold bit-identical values). This keeps the difference quotient's rounding
// noise well below the 1e-8 comparison floor, which plain double evaluation
// cannot guarantee on near-zero-gradient coordinates.
template <class BuildD, class BuildX>
double grad_check_ext(BuildD&& build_d, const std::vector<Parameter<double>*>& params_d, BuildX&& build_x,
                      const std::vector<Parameter<long double>*>& params_x, double eps = 1e-4) {
  if (params_d.size() != params_x.size()) throw Error(errc::contract, "grad_check_ext: mirror arity mismatch");
  for (size_t pi = 0; pi < params_d.size(); ++pi) {
    if (params_d[pi]->value.shape != params_x[pi]->value.shape)
      throw Error(errc::contract, "grad_check_ext: mirror shape mismatch at " + params_d[pi]->name);
    for (size_t i = 0; i < params_d[pi]->value.data.size(); ++i)
      if (static_cast<double>(params_x[pi]->value.data[i]) != params_d[pi]->value.data[i])
        throw Error(errc::contract, "grad_check_ext: mirror values drifted at " + params_d[pi]->name);
  }
  auto eval_d = [&]() {
    Graph<double> g;
    Value loss = build_d(g);
    return g.value(loss).item();
  };
  auto eval_x = [&]() {
    Graph<long double> g;
    Value loss = build_x(g);
    return g.value(loss).item();
  };

  Graph<double> g0;
  Value loss0 = build_d(g0);
  if (eval_d() != g0.value(loss0).item())
    throw Error(errc::determinism, "function is not deterministic under repeated evaluation");
  g0.backward(loss0);

  double max_rel = 0.0;
  const long double epsx = static_cast<long double>(eps);
  for (size_t pi = 0; pi < params_d.size(); ++pi) {
    const Tensor<double> analytic = g0.grad_of(*params_d[pi]);
    auto& px = params_x[pi]->value;
    for (size_t i = 0; i < px.data.size(); ++i) {
      const long double saved = px.data[i];
      px.data[i] = saved + epsx;
      const long double fp = eval_x();
      px.data[i] = saved - epsx;
      const long double fm = eval_x();
      px.data[i] = saved;
      const double numeric = static_cast<double>((fp - fm) / (2.0L * epsx));
      const double a = analytic.data[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

template <class Real>
double grad_check(const std::function<Value(Graph<Real>&)>& build, const std::vector<Parameter<Real>*>& params,
                  double eps = 1e-4) {
  auto eval = [&]() {
    Graph<Real> g;
    Value loss = build(g);
    return static_cast<double>(g.value(loss).item());
  };

  Graph<Real> g0;
  Value loss0 = build(g0);
  const double f0 = static_cast<double>(g0.value(loss0).item());
  if (eval() != f0) throw Error(errc::determinism, "function is not deterministic under repeated evaluation");
  g0.backward(loss0);

  double max_rel = 0.0;
  for (Parameter<Real>* p : params) {
    const Tensor<Real> analytic = g0.grad_of(*p);
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      const Real saved = p->value.data[i];
      p->value.data[i] = saved + static_cast<Real>(eps);
      const double fp = eval();
      p->value.data[i] = saved - static_cast<Real>(eps);
      const double fm = eval();
      p->value.data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = static_cast<double>(analytic.data[i]);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace ap
