#pragma once

// Dense row-major tensor. Real is float in training mode and double in
// verification mode; every downstream component is templated on it.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ap/common.hpp"

namespace ap {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw Error(errc::shape, "negative dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <class Real>
struct Tensor {
  Shape shape;
  std::vector<Real> data;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), Real(0)) {}
  Tensor(Shape s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
      throw Error(errc::shape, "data length " + std::to_string(data.size()) + " != numel of " + shape_str(shape));
  }

  static Tensor scalar(Real v) { return Tensor({1}, {v}); }
  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, Real v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const {
    if (ndim() == 1) return shape[0];
    if (ndim() == 2) return shape[1];
    throw Error(errc::shape, "cols() on tensor of rank " + std::to_string(ndim()));
  }

  Real& at(int i) { return data[static_cast<size_t>(i)]; }
  Real at(int i) const { return data[static_cast<size_t>(i)]; }
  Real& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  Real item() const {
    if (numel() != 1) throw Error(errc::contract, "item() on tensor with numel " + std::to_string(numel()));
    return data[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

template <class Real>
bool bit_equal(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape != b.shape) return false;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (!(a.data[i] == b.data[i]) || std::signbit(a.data[i]) != std::signbit(b.data[i])) return false;
  return true;
}

namespace detail {

template <class Real>
Tensor<Real> normal_init(Rng& rng, Shape shape, double stddev) {
  Tensor<Real> t(std::move(shape));
  for (auto& x : t.data) x = static_cast<Real>(rng.normal(0.0, stddev));
  return t;
}

}  // namespace detail

// A named, persistently owned weight tensor. Graphs bind to parameters by
// address, so parameters must stay put while a graph refers to them.
template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<Real> v) : name(std::move(n)), value(std::move(v)) {}
};

}  // namespace ap
