#pragma once

// Shared error taxonomy and deterministic RNG used across the library.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ap {

enum class errc {
  shape,        // dimension mismatch between operands
  numeric,      // non-finite value surfaced in a forward pass
  index,        // out-of-range index (ids, targets)
  contract,     // precondition violated (non-scalar loss, bad argument)
  graph_reuse,  // second backward on a consumed graph
  determinism,  // function under grad_check is not deterministic
  empty_input,  // empty text / batch / corpus / test set
  parse,        // malformed file content
  schema,       // record is missing a required field
  capacity,     // sequence or request exceeds a configured limit
  config,       // inconsistent configuration
  pattern,      // prompt pattern has zero or multiple [MASK]
  vocab,        // token not in vocabulary where it must be
  label,        // label not covered by the verbalizer
  io,           // file system failure
  version,      // unsupported checkpoint format version
  integrity,    // checkpoint digest or size mismatch
  usage,        // bad command line
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::shape: return "shape";
    case errc::numeric: return "numeric";
    case errc::index: return "index";
    case errc::contract: return "contract";
    case errc::graph_reuse: return "graph_reuse";
    case errc::determinism: return "determinism";
    case errc::empty_input: return "empty_input";
    case errc::parse: return "parse";
    case errc::schema: return "schema";
    case errc::capacity: return "capacity";
    case errc::config: return "config";
    case errc::pattern: return "pattern";
    case errc::vocab: return "vocab";
    case errc::label: return "label";
    case errc::io: return "io";
    case errc::version: return "version";
    case errc::integrity: return "integrity";
    case errc::usage: return "usage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}

// xoshiro256** with all distribution code written out, so streams are
// reproducible independent of the standard library in use.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t x = seed;
    for (auto& w : s_) w = x = splitmix64(x);
  }

  uint64_t u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Unbiased draw in [0, bound) by rejection.
  uint64_t below(uint64_t bound) {
    if (bound == 0) throw Error(errc::contract, "Rng::below(0)");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t r;
    do {
      r = u64();
    } while (r >= limit);
    return r % bound;
  }

  // Uniform in [0,1) with 53 random bits.
  double real01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return real01() < p; }

  // Box-Muller; one value per call (the sibling is discarded to keep the
  // stream position easy to reason about).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = real01();
    double u2 = real01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    return mean + stddev * r * std::cos(theta);
  }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    if (v.empty()) throw Error(errc::contract, "Rng::pick on empty vector");
    return v[static_cast<size_t>(below(v.size()))];
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

}  // namespace ap
