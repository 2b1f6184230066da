#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace tcav {

// splitmix64 step. Small state, passes BigCrush, and unlike the standard
// <random> distributions its output is identical across standard libraries,
// which keeps every seeded artifact byte-reproducible.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derive a child seed from (seed, tag). Used for per-sample and per-run
// seeds: run r of a 500-run suite gets derive_seed(master, r).
inline uint64_t derive_seed(uint64_t seed, uint64_t tag) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ull + tag * 0xc2b2ae3d27d4eb4full);
  splitmix64(s);
  return splitmix64(s);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // burn one step so seed 0 and seed from derive_seed behave alike
    splitmix64(state_);
  }

  uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1) with 53 significant bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // standard normal via Box-Muller (no cached spare, two uniforms per draw)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    using std::swap;
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_u64() % i;
      swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), order randomized (partial Fisher-Yates)
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(next_u64() % static_cast<uint64_t>(n - i));
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
  }

 private:
  uint64_t state_;
};

}  // namespace tcav
