#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pmlc {

// Deterministic RNG. All randomness in the library flows from one run seed
// through named sub-streams so components can be reproduced in isolation.
// Uniform doubles and shuffles are generated from raw mt19937_64 output
// instead of std::uniform_real_distribution / std::shuffle, which are not
// pinned down by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng substream(std::uint64_t seed, std::string_view name) {
    return Rng(mix(seed ^ fnv1a(name)));
  }

  static Rng substream(std::uint64_t seed, std::string_view name, std::uint64_t index) {
    return Rng(mix(mix(seed ^ fnv1a(name)) + index));
  }

  std::uint64_t next() { return gen_(); }

  // uniform in [0, 1), 53-bit resolution
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // uniform integer in [0, n); n must be positive
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(gen_() % static_cast<std::uint64_t>(n));
  }

  bool bernoulli(double p) { return unit() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

 private:
  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 gen_;
};

}  // namespace pmlc
