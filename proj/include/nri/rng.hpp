#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nri {

// splitmix64, used to derive independent stream seeds from (master, coords).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seed for a named substream, e.g. derive_seed(master, sim_index) or
// derive_seed(master, epoch, batch). Streams are order-independent, which
// keeps parallel dataset generation and train-resume deterministic.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(master ^ splitmix64(a));
  s = splitmix64(s ^ splitmix64(b + 0x51a2b3c4d5e6f708ull));
  return splitmix64(s ^ splitmix64(c + 0x0123456789abcdefull));
}

// mt19937_64 with hand-rolled distributions. The std:: distributions are
// implementation-defined, which would break bit-identical reproducibility
// across toolchains; these are fully specified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (no cached second value: draw order
  // stays a pure function of call count).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Index in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // modulo bias is < 2^-53 for the n used here (shuffles, categorical)
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

  // Categorical draw from explicit probabilities (need not be normalized
  // beyond rounding; the last bucket absorbs the remainder).
  int categorical(const double* probs, int k) {
    double u = uniform();
    for (int i = 0; i < k - 1; ++i) {
      u -= probs[i];
      if (u < 0.0) return i;
    }
    return k - 1;
  }

  // Gumbel(0,1) noise, with the uniform clamped away from {0,1}.
  double gumbel() {
    double u = uniform();
    if (u < 1e-10) u = 1e-10;
    if (u > 1.0 - 1e-10) u = 1.0 - 1e-10;
    return -std::log(-std::log(u));
  }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace nri
