#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

#include "omniloco/common.hpp"

namespace omniloco {

// splitmix64 step; used to derive child stream seeds so that spawning is
// independent of how many values the parent has drawn.
inline std::uint64_t splitmix64(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic RNG built on std::mt19937_64 (output sequence is fixed by the
// standard).  All distribution transforms are hand-rolled: libstdc++'s
// distribution objects are not portable across implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1): top 53 bits of the raw draw.
  Real uniform() {
    return static_cast<Real>(next_u64() >> 11) * 0x1.0p-53;
  }

  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  int uniform_int(int lo, int hi) {
    OL_REQUIRE(hi >= lo, "uniform_int: empty range");
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Box-Muller.  Both draws happen every call and the
  // second value is discarded: no hidden cache, so the draw count per call
  // is constant.
  Real normal() {
    Real u1 = uniform();
    const Real u2 = uniform();
    if (u1 <= 0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  Real normal(Real mean, Real stddev) { return mean + stddev * normal(); }

  // Index sampled from unnormalised weights by walking the CDF.
  std::size_t categorical(std::span<const Real> weights) {
    return categorical_from_u(weights, uniform());
  }

  // Deterministic kernel behind categorical(); exposed so tests can drive it
  // with explicit u values.
  static std::size_t categorical_from_u(std::span<const Real> weights, Real u) {
    OL_REQUIRE(!weights.empty(), "categorical: no weights");
    Real total = 0;
    for (Real w : weights) {
      OL_REQUIRE(w >= 0, "categorical: negative weight");
      total += w;
    }
    OL_REQUIRE(total > 0, "categorical: zero total weight");
    const Real target = u * total;
    Real acc = 0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (target < acc) return i;
    }
    return weights.size() - 1;
  }

  // Child stream derived from the construction seed and a stream id only.
  Rng spawn(std::uint64_t stream) const {
    std::uint64_t s = seed_ ^ (0xa0761d6478bd642fULL * (stream + 1));
    return Rng(splitmix64(s));
  }

  std::uint64_t seed() const { return seed_; }

  // Engine state as text (format fixed by the standard's stream operators).
  std::string save_state() const;
  void load_state(const std::string& text);

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace omniloco
