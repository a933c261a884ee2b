// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_RNG_HPP_
#define CDSE_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace cdse {

// splitmix64 stream (Steele et al., the SplittableRandom generator).
// Distributions are written out by hand so that every draw is bit-identical
// across compilers and standard libraries; reproducibility of corpora,
// initializers and batch order rests on this.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // Derive an independent stream, e.g. per record or per epoch.
  static Rng Derive(uint64_t seed, uint64_t stream) {
    Rng mix(seed + 0x9e3779b97f4a7c15ULL * (stream + 1));
    mix.NextU64();
    return mix;
  }

  uint64_t NextU64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [0, n).
  uint64_t Below(uint64_t n) { return n ? NextU64() % n : 0; }

  // Standard normal via Box-Muller (fresh pair per call keeps state linear
  // in the number of draws, which makes stream splitting predictable).
  double Normal() {
    double u1 = Uniform();
    double u2 = Uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // In-place Fisher-Yates shuffle.
  template <typename Vec>
  void Shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(Below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace cdse

#endif  // CDSE_RNG_HPP_
