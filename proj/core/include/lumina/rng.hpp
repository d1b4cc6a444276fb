#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lumina {

/// Deterministic random source. std::mt19937_64 has a standard-pinned output
/// sequence, and all value mappings are done with fixed arithmetic here, so a
/// seed reproduces the same stream on every platform (the std distribution
/// wrappers do not guarantee that).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n). n == 0 is a caller bug; returns 0.
  uint64_t below(uint64_t n) { return n ? gen_() % n : 0; }

  /// Standard normal via the Marsaglia polar method (no trig).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace lumina
