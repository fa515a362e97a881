#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace kmte {

// stateless splitmix64 output function (bijective mixer)
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4ecda9d39db2bULL;
  return z ^ (z >> 31);
}

// substream seed from a master seed and up to three indices; every Monte
// Carlo replication / bootstrap replicate derives its own stream from this,
// so results do not depend on worker count or execution order
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t i0,
                                 std::uint64_t i1 = 0, std::uint64_t i2 = 0) {
  std::uint64_t s = mix64(master);
  s = mix64(s ^ i0);
  s = mix64(s ^ i1);
  s = mix64(s ^ i2);
  return s;
}

// mt19937_64 wrapped with hand-rolled transforms; std::*_distribution is
// implementation-defined, these keep streams identical across toolchains
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // in [0, 1), 53 random bits
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // in (0, 1], safe for log
  double uniform01_open0() { return 1.0 - uniform01(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01_open0();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double exponential() { return -std::log(uniform01_open0()); }

  bool bernoulli(double p) { return uniform01() < p; }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace kmte
