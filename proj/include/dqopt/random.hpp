#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "dqopt/dual_quaternion.hpp"
#include "dqopt/quaternion.hpp"

namespace dqopt {

// splitmix64 finalizer; derives independent child seeds from (seed, stream).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Portable sampling on top of mt19937_64. The standard distributions are not
// specified bit-for-bit across library implementations, so uniforms and
// normals are derived by hand to keep generated files byte-identical.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one draw per call, the partner sample is discarded.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t index(std::uint64_t n) { return engine_() % n; }

  Quaternion quaternion() { return {normal(), normal(), normal(), normal()}; }

  // Uniform (Haar) on S^3.
  Quaternion unit_quaternion() {
    Quaternion q = quaternion();
    double n = q.norm();
    while (n < 1e-6) {
      q = quaternion();
      n = q.norm();
    }
    return q / n;
  }

  // Uniform direction as an imaginary unit quaternion.
  Quaternion unit_axis() {
    Quaternion v = Quaternion::imaginary(normal(), normal(), normal());
    double n = v.norm();
    while (n < 1e-6) {
      v = Quaternion::imaginary(normal(), normal(), normal());
      n = v.norm();
    }
    return v / n;
  }

  DualQuaternion dual_quaternion() { return {quaternion(), quaternion()}; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dqopt
