#pragma once

#include <cmath>
#include <compare>
#include <ostream>

#include "dqopt/errors.hpp"
#include "dqopt/jet.hpp"
#include "dqopt/tolerances.hpp"

namespace dqopt {

// a + b*eps with eps^2 = 0. `real` is the standard part, `dual` the
// infinitesimal part.
template <class T>
struct Dual {
  T real{};
  T dual{};

  Dual() = default;
  Dual(T r, T d = T{}) : real(std::move(r)), dual(std::move(d)) {}  // NOLINT

  Dual operator-() const { return {-real, -dual}; }

  Dual& operator+=(const Dual& o) {
    real += o.real;
    dual += o.dual;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    real -= o.real;
    dual -= o.dual;
    return *this;
  }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(const Dual& a, const Dual& b) {
    return {a.real * b.real, a.real * b.dual + a.dual * b.real};
  }
  // Requires an appreciable divisor; the caller checks.
  friend Dual operator/(const Dual& a, const Dual& b) {
    T inv = T(1.0) / b.real;
    T q = a.real * inv;
    return {q, (a.dual - q * b.dual) * inv};
  }
  friend Dual operator*(const Dual& a, double c) { return {a.real * c, a.dual * c}; }
  friend Dual operator*(double c, const Dual& a) { return a * c; }
};

using DualNumber = Dual<double>;

// Lexicographic total order: standard parts first, dual parts break ties.
// Equality is exact floating comparison so the relation stays a genuine
// order; use approx_equal in tests.
std::strong_ordering compare(const DualNumber& p, const DualNumber& q);

inline std::strong_ordering operator<=>(const DualNumber& p, const DualNumber& q) {
  return compare(p, q);
}
inline bool operator==(const DualNumber& p, const DualNumber& q) {
  return p.real == q.real && p.dual == q.dual;
}

const DualNumber& dn_min(const DualNumber& p, const DualNumber& q);
const DualNumber& dn_max(const DualNumber& p, const DualNumber& q);

bool approx_equal(const DualNumber& p, const DualNumber& q, double tol);

// Square root by the eps-Taylor rule: sqrt(a + b eps) = sqrt(a) + b/(2 sqrt(a)) eps.
// Throws NegativeStandardPart for a < -tol, InfinitesimalSqrt when a is
// within tol of zero but b != 0 (nothing squares to b eps). Exact zero maps to 0.
DualNumber sqrt(const DualNumber& d, double tol = kTolAppreciable);

std::ostream& operator<<(std::ostream& os, const DualNumber& d);

// Generic dual-number sqrt used inside templated evaluation: the standard part
// must be positive.
template <class T>
Dual<T> sqrt_positive(const Dual<T>& d) {
  using std::sqrt;
  T s = sqrt(d.real);
  return {s, d.dual / (2.0 * s)};
}

}  // namespace dqopt
