#include <algorithm>
#include <cmath>
#include <iomanip>

#include "dqopt/dual_number.hpp"
#include "dqopt/dual_quaternion.hpp"
#include "dqopt/quaternion.hpp"
#include "dqopt/unit_dual_quaternion.hpp"

namespace dqopt {

// ---- dual numbers ----------------------------------------------------------

std::strong_ordering compare(const DualNumber& p, const DualNumber& q) {
  if (p.real < q.real) return std::strong_ordering::less;
  if (p.real > q.real) return std::strong_ordering::greater;
  if (p.dual < q.dual) return std::strong_ordering::less;
  if (p.dual > q.dual) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

const DualNumber& dn_min(const DualNumber& p, const DualNumber& q) {
  return compare(q, p) < 0 ? q : p;
}

const DualNumber& dn_max(const DualNumber& p, const DualNumber& q) {
  return compare(q, p) > 0 ? q : p;
}

bool approx_equal(const DualNumber& p, const DualNumber& q, double tol) {
  return std::abs(p.real - q.real) <= tol && std::abs(p.dual - q.dual) <= tol;
}

DualNumber sqrt(const DualNumber& d, double tol) {
  if (d.real < -tol) throw Error(Errc::NegativeStandardPart, "sqrt of dual number with negative standard part");
  if (d.real <= tol) {
    if (d.dual != 0.0) throw Error(Errc::InfinitesimalSqrt, "no dual number squares to b*eps with b != 0");
    return {0.0, 0.0};
  }
  const double s = std::sqrt(d.real);
  return {s, d.dual / (2.0 * s)};
}

std::ostream& operator<<(std::ostream& os, const DualNumber& d) {
  return os << d.real << (d.dual < 0 ? " - " : " + ") << std::abs(d.dual) << "eps";
}

// ---- quaternions ----------------------------------------------------------

double max_abs_diff(const Quaternion& p, const Quaternion& q) {
  return std::max({std::abs(p.w - q.w), std::abs(p.x - q.x), std::abs(p.y - q.y), std::abs(p.z - q.z)});
}

bool is_unit(const Quaternion& q, double tol) { return std::abs(q.norm() - 1.0) <= tol; }

bool is_imaginary(const Quaternion& q, double tol) { return std::abs(q.w) <= tol; }

Quaternion exp_axis_angle(double theta, const Quaternion& axis) {
  if (!is_imaginary(axis, kTolUnit) || !is_unit(axis, kTolUnit)) {
    throw Error(Errc::NonUnitAxis, "rotation axis must be an imaginary unit quaternion");
  }
  const double c = std::cos(theta / 2.0);
  const double s = std::sin(theta / 2.0);
  return {c, s * axis.x, s * axis.y, s * axis.z};
}

std::array<double, 4> to_array(const Quaternion& q) { return {q.w, q.x, q.y, q.z}; }

Quaternion from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }

std::ostream& operator<<(std::ostream& os, const Quaternion& q) {
  return os << "[" << q.w << ", " << q.x << ", " << q.y << ", " << q.z << "]";
}

// ---- dual quaternions -----------------------------------------------------

double max_abs_diff(const DualQuaternion& p, const DualQuaternion& q) {
  return std::max(max_abs_diff(p.real, q.real), max_abs_diff(p.dual, q.dual));
}

DualQuaternion inner(std::span<const DualQuaternion> x, std::span<const DualQuaternion> y) {
  if (x.size() != y.size()) throw Error(Errc::ArityMismatch, "inner product of vectors of different length");
  DualQuaternion acc;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i].conj() * y[i];
  return acc;
}

DualQuaternion inverse(const DualQuaternion& q, double tol_app) {
  if (!is_appreciable(q, tol_app)) throw Error(Errc::NotAppreciable, "only appreciable dual quaternions are invertible");
  const Quaternion inv = q.real.inverse();
  return {inv, -(inv * q.dual * inv)};
}

bool is_imaginary(const DualQuaternion& q, double tol) {
  return is_imaginary(q.real, tol) && is_imaginary(q.dual, tol);
}

std::ostream& operator<<(std::ostream& os, const DualQuaternion& q) {
  return os << "{std: " << q.real << ", dual: " << q.dual << "}";
}

// ---- unit dual quaternions ------------------------------------------------

UnitDefect unit_defect(const DualQuaternion& q) {
  return {std::abs(q.real.norm() - 1.0), 2.0 * std::abs(dot(q.real, q.dual))};
}

bool is_unit(const DualQuaternion& q, double tol) {
  const auto d = unit_defect(q);
  return d.norm_error <= tol && d.orthogonality <= tol;
}

DualQuaternion normalize_unit(const DualQuaternion& q) {
  const auto d = unit_defect(q);
  if (d.norm_error <= kTolUnit && d.orthogonality <= kTolUnit) return q;
  if (d.norm_error > kUnitNormalizeBand || d.orthogonality > kUnitNormalizeBand) {
    throw Error(Errc::NonUnitValue, "dual quaternion is not unit (norm error " + std::to_string(d.norm_error) +
                                        ", orthogonality " + std::to_string(d.orthogonality) + ")");
  }
  // q_hat * |q_hat|^-1 with |q_hat| = n + (<q,q_d>/n) eps
  const double n = q.real.norm();
  const double c = dot(q.real, q.dual);
  return {q.real / n, q.dual / n - q.real * (c / (n * n * n))};
}

UnitDualQuaternion::UnitDualQuaternion(const DualQuaternion& q) : q_(normalize_unit(q)) {}

Quaternion UnitDualQuaternion::translation() const {
  Quaternion p = 2.0 * (q_.real.conj() * q_.dual);
  p.w = 0.0;
  return p;
}

UnitDualQuaternion UnitDualQuaternion::conj() const { return {q_.conj(), Trusted{}}; }

UnitDualQuaternion UnitDualQuaternion::operator-() const { return {-q_, Trusted{}}; }

UnitDualQuaternion UnitDualQuaternion::operator*(const UnitDualQuaternion& o) const {
  return UnitDualQuaternion(q_ * o.q_);
}

UnitDualQuaternion udq_from_pose(const Quaternion& rotation, const Quaternion& translation) {
  const double n = rotation.norm();
  if (std::abs(n - 1.0) > kUnitNormalizeBand) {
    throw Error(Errc::NonUnitRotation, "rotation quaternion is not unit (|q| = " + std::to_string(n) + ")");
  }
  if (!is_imaginary(translation, kTolUnit)) {
    throw Error(Errc::NonImaginaryTranslation, "translation must be an imaginary quaternion");
  }
  const Quaternion q = std::abs(n - 1.0) <= kTolUnit ? rotation : rotation / n;
  return UnitDualQuaternion(DualQuaternion(q, 0.5 * (q * translation.imag_part())));
}

std::pair<Quaternion, Quaternion> udq_to_pose(const UnitDualQuaternion& q) {
  return {q.rotation(), q.translation()};
}

UnitDualQuaternion udq_canonicalize_sign(const UnitDualQuaternion& q) {
  const DualQuaternion c = canonicalize_sign(q.value());
  return c == q.value() ? q : -q;
}

DualQuaternion udq_log(const UnitDualQuaternion& q) { return log_unit(q.value()); }

UnitDualQuaternion udq_exp(const DualQuaternion& xi) {
  if (!is_imaginary(xi, kTolUnit)) throw Error(Errc::NonImaginaryValue, "exp expects an imaginary dual quaternion");
  return UnitDualQuaternion(exp_imaginary(xi));
}

double rotation_angle(const Quaternion& q) {
  const double vn = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
  return 2.0 * std::atan2(vn, std::abs(q.w));
}

}  // namespace dqopt
