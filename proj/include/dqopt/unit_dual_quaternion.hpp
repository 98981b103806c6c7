#pragma once

#include <utility>

#include "dqopt/dual_quaternion.hpp"

namespace dqopt {

struct UnitDefect {
  double norm_error;   // | |q| - 1 |
  double orthogonality;  // |Re(q q_d* + q_d q*)| = 2 |<q, q_d>|
};

UnitDefect unit_defect(const DualQuaternion& q);

// A validated rigid-body transform q + (eps/2) q p^b.
//
// Construction checks both unit conditions to kTolUnit. Values within
// kUnitNormalizeBand of unit are normalized (q_hat / |q_hat| in
// eps-arithmetic); anything further away throws NonUnitValue.
class UnitDualQuaternion {
 public:
  UnitDualQuaternion() : q_(DualQuaternion::identity()) {}
  explicit UnitDualQuaternion(const DualQuaternion& q);

  static UnitDualQuaternion identity() { return {}; }

  const DualQuaternion& value() const { return q_; }
  const Quaternion& rotation() const { return q_.real; }
  // Body-frame translation p^b = 2 q* q_d (imaginary).
  Quaternion translation() const;

  UnitDualQuaternion conj() const;
  UnitDualQuaternion operator*(const UnitDualQuaternion& o) const;
  UnitDualQuaternion operator-() const;

 private:
  struct Trusted {};
  UnitDualQuaternion(const DualQuaternion& q, Trusted) : q_(q) {}

  DualQuaternion q_;
};

bool is_unit(const DualQuaternion& q, double tol = kTolUnit);

// Normalizes within the band, throws NonUnitValue beyond it.
DualQuaternion normalize_unit(const DualQuaternion& q);

// q + (eps/2) q p^b. Throws NonUnitRotation when |rotation| is off by more than
// the normalization band, NonImaginaryTranslation when Re(translation) != 0.
UnitDualQuaternion udq_from_pose(const Quaternion& rotation, const Quaternion& translation);

// Inverse of udq_from_pose: (q, p^b = 2 q* q_d).
std::pair<Quaternion, Quaternion> udq_to_pose(const UnitDualQuaternion& q);

UnitDualQuaternion udq_canonicalize_sign(const UnitDualQuaternion& q);

// (1/2)(theta x + eps p^b), theta in [0, pi]. theta = 0 yields a zero rotation
// vector and the pure-translation part.
DualQuaternion udq_log(const UnitDualQuaternion& q);

// Inverse of udq_log up to sign canonicalization. Throws NonImaginaryValue
// unless both parts are imaginary within kTolUnit.
UnitDualQuaternion udq_exp(const DualQuaternion& xi);

// Rotation angle in [0, pi] of the rotation part.
double rotation_angle(const Quaternion& q);

}  // namespace dqopt
