#pragma once

#include <array>
#include <cmath>
#include <ostream>
#include <span>
#include <vector>

#include "dqopt/dual_number.hpp"
#include "dqopt/errors.hpp"
#include "dqopt/eval_context.hpp"
#include "dqopt/quaternion.hpp"
#include "dqopt/tolerances.hpp"

namespace dqopt {

// q + q_d eps with quaternion standard part `real` and dual part `dual`.
template <class T>
struct DualQuat {
  Quat<T> real{};
  Quat<T> dual{};

  DualQuat() = default;
  DualQuat(Quat<T> r, Quat<T> d = Quat<T>{}) : real(std::move(r)), dual(std::move(d)) {}  // NOLINT

  static DualQuat identity() { return DualQuat(Quat<T>::identity()); }

  DualQuat conj() const { return {real.conj(), dual.conj()}; }
  DualQuat operator-() const { return {-real, -dual}; }

  DualQuat& operator+=(const DualQuat& o) {
    real += o.real;
    dual += o.dual;
    return *this;
  }
  DualQuat& operator-=(const DualQuat& o) {
    real -= o.real;
    dual -= o.dual;
    return *this;
  }

  friend DualQuat operator+(DualQuat a, const DualQuat& b) { return a += b; }
  friend DualQuat operator-(DualQuat a, const DualQuat& b) { return a -= b; }
  // pq + (p q_d + p_d q) eps
  friend DualQuat operator*(const DualQuat& p, const DualQuat& q) {
    return {p.real * q.real, p.real * q.dual + p.dual * q.real};
  }
  // A dual number commutes with dual quaternions.
  friend DualQuat operator*(const Dual<T>& a, const DualQuat& q) {
    return {q.real * a.real, q.dual * a.real + q.real * a.dual};
  }
  friend DualQuat operator*(const DualQuat& q, const T& c) { return {q.real * c, q.dual * c}; }
};

using DualQuaternion = DualQuat<double>;
using DualQuaternionVector = std::vector<DualQuaternion>;

inline bool operator==(const DualQuaternion& p, const DualQuaternion& q) {
  return p.real == q.real && p.dual == q.dual;
}

template <class T>
DualQuat<double> value_of(const DualQuat<T>& q) {
  return {value_of(q.real), value_of(q.dual)};
}

double max_abs_diff(const DualQuaternion& p, const DualQuaternion& q);

inline bool is_appreciable(const DualQuaternion& q, double tol_app = kTolAppreciable) {
  return q.real.norm() > tol_app;
}

// |q| + <q, q_d>/|q| eps when q is appreciable, |q_d| eps otherwise.
// (q q_d* + q_d q*)/2 = Re(q q_d*) = <q, q_d>.
template <class T>
Dual<T> magnitude(const DualQuat<T>& q, EvalContext& ctx) {
  using std::sqrt;
  const T s = q.real.norm_squared();
  const double sv = value_of(s);
  const bool appreciable = ctx.branch(sv > ctx.tol_app * ctx.tol_app);
  if (pin_norm(s, std::array{q.real}, ctx)) {
    return {T{}, appreciable && sv > 0.0 ? T(dot(q.real, q.dual) / sqrt(s)) : T{}};
  }
  if (appreciable) {
    using std::sqrt;
    T num = dot(q.real, q.dual);
    T d_part = sv > 0.0 ? num / sqrt(s) : T{};
    T s_part = kinked_norm(s, ctx);
    if (collect_kink(s, std::array{q.real}, false, ctx)) s_part = detach(s_part);
    return {std::move(s_part), std::move(d_part)};
  }
  (void)collect_kink(s, std::array{q.real}, false, ctx);
  const T d_sq = q.dual.norm_squared();
  T d_part = kinked_norm(d_sq, ctx);
  if (collect_kink(d_sq, std::array{q.dual}, true, ctx)) d_part = detach(d_part);
  // A smoothed standard part stays continuous across the branch switch;
  // dropping to exactly 0 would trap descent methods at |q| = tol_app.
  return {ctx.smoothing > 0.0 ? kinked_norm(s, ctx) : T{}, std::move(d_part)};
}

template <class T>
Dual<T> magnitude(const DualQuat<T>& q, double tol_app = kTolAppreciable) {
  EvalContext ctx;
  ctx.tol_app = tol_app;
  return magnitude(q, ctx);
}

// |q_hat|^2 = q_hat* q_hat in eps-arithmetic: |q|^2 + 2<q, q_d> eps. For an
// infinitesimal q_hat this is exactly 0 although |q_hat| = |q_d| eps is not.
template <class T>
Dual<T> squared_magnitude(const DualQuat<T>& q) {
  return {q.real.norm_squared(), 2.0 * dot(q.real, q.dual)};
}

// 2-norm of a dual quaternion vector. If any entry is appreciable the result
// is sqrt(sum |x_i|^2) with the squares taken in eps-arithmetic; if all
// entries are infinitesimal it is sqrt(sum |(x_i)_d|^2) eps.
template <class T>
Dual<T> norm2(std::span<const DualQuat<T>> v, EvalContext& ctx) {
  bool any = false;
  T s_real{}, s_dual{}, d_sq{};
  for (const auto& e : v) {
    const T s = e.real.norm_squared();
    if (ctx.branch(value_of(s) > ctx.tol_app * ctx.tol_app)) {
      any = true;
      s_real += s;
      s_dual += 2.0 * dot(e.real, e.dual);
    }
    d_sq += e.dual.norm_squared();
  }
  if (ctx.norms != nullptr || ctx.pinned != nullptr) {
    T all_sq{};
    std::vector<Quat<T>> parts;
    for (const auto& e : v) {
      all_sq += e.real.norm_squared();
      parts.push_back(e.real);
    }
    if (pin_norm(all_sq, parts, ctx)) return {T{}, T{}};
  } else {
    ++ctx.norm_cursor;
  }
  if (any) {
    using std::sqrt;
    const double sv = value_of(s_real);
    T d_part = sv > 0.0 ? s_dual / (2.0 * sqrt(s_real)) : T{};
    T s_part = kinked_norm(s_real, ctx);
    if (ctx.kinks != nullptr && value_of(s_real) <= ctx.kink_tol * ctx.kink_tol) {
      std::vector<Quat<T>> parts;
      for (const auto& e : v) parts.push_back(e.real);
      if (collect_kink(s_real, parts, false, ctx)) s_part = detach(s_part);
    }
    return {std::move(s_part), std::move(d_part)};
  }
  T d_part = kinked_norm(d_sq, ctx);
  T r_sq{};
  for (const auto& e : v) r_sq += e.real.norm_squared();
  if (ctx.kinks != nullptr) {
    std::vector<Quat<T>> real_parts;
    for (const auto& e : v) real_parts.push_back(e.real);
    (void)collect_kink(r_sq, real_parts, false, ctx);
  }
  if (ctx.kinks != nullptr && value_of(d_sq) <= ctx.kink_tol * ctx.kink_tol) {
    std::vector<Quat<T>> parts;
    for (const auto& e : v) parts.push_back(e.dual);
    if (collect_kink(d_sq, parts, true, ctx)) d_part = detach(d_part);
  }
  return {ctx.smoothing > 0.0 ? kinked_norm(r_sq, ctx) : T{}, std::move(d_part)};
}

template <class T>
Dual<T> norm2(std::span<const DualQuat<T>> v, double tol_app = kTolAppreciable) {
  EvalContext ctx;
  ctx.tol_app = tol_app;
  return norm2(v, ctx);
}

inline DualNumber dqvec_norm2(std::span<const DualQuaternion> v, double tol_app = kTolAppreciable) {
  return norm2(v, tol_app);
}

inline DualNumber dq_magnitude(const DualQuaternion& q, double tol_app = kTolAppreciable) {
  return magnitude(q, tol_app);
}

// x* y = sum_i x_i* y_i
DualQuaternion inner(std::span<const DualQuaternion> x, std::span<const DualQuaternion> y);

// q^-1 - q^-1 q_d q^-1 eps. Throws NotAppreciable.
DualQuaternion inverse(const DualQuaternion& q, double tol_app = kTolAppreciable);

// Sign choice under the double cover: w > 0, or w == 0 and the first nonzero
// imaginary coefficient positive. Both parts flip together.
template <class T>
DualQuat<T> canonicalize_sign(const DualQuat<T>& q) {
  const Quaternion r = value_of(q.real);
  bool flip = false;
  if (r.w != 0.0) {
    flip = r.w < 0.0;
  } else if (r.x != 0.0) {
    flip = r.x < 0.0;
  } else if (r.y != 0.0) {
    flip = r.y < 0.0;
  } else {
    flip = r.z < 0.0;
  }
  return flip ? -q : q;
}

// Logarithm of a unit dual quaternion: (theta/2) axis + (p^b / 2) eps, with
// theta in [0, pi] after sign canonicalization. The input is assumed unit.
template <class T>
DualQuat<T> log_unit(const DualQuat<T>& u) {
  using std::atan2;
  using std::sqrt;
  const DualQuat<T> c = canonicalize_sign(u);
  const Quat<T>& q = c.real;
  const T vn2 = q.x * q.x + q.y * q.y + q.z * q.z;
  T scale;
  if (value_of(vn2) > 1e-24) {
    const T vn = sqrt(vn2);
    scale = atan2(vn, q.w) / vn;
  } else {
    // atan2(|v|, w)/|v| -> 1/w as |v| -> 0
    scale = 1.0 / q.w;
  }
  const Quat<T> pb_half = q.conj() * c.dual;
  return {Quat<T>(T{}, q.x * scale, q.y * scale, q.z * scale),
          Quat<T>(T{}, pb_half.x, pb_half.y, pb_half.z)};
}

// Inverse of log_unit for an imaginary dual quaternion omega + v eps:
// exp(omega) + exp(omega) v eps.
template <class T>
DualQuat<T> exp_imaginary(const DualQuat<T>& xi) {
  const Quat<T> r = exp_imaginary(xi.real.imag_part());
  return {r, r * xi.dual.imag_part()};
}

bool is_imaginary(const DualQuaternion& q, double tol);

std::ostream& operator<<(std::ostream& os, const DualQuaternion& q);

}  // namespace dqopt
