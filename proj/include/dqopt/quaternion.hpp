#pragma once

#include <array>
#include <cmath>
#include <ostream>

#include "dqopt/jet.hpp"

namespace dqopt {

// w + x i + y j + z k
template <class T>
struct Quat {
  T w{}, x{}, y{}, z{};

  Quat() = default;
  Quat(T w_, T x_ = T{}, T y_ = T{}, T z_ = T{})  // NOLINT
      : w(std::move(w_)), x(std::move(x_)), y(std::move(y_)), z(std::move(z_)) {}

  static Quat identity() { return Quat(T(1.0)); }
  static Quat i() { return Quat(T{}, T(1.0)); }
  static Quat j() { return Quat(T{}, T{}, T(1.0)); }
  static Quat k() { return Quat(T{}, T{}, T{}, T(1.0)); }
  static Quat imaginary(T x_, T y_, T z_) { return Quat(T{}, x_, y_, z_); }

  const T& operator[](int idx) const {
    switch (idx) {
      case 0: return w;
      case 1: return x;
      case 2: return y;
      default: return z;
    }
  }
  T& operator[](int idx) {
    return const_cast<T&>(static_cast<const Quat&>(*this)[idx]);
  }

  Quat conj() const { return {w, -x, -y, -z}; }
  T norm_squared() const { return w * w + x * x + y * y + z * z; }
  T norm() const {
    using std::sqrt;
    return sqrt(norm_squared());
  }
  Quat real_part() const { return Quat(w); }
  Quat imag_part() const { return {T{}, x, y, z}; }

  Quat operator-() const { return {-w, -x, -y, -z}; }
  Quat& operator+=(const Quat& o) {
    w += o.w;
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Quat& operator-=(const Quat& o) {
    w -= o.w;
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  Quat& operator*=(const T& c) {
    w *= c;
    x *= c;
    y *= c;
    z *= c;
    return *this;
  }

  friend Quat operator+(Quat a, const Quat& b) { return a += b; }
  friend Quat operator-(Quat a, const Quat& b) { return a -= b; }
  friend Quat operator*(Quat a, const T& c) { return a *= c; }
  friend Quat operator*(const T& c, Quat a) { return a *= c; }
  friend Quat operator/(Quat a, const T& c) {
    T inv = T(1.0) / c;
    return a *= inv;
  }

  // ij = k, jk = i, ki = j
  friend Quat operator*(const Quat& p, const Quat& q) {
    return {p.w * q.w - p.x * q.x - p.y * q.y - p.z * q.z,
            p.w * q.x + p.x * q.w + p.y * q.z - p.z * q.y,
            p.w * q.y - p.x * q.z + p.y * q.w + p.z * q.x,
            p.w * q.z + p.x * q.y - p.y * q.x + p.z * q.w};
  }

  // Requires a nonzero quaternion.
  Quat inverse() const { return conj() / norm_squared(); }
};

// Real 4-dot product <p, q> = Re(p q*).
template <class T>
T dot(const Quat<T>& p, const Quat<T>& q) {
  return p.w * q.w + p.x * q.x + p.y * q.y + p.z * q.z;
}

template <class T>
Quat<double> value_of(const Quat<T>& q) {
  return {value_of(q.w), value_of(q.x), value_of(q.y), value_of(q.z)};
}

template <class T>
Quat<T> detach(const Quat<T>& q) {
  return {detach(q.w), detach(q.x), detach(q.y), detach(q.z)};
}

using Quaternion = Quat<double>;

inline bool operator==(const Quaternion& p, const Quaternion& q) {
  return p.w == q.w && p.x == q.x && p.y == q.y && p.z == q.z;
}

// Largest componentwise absolute difference.
double max_abs_diff(const Quaternion& p, const Quaternion& q);

bool is_unit(const Quaternion& q, double tol);
bool is_imaginary(const Quaternion& q, double tol);

// cos(theta/2) + sin(theta/2) axis. Throws NonUnitAxis unless `axis` is an
// imaginary unit quaternion within kTolUnit.
Quaternion exp_axis_angle(double theta, const Quaternion& axis);

// Exponential of an imaginary quaternion v: cos|v| + sin|v| v/|v|.
template <class T>
Quat<T> exp_imaginary(const Quat<T>& v) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  T n2 = v.x * v.x + v.y * v.y + v.z * v.z;
  double n2v = value_of(n2);
  if (n2v < 1e-16) {
    // Taylor: cos ~ 1 - n^2/2, sin(n)/n ~ 1 - n^2/6
    T c = 1.0 - n2 * 0.5;
    T s = 1.0 - n2 * (1.0 / 6.0);
    return {c, v.x * s, v.y * s, v.z * s};
  }
  T n = sqrt(n2);
  T s = sin(n) / n;
  return {cos(n), v.x * s, v.y * s, v.z * s};
}

std::array<double, 4> to_array(const Quaternion& q);
Quaternion from_array(const std::array<double, 4>& a);

std::ostream& operator<<(std::ostream& os, const Quaternion& q);

}  // namespace dqopt
