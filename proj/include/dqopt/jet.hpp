#pragma once

// Forward-mode automatic differentiation scalar.
//
// A Jet carries a value and its gradient with respect to a fixed set of
// seeded coordinates. An empty gradient marks a constant, so constants mixed
// into an expression cost no vector work. All algebra in dqopt is templated
// on the scalar type; instantiating it with Jet yields exact first
// derivatives of the very same eps-arithmetic code that produces values.

#include <cmath>

#include <Eigen/Core>

namespace dqopt {

class Jet {
 public:
  Jet() = default;
  Jet(double value) : value_(value) {}  // NOLINT(google-explicit-constructor)
  Jet(double value, Eigen::VectorXd grad) : value_(value), grad_(std::move(grad)) {}

  static Jet variable(double value, Eigen::Index index, Eigen::Index dim) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    g[index] = 1.0;
    return {value, std::move(g)};
  }

  double value() const { return value_; }
  const Eigen::VectorXd& grad() const { return grad_; }
  bool is_constant() const { return grad_.size() == 0; }

  // Gradient padded to `dim` entries (constants yield zeros).
  Eigen::VectorXd gradient(Eigen::Index dim) const {
    return is_constant() ? Eigen::VectorXd::Zero(dim) : grad_;
  }

  Jet operator-() const {
    Jet r(-value_);
    if (!is_constant()) r.grad_ = -grad_;
    return r;
  }

  Jet& operator+=(const Jet& o) {
    value_ += o.value_;
    add_scaled(1.0, o.grad_);
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    value_ -= o.value_;
    add_scaled(-1.0, o.grad_);
    return *this;
  }
  Jet& operator*=(const Jet& o) {
    if (&o == this) return *this *= Jet(o);
    if (!is_constant()) grad_ *= o.value_;
    add_scaled(value_, o.grad_);
    value_ *= o.value_;
    return *this;
  }
  Jet& operator/=(const Jet& o) {
    if (&o == this) return *this /= Jet(o);
    value_ /= o.value_;
    if (!is_constant()) grad_ /= o.value_;
    add_scaled(-value_ / o.value_, o.grad_);
    return *this;
  }
  Jet& operator+=(double c) {
    value_ += c;
    return *this;
  }
  Jet& operator-=(double c) {
    value_ -= c;
    return *this;
  }
  Jet& operator*=(double c) {
    value_ *= c;
    if (!is_constant()) grad_ *= c;
    return *this;
  }
  Jet& operator/=(double c) {
    value_ /= c;
    if (!is_constant()) grad_ /= c;
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(Jet a, const Jet& b) { return a *= b; }
  friend Jet operator/(Jet a, const Jet& b) { return a /= b; }
  friend Jet operator+(Jet a, double c) { return a += c; }
  friend Jet operator-(Jet a, double c) { return a -= c; }
  friend Jet operator*(Jet a, double c) { return a *= c; }
  friend Jet operator/(Jet a, double c) { return a /= c; }
  friend Jet operator+(double c, Jet a) { return a += c; }
  friend Jet operator-(double c, const Jet& a) { return -a + c; }
  friend Jet operator*(double c, Jet a) { return a *= c; }
  friend Jet operator/(double c, const Jet& a) { return Jet(c) / a; }

  friend Jet sqrt(const Jet& a) {
    const double s = std::sqrt(a.value_);
    return a.chain(s, 0.5 / s);
  }
  friend Jet sin(const Jet& a) { return a.chain(std::sin(a.value_), std::cos(a.value_)); }
  friend Jet cos(const Jet& a) { return a.chain(std::cos(a.value_), -std::sin(a.value_)); }
  friend Jet atan2(const Jet& y, const Jet& x) {
    const double r2 = x.value_ * x.value_ + y.value_ * y.value_;
    Jet out(std::atan2(y.value_, x.value_));
    if (r2 > 0.0) {
      out.add_scaled(x.value_ / r2, y.grad_);
      out.add_scaled(-y.value_ / r2, x.grad_);
    }
    return out;
  }

  // Value with derivative `slope` times this jet's gradient.
  Jet chain(double value, double slope) const {
    Jet r(value);
    if (!is_constant()) r.grad_ = slope * grad_;
    return r;
  }

  // Same value, gradient dropped.
  Jet detached() const { return Jet(value_); }

 private:
  void add_scaled(double c, const Eigen::VectorXd& g) {
    if (g.size() == 0 || c == 0.0) return;
    if (is_constant()) {
      grad_ = c * g;
    } else {
      grad_.noalias() += c * g;
    }
  }

  double value_ = 0.0;
  Eigen::VectorXd grad_;
};

inline double value_of(double x) { return x; }
inline double value_of(const Jet& x) { return x.value(); }

// Drops derivative information; used where a quantity is piecewise constant
// (branch selection) or where a kink is resolved to its zero subgradient.
inline double detach(double x) { return x; }
inline Jet detach(const Jet& x) { return x.detached(); }

}  // namespace dqopt
