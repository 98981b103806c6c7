#pragma once

// Dual-number-valued functions of dual quaternion vectors.
//
// A function is an immutable expression tree. Every node evaluates for two
// scalar types: double (values) and Jet (values plus exact first
// derivatives), so f and f_d and their gradients come out of the same
// eps-arithmetic code. Dual-quaternion-valued nodes form DualQuaternionMap;
// dual-number-valued nodes form DualFunction.
//
// Real coordinates: variable i owns coordinates 8i..8i+3 (standard part,
// w x y z) and 8i+4..8i+7 (dual part).

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dqopt/dual_quaternion.hpp"
#include "dqopt/eval_context.hpp"
#include "dqopt/jet.hpp"

namespace dqopt {

using QuaternionVector = std::vector<Quaternion>;

namespace detail {

struct MapNode {
  virtual ~MapNode() = default;
  virtual DualQuat<double> eval(std::span<const DualQuat<double>> x, EvalContext& ctx) const = 0;
  virtual DualQuat<Jet> eval(std::span<const DualQuat<Jet>> x, EvalContext& ctx) const = 0;
  bool standard = true;
};

struct FnNode {
  virtual ~FnNode() = default;
  virtual Dual<double> eval(std::span<const DualQuat<double>> x, EvalContext& ctx) const = 0;
  virtual Dual<Jet> eval(std::span<const DualQuat<Jet>> x, EvalContext& ctx) const = 0;
  bool standard = true;
};

}  // namespace detail

// Dual-quaternion-valued map of n dual quaternion variables.
class DualQuaternionMap {
 public:
  DualQuaternionMap(std::size_t arity, std::shared_ptr<const detail::MapNode> node)
      : arity_(arity), node_(std::move(node)) {}

  static DualQuaternionMap variable(std::size_t arity, std::size_t index);
  static DualQuaternionMap constant(std::size_t arity, const DualQuaternion& value);

  std::size_t arity() const { return arity_; }
  bool declared_standard() const { return node_->standard; }
  const std::shared_ptr<const detail::MapNode>& node() const { return node_; }

  DualQuaternion operator()(std::span<const DualQuaternion> x, EvalContext ctx = {}) const;

  DualQuaternionMap conj() const;

 private:
  std::size_t arity_;
  std::shared_ptr<const detail::MapNode> node_;
};

DualQuaternionMap operator+(const DualQuaternionMap& a, const DualQuaternionMap& b);
DualQuaternionMap operator-(const DualQuaternionMap& a, const DualQuaternionMap& b);
DualQuaternionMap operator*(const DualQuaternionMap& a, const DualQuaternionMap& b);

// x_hat^m by repeated eps-product, m >= 1.
DualQuaternionMap power(const DualQuaternionMap& a, int m);
// Single-variable x_hat -> x_hat^m.
DualQuaternionMap make_power(int m);

// Logarithm / exponential of unit-valued maps. unit_log validates every value
// it sees (NonUnitValue beyond the normalization band); unit_exp expects an
// imaginary-valued argument (NonImaginaryValue otherwise).
DualQuaternionMap unit_log(const DualQuaternionMap& a);
DualQuaternionMap unit_exp(const DualQuaternionMap& a);

// a(g_1(x), ..., g_k(x)) with k = a.arity().
DualQuaternionMap compose(const DualQuaternionMap& a, const std::vector<DualQuaternionMap>& inner);

enum class CombineOp { Sum, Product, Min, Max };

class DualFunction {
 public:
  DualFunction(std::size_t arity, std::shared_ptr<const detail::FnNode> node)
      : arity_(arity), node_(std::move(node)) {}

  static DualFunction constant(std::size_t arity, const DualNumber& value);

  std::size_t arity() const { return arity_; }
  bool declared_standard() const { return node_->standard; }
  const std::shared_ptr<const detail::FnNode>& node() const { return node_; }

  DualNumber operator()(std::span<const DualQuaternion> x, EvalContext ctx = {}) const;

 private:
  std::size_t arity_;
  std::shared_ptr<const detail::FnNode> node_;
};

DualFunction magnitude(const DualQuaternionMap& a);
// |a|^2 in eps-arithmetic (no branch: |q|^2 + 2<q, q_d> eps).
DualFunction squared_magnitude(const DualQuaternionMap& a);
DualFunction norm2(const std::vector<DualQuaternionMap>& entries);
// Dual number (q[c], q_d[c]) for coefficient c in 0..3 (w x y z).
DualFunction component(const DualQuaternionMap& a, int c);

// Throws ArityMismatch when arities differ. Min/max select by dn_compare.
DualFunction combine(const DualFunction& f, const DualFunction& g, CombineOp op);
DualFunction operator+(const DualFunction& f, const DualFunction& g);
DualFunction operator-(const DualFunction& f, const DualFunction& g);
DualFunction operator*(const DualFunction& f, const DualFunction& g);
DualFunction power(const DualFunction& f, int m);
DualFunction compose(const DualFunction& f, const std::vector<DualQuaternionMap>& inner);

// Arbitrary function supplied as a generic callable
//   Dual<T> fn(std::span<const DualQuat<T>> x, EvalContext& ctx)
// instantiated for T = double and T = Jet. Standardness is the caller's claim.
template <class Fn>
DualFunction from_generic(std::size_t arity, Fn fn, bool declared_standard);

// ---- evaluation -----------------------------------------------------------

// Packs (x, x_d) into dual quaternions.
std::vector<DualQuaternion> pack(const QuaternionVector& x, const QuaternionVector& x_d);
DualNumber evaluate(const DualFunction& f, const QuaternionVector& x, const QuaternionVector& x_d,
                    EvalContext ctx = {});

// Flat real coordinates (8 per variable) <-> dual quaternions.
Eigen::VectorXd to_coordinates(std::span<const DualQuaternion> x);
std::vector<DualQuaternion> from_coordinates(const Eigen::VectorXd& z);

struct DualGradient {
  DualNumber value;
  Eigen::VectorXd grad_std;   // d f / d z, length 8n
  Eigen::VectorXd grad_dual;  // d f_d / d z, length 8n
};

// Forward-mode gradient at x. When `active` is nonempty only those coordinate
// indices are seeded; other entries of the result are zero.
DualGradient gradient(const DualFunction& f, std::span<const DualQuaternion> x, EvalContext ctx = {},
                      std::span<const int> active = {});

// ---- property checks ------------------------------------------------------

enum class SampleDomain {
  Free,  // x, x_d standard normal
  Unit,  // x uniform on S^3, x_d orthogonal to x (unit dual quaternions)
};

// Largest |std F(x, x_d) - std F(x, x_d')| over random samples.
double check_standardness(const DualFunction& f, int samples, std::uint64_t seed,
                          SampleDomain domain = SampleDomain::Free);

struct GradientReport {
  Eigen::VectorXd analytic_std, analytic_dual;
  Eigen::VectorXd numeric_std, numeric_dual;
  double max_rel_error = 0.0;
};

// Central differences with step h on all 8n coordinates, compared with the
// forward-mode gradient; relative error denominator max(1, |analytic|).
GradientReport gradient_check(const DualFunction& f, std::span<const DualQuaternion> x, double h = 1e-5,
                              EvalContext ctx = {});

// Random standard function tree built from magnitude, 2-norm, power, sum,
// product, min and max over affine leaves in the variables.
DualFunction random_standard_function(std::size_t arity, int depth, std::uint64_t seed);

// ---- implementation of from_generic ---------------------------------------

namespace detail {

template <class Fn>
struct GenericFn final : FnNode {
  explicit GenericFn(Fn f, bool std_flag) : fn(std::move(f)) { standard = std_flag; }
  Dual<double> eval(std::span<const DualQuat<double>> x, EvalContext& ctx) const override { return fn(x, ctx); }
  Dual<Jet> eval(std::span<const DualQuat<Jet>> x, EvalContext& ctx) const override { return fn(x, ctx); }
  Fn fn;
};

}  // namespace detail

template <class Fn>
DualFunction from_generic(std::size_t arity, Fn fn, bool declared_standard) {
  return {arity, std::make_shared<detail::GenericFn<Fn>>(std::move(fn), declared_standard)};
}

}  // namespace dqopt
