#include "dqopt/dqfunc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dqopt/kernels.hpp"
#include "dqopt/random.hpp"
#include "dqopt/unit_dual_quaternion.hpp"

namespace dqopt {

namespace detail {
namespace {

template <class T>
Quat<T> lift(const Quaternion& q) {
  return {T(q.w), T(q.x), T(q.y), T(q.z)};
}

template <class T>
DualQuat<T> lift(const DualQuaternion& q) {
  return {lift<T>(q.real), lift<T>(q.dual)};
}

template <class T>
DualNumber value_of_dual(const Dual<T>& d) {
  return {value_of(d.real), value_of(d.dual)};
}

// Dispatches both scalar instantiations to D::run<T>.
template <class D>
struct MapImpl : MapNode {
  DualQuat<double> eval(std::span<const DualQuat<double>> x, EvalContext& ctx) const override {
    return static_cast<const D*>(this)->run(x, ctx);
  }
  DualQuat<Jet> eval(std::span<const DualQuat<Jet>> x, EvalContext& ctx) const override {
    return static_cast<const D*>(this)->run(x, ctx);
  }
};

template <class D>
struct FnImpl : FnNode {
  Dual<double> eval(std::span<const DualQuat<double>> x, EvalContext& ctx) const override {
    return static_cast<const D*>(this)->run(x, ctx);
  }
  Dual<Jet> eval(std::span<const DualQuat<Jet>> x, EvalContext& ctx) const override {
    return static_cast<const D*>(this)->run(x, ctx);
  }
};

using MapPtr = std::shared_ptr<const MapNode>;
using FnPtr = std::shared_ptr<const FnNode>;

struct VarNode final : MapImpl<VarNode> {
  explicit VarNode(std::size_t i) : index(i) {}
  template <class T>
  DualQuat<T> run(std::span<const DualQuat<T>> x, EvalContext&) const {
    return x[index];
  }
  std::size_t index;
};

struct ConstNode final : MapImpl<ConstNode> {
  explicit ConstNode(const DualQuaternion& v) : value(v) {}
  template <class T>
  DualQuat<T> run(std::span<const DualQuat<T>>, EvalContext&) const {
    return lift<T>(value);
  }
  DualQuaternion value;
};

struct AddNode final : MapImpl<AddNode> {
  AddNode(MapPtr a_, MapPtr b_, bool sub) : a(std::move(a_)), b(std::move(b_)), subtract(sub) {
    standard = a->standard && b->standard;
  }
  template <class T>
  DualQuat<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    DualQuat<T> l = a->eval(x, ctx);
    DualQuat<T> r = b->eval(x, ctx);
    return subtract ? l - r : l + r;
  }
  MapPtr a, b;
  bool subtract;
};

struct MulNode final : MapImpl<MulNode> {
  MulNode(MapPtr a_, MapPtr b_) : a(std::move(a_)), b(std::move(b_)) { standard = a->standard && b->standard; }
  template <class T>
  DualQuat<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    DualQuat<T> l = a->eval(x, ctx);
    DualQuat<T> r = b->eval(x, ctx);
    return l * r;
  }
  MapPtr a, b;
};

struct ConjNode final : MapImpl<ConjNode> {
  explicit ConjNode(MapPtr a_) : a(std::move(a_)) { standard = a->standard; }
  template <class T>
  DualQuat<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    return a->eval(x, ctx).conj();
  }
  MapPtr a;
};

struct PowNode final : MapImpl<PowNode> {
  PowNode(MapPtr a_, int m_) : a(std::move(a_)), m(m_) { standard = a->standard; }
  template <class T>
  DualQuat<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    const DualQuat<T> base = a->eval(x, ctx);
    DualQuat<T> acc = base;
    for (int k = 1; k < m; ++k) acc = acc * base;
    return acc;
  }
  MapPtr a;
  int m;
};

struct LogNode final : MapImpl<LogNode> {
  explicit LogNode(MapPtr a_) : a(std::move(a_)) { standard = a->standard; }
  template <class T>
  DualQuat<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    const DualQuat<T> v = a->eval(x, ctx);
    (void)normalize_unit(value_of(v));  // validation only
    return log_unit(v);
  }
  MapPtr a;
};

struct ExpNode final : MapImpl<ExpNode> {
  explicit ExpNode(MapPtr a_) : a(std::move(a_)) { standard = a->standard; }
  template <class T>
  DualQuat<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    const DualQuat<T> v = a->eval(x, ctx);
    if (!is_imaginary(value_of(v), kTolUnit)) {
      throw Error(Errc::NonImaginaryValue, "exp expects an imaginary dual quaternion");
    }
    return exp_imaginary(v);
  }
  MapPtr a;
};

template <class T>
std::vector<DualQuat<T>> eval_all(const std::vector<MapPtr>& maps, std::span<const DualQuat<T>> x,
                                  EvalContext& ctx) {
  std::vector<DualQuat<T>> out;
  out.reserve(maps.size());
  for (const auto& g : maps) out.push_back(g->eval(x, ctx));
  return out;
}

bool all_standard(const std::vector<MapPtr>& maps) {
  return std::all_of(maps.begin(), maps.end(), [](const MapPtr& g) { return g->standard; });
}

struct ComposeMapNode final : MapImpl<ComposeMapNode> {
  ComposeMapNode(MapPtr a_, std::vector<MapPtr> in) : a(std::move(a_)), inner(std::move(in)) {
    standard = a->standard && all_standard(inner);
  }
  template <class T>
  DualQuat<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    const auto y = eval_all(inner, x, ctx);
    return a->eval(std::span<const DualQuat<T>>(y), ctx);
  }
  MapPtr a;
  std::vector<MapPtr> inner;
};

struct ConstFn final : FnImpl<ConstFn> {
  explicit ConstFn(const DualNumber& v) : value(v) {}
  template <class T>
  Dual<T> run(std::span<const DualQuat<T>>, EvalContext&) const {
    return {T(value.real), T(value.dual)};
  }
  DualNumber value;
};

struct MagFn final : FnImpl<MagFn> {
  explicit MagFn(MapPtr a_) : a(std::move(a_)) { standard = a->standard; }
  template <class T>
  Dual<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    return magnitude(a->eval(x, ctx), ctx);
  }
  MapPtr a;
};

struct SqMagFn final : FnImpl<SqMagFn> {
  explicit SqMagFn(MapPtr a_) : a(std::move(a_)) { standard = a->standard; }
  template <class T>
  Dual<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    return squared_magnitude(a->eval(x, ctx));
  }
  MapPtr a;
};

struct Norm2Fn final : FnImpl<Norm2Fn> {
  explicit Norm2Fn(std::vector<MapPtr> e) : entries(std::move(e)) { standard = all_standard(entries); }
  template <class T>
  Dual<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    const auto v = eval_all(entries, x, ctx);
    return norm2(std::span<const DualQuat<T>>(v), ctx);
  }
  std::vector<MapPtr> entries;
};

struct ComponentFn final : FnImpl<ComponentFn> {
  ComponentFn(MapPtr a_, int c_) : a(std::move(a_)), c(c_) { standard = a->standard; }
  template <class T>
  Dual<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    const DualQuat<T> v = a->eval(x, ctx);
    return {v.real[c], v.dual[c]};
  }
  MapPtr a;
  int c;
};

enum class BinOp { Sum, Difference, Product, Min, Max };

struct BinFn final : FnImpl<BinFn> {
  BinFn(FnPtr a_, FnPtr b_, BinOp o) : a(std::move(a_)), b(std::move(b_)), op(o) {
    standard = a->standard && b->standard;
  }
  template <class T>
  Dual<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    Dual<T> l = a->eval(x, ctx);
    Dual<T> r = b->eval(x, ctx);
    switch (op) {
      case BinOp::Sum: return l + r;
      case BinOp::Difference: return l - r;
      case BinOp::Product: return l * r;
      case BinOp::Min: return ctx.branch(compare(value_of_dual(l), value_of_dual(r)) <= 0) ? l : r;
      case BinOp::Max: return ctx.branch(compare(value_of_dual(l), value_of_dual(r)) >= 0) ? l : r;
    }
    return l;
  }
  FnPtr a, b;
  BinOp op;
};

struct PowFn final : FnImpl<PowFn> {
  PowFn(FnPtr a_, int m_) : a(std::move(a_)), m(m_) { standard = a->standard; }
  template <class T>
  Dual<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    const Dual<T> base = a->eval(x, ctx);
    Dual<T> acc = base;
    for (int k = 1; k < m; ++k) acc = acc * base;
    return acc;
  }
  FnPtr a;
  int m;
};

struct ComposeFn final : FnImpl<ComposeFn> {
  ComposeFn(FnPtr f_, std::vector<MapPtr> in) : f(std::move(f_)), inner(std::move(in)) {
    standard = f->standard && all_standard(inner);
  }
  template <class T>
  Dual<T> run(std::span<const DualQuat<T>> x, EvalContext& ctx) const {
    const auto y = eval_all(inner, x, ctx);
    return f->eval(std::span<const DualQuat<T>>(y), ctx);
  }
  FnPtr f;
  std::vector<MapPtr> inner;
};

}  // namespace
}  // namespace detail


namespace {

using detail::FnPtr;
using detail::MapPtr;

void require_same_arity(std::size_t a, std::size_t b) {
  if (a != b) throw Error(Errc::ArityMismatch, "arity " + std::to_string(a) + " vs " + std::to_string(b));
}

void require_arity(std::size_t got, std::size_t arity) {
  if (got != arity) {
    throw Error(Errc::ArityMismatch,
                "expected " + std::to_string(arity) + " variables, got " + std::to_string(got));
  }
}

std::vector<MapPtr> nodes_of(const std::vector<DualQuaternionMap>& maps, std::size_t arity) {
  std::vector<MapPtr> out;
  out.reserve(maps.size());
  for (const auto& m : maps) {
    require_same_arity(m.arity(), arity);
    out.push_back(m.node());
  }
  return out;
}

template <class T>
T& coordinate(std::vector<DualQuat<T>>& x, int c) {
  DualQuat<T>& q = x[static_cast<std::size_t>(c / 8)];
  const int r = c % 8;
  return (r < 4 ? q.real : q.dual)[r % 4];
}

}  // namespace

// ---- maps -----------------------------------------------------------------

DualQuaternionMap DualQuaternionMap::variable(std::size_t arity, std::size_t index) {
  if (index >= arity) throw Error(Errc::InvalidArgument, "variable index out of range");
  return {arity, std::make_shared<detail::VarNode>(index)};
}

DualQuaternionMap DualQuaternionMap::constant(std::size_t arity, const DualQuaternion& value) {
  return {arity, std::make_shared<detail::ConstNode>(value)};
}

DualQuaternion DualQuaternionMap::operator()(std::span<const DualQuaternion> x, EvalContext ctx) const {
  require_arity(x.size(), arity_);
  return node_->eval(x, ctx);
}

DualQuaternionMap DualQuaternionMap::conj() const { return {arity_, std::make_shared<detail::ConjNode>(node_)}; }

DualQuaternionMap operator+(const DualQuaternionMap& a, const DualQuaternionMap& b) {
  require_same_arity(a.arity(), b.arity());
  return {a.arity(), std::make_shared<detail::AddNode>(a.node(), b.node(), false)};
}

DualQuaternionMap operator-(const DualQuaternionMap& a, const DualQuaternionMap& b) {
  require_same_arity(a.arity(), b.arity());
  return {a.arity(), std::make_shared<detail::AddNode>(a.node(), b.node(), true)};
}

DualQuaternionMap operator*(const DualQuaternionMap& a, const DualQuaternionMap& b) {
  require_same_arity(a.arity(), b.arity());
  return {a.arity(), std::make_shared<detail::MulNode>(a.node(), b.node())};
}

DualQuaternionMap power(const DualQuaternionMap& a, int m) {
  if (m < 1) throw Error(Errc::InvalidArgument, "power exponent must be >= 1");
  return {a.arity(), std::make_shared<detail::PowNode>(a.node(), m)};
}

DualQuaternionMap make_power(int m) { return power(DualQuaternionMap::variable(1, 0), m); }

DualQuaternionMap unit_log(const DualQuaternionMap& a) {
  return {a.arity(), std::make_shared<detail::LogNode>(a.node())};
}

DualQuaternionMap unit_exp(const DualQuaternionMap& a) {
  return {a.arity(), std::make_shared<detail::ExpNode>(a.node())};
}

DualQuaternionMap compose(const DualQuaternionMap& a, const std::vector<DualQuaternionMap>& inner) {
  if (inner.empty()) throw Error(Errc::InvalidArgument, "composition needs at least one inner map");
  require_same_arity(inner.size(), a.arity());
  const std::size_t arity = inner.front().arity();
  return {arity, std::make_shared<detail::ComposeMapNode>(a.node(), nodes_of(inner, arity))};
}

// ---- functions ------------------------------------------------------------

DualFunction DualFunction::constant(std::size_t arity, const DualNumber& value) {
  return {arity, std::make_shared<detail::ConstFn>(value)};
}

DualNumber DualFunction::operator()(std::span<const DualQuaternion> x, EvalContext ctx) const {
  require_arity(x.size(), arity_);
  return node_->eval(x, ctx);
}

DualFunction magnitude(const DualQuaternionMap& a) {
  return {a.arity(), std::make_shared<detail::MagFn>(a.node())};
}

DualFunction squared_magnitude(const DualQuaternionMap& a) {
  return {a.arity(), std::make_shared<detail::SqMagFn>(a.node())};
}

DualFunction norm2(const std::vector<DualQuaternionMap>& entries) {
  if (entries.empty()) throw Error(Errc::InvalidArgument, "2-norm of an empty vector");
  const std::size_t arity = entries.front().arity();
  return {arity, std::make_shared<detail::Norm2Fn>(nodes_of(entries, arity))};
}

DualFunction component(const DualQuaternionMap& a, int c) {
  if (c < 0 || c > 3) throw Error(Errc::InvalidArgument, "component index must be in 0..3");
  return {a.arity(), std::make_shared<detail::ComponentFn>(a.node(), c)};
}

namespace {

DualFunction binary(const DualFunction& f, const DualFunction& g, detail::BinOp op) {
  require_same_arity(f.arity(), g.arity());
  return {f.arity(), std::make_shared<detail::BinFn>(f.node(), g.node(), op)};
}

}  // namespace

DualFunction combine(const DualFunction& f, const DualFunction& g, CombineOp op) {
  switch (op) {
    case CombineOp::Sum: return binary(f, g, detail::BinOp::Sum);
    case CombineOp::Product: return binary(f, g, detail::BinOp::Product);
    case CombineOp::Min: return binary(f, g, detail::BinOp::Min);
    case CombineOp::Max: return binary(f, g, detail::BinOp::Max);
  }
  throw Error(Errc::InvalidArgument, "unknown combine op");
}

DualFunction operator+(const DualFunction& f, const DualFunction& g) { return binary(f, g, detail::BinOp::Sum); }
DualFunction operator-(const DualFunction& f, const DualFunction& g) {
  return binary(f, g, detail::BinOp::Difference);
}
DualFunction operator*(const DualFunction& f, const DualFunction& g) {
  return binary(f, g, detail::BinOp::Product);
}

DualFunction power(const DualFunction& f, int m) {
  if (m < 1) throw Error(Errc::InvalidArgument, "power exponent must be >= 1");
  return {f.arity(), std::make_shared<detail::PowFn>(f.node(), m)};
}

DualFunction compose(const DualFunction& f, const std::vector<DualQuaternionMap>& inner) {
  if (inner.empty()) throw Error(Errc::InvalidArgument, "composition needs at least one inner map");
  require_same_arity(inner.size(), f.arity());
  const std::size_t arity = inner.front().arity();
  return {arity, std::make_shared<detail::ComposeFn>(f.node(), nodes_of(inner, arity))};
}

// ---- evaluation -----------------------------------------------------------

std::vector<DualQuaternion> pack(const QuaternionVector& x, const QuaternionVector& x_d) {
  require_same_arity(x.size(), x_d.size());
  std::vector<DualQuaternion> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = {x[i], x_d[i]};
  return out;
}

DualNumber evaluate(const DualFunction& f, const QuaternionVector& x, const QuaternionVector& x_d, EvalContext ctx) {
  return f(pack(x, x_d), ctx);
}

Eigen::VectorXd to_coordinates(std::span<const DualQuaternion> x) {
  Eigen::VectorXd z(8 * static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int c = 0; c < 4; ++c) {
      z[8 * i + c] = x[i].real[c];
      z[8 * i + 4 + c] = x[i].dual[c];
    }
  }
  return z;
}

std::vector<DualQuaternion> from_coordinates(const Eigen::VectorXd& z) {
  std::vector<DualQuaternion> x(static_cast<std::size_t>(z.size() / 8));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int c = 0; c < 4; ++c) {
      x[i].real[c] = z[8 * i + c];
      x[i].dual[c] = z[8 * i + 4 + c];
    }
  }
  return x;
}

DualGradient gradient(const DualFunction& f, std::span<const DualQuaternion> x, EvalContext ctx,
                      std::span<const int> active) {
  require_arity(x.size(), f.arity());
  const int n8 = 8 * static_cast<int>(x.size());
  std::vector<int> all;
  if (active.empty()) {
    all.resize(static_cast<std::size_t>(n8));
    for (int c = 0; c < n8; ++c) all[static_cast<std::size_t>(c)] = c;
    active = all;
  }
  const auto dim = static_cast<Eigen::Index>(active.size());

  std::vector<DualQuat<Jet>> xj(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xj[i] = detail::lift<Jet>(x[i]);
  for (Eigen::Index k = 0; k < dim; ++k) {
    Jet& slot = coordinate(xj, active[static_cast<std::size_t>(k)]);
    slot = Jet::variable(slot.value(), k, dim);
  }

  const Dual<Jet> v = f.node()->eval(std::span<const DualQuat<Jet>>(xj), ctx);
  DualGradient out;
  out.value = {v.real.value(), v.dual.value()};
  out.grad_std = Eigen::VectorXd::Zero(n8);
  out.grad_dual = Eigen::VectorXd::Zero(n8);
  const Eigen::VectorXd gs = v.real.gradient(dim);
  const Eigen::VectorXd gd = v.dual.gradient(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    out.grad_std[active[static_cast<std::size_t>(k)]] = gs[k];
    out.grad_dual[active[static_cast<std::size_t>(k)]] = gd[k];
  }
  return out;
}

// ---- property checks ------------------------------------------------------

double check_standardness(const DualFunction& f, int samples, std::uint64_t seed, SampleDomain domain) {
  if (samples < 1) throw Error(Errc::InvalidArgument, "samples must be >= 1");
  Rng rng(seed);
  const std::size_t n = f.arity();
  auto dual_part = [&](const Quaternion& x) {
    if (domain == SampleDomain::Unit) {
      return 0.5 * (x * Quaternion::imaginary(rng.normal(), rng.normal(), rng.normal()));
    }
    return rng.quaternion();
  };

  std::vector<std::vector<DualQuaternion>> points;
  points.reserve(2 * static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    std::vector<DualQuaternion> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Quaternion x = domain == SampleDomain::Unit ? rng.unit_quaternion() : rng.quaternion();
      a[i] = {x, dual_part(x)};
      b[i] = {x, dual_part(x)};
    }
    points.push_back(std::move(a));
    points.push_back(std::move(b));
  }

  const auto values = evaluate_batch(f, points, Exec::Parallel);
  double worst = 0.0;
  for (std::size_t s = 0; s < values.size(); s += 2) {
    worst = std::max(worst, std::abs(values[s].real - values[s + 1].real));
  }
  return worst;
}

GradientReport gradient_check(const DualFunction& f, std::span<const DualQuaternion> x, double h, EvalContext ctx) {
  if (!(h > 0.0)) throw Error(Errc::InvalidArgument, "finite-difference step must be positive");
  const DualGradient g = gradient(f, x, ctx);
  GradientReport r;
  r.analytic_std = g.grad_std;
  r.analytic_dual = g.grad_dual;
  const Eigen::Index n8 = g.grad_std.size();
  r.numeric_std.resize(n8);
  r.numeric_dual.resize(n8);

  std::vector<DualQuaternion> probe(x.begin(), x.end());
  for (Eigen::Index c = 0; c < n8; ++c) {
    double& slot = coordinate(probe, static_cast<int>(c));
    const double orig = slot;
    slot = orig + h;
    const DualNumber up = f(probe, ctx);
    slot = orig - h;
    const DualNumber down = f(probe, ctx);
    slot = orig;
    r.numeric_std[c] = (up.real - down.real) / (2.0 * h);
    r.numeric_dual[c] = (up.dual - down.dual) / (2.0 * h);
    const double es = std::abs(r.numeric_std[c] - r.analytic_std[c]) / std::max(1.0, std::abs(r.analytic_std[c]));
    const double ed =
        std::abs(r.numeric_dual[c] - r.analytic_dual[c]) / std::max(1.0, std::abs(r.analytic_dual[c]));
    r.max_rel_error = std::max({r.max_rel_error, es, ed});
  }
  return r;
}

namespace {

struct TreeBuilder {
  std::size_t arity;
  Rng rng;

  DualQuaternion constant() { return {0.7 * rng.quaternion(), 0.7 * rng.quaternion()}; }

  DualQuaternionMap leaf() {
    const auto v = DualQuaternionMap::variable(arity, rng.index(arity));
    const auto a = DualQuaternionMap::constant(arity, constant());
    const auto b = DualQuaternionMap::constant(arity, constant());
    switch (rng.index(3)) {
      case 0: return a * v + b;
      case 1: return v * a - b;
      default: return v.conj() * a;
    }
  }

  DualQuaternionMap map(int depth) {
    if (depth <= 0) return leaf();
    switch (rng.index(4)) {
      case 0: return map(depth - 1) * map(depth - 1);
      case 1: return power(map(depth - 1), 2 + static_cast<int>(rng.index(2)));
      case 2: return map(depth - 1) + leaf();
      default: return leaf();
    }
  }

  DualFunction scalar(int depth) {
    if (depth <= 0) {
      switch (rng.index(4)) {
        case 0: return magnitude(map(1));
        case 1: return norm2({map(1), map(0)});
        case 2: return squared_magnitude(map(0));
        default: return component(map(1), static_cast<int>(rng.index(4)));
      }
    }
    switch (rng.index(6)) {
      case 0: return combine(scalar(depth - 1), scalar(depth - 1), CombineOp::Sum);
      case 1: return combine(scalar(depth - 1), scalar(depth - 1), CombineOp::Product);
      case 2: return combine(scalar(depth - 1), scalar(depth - 1), CombineOp::Min);
      case 3: return combine(scalar(depth - 1), scalar(depth - 1), CombineOp::Max);
      case 4: return power(scalar(depth - 1), 2);
      default: return magnitude(map(depth));
    }
  }
};

}  // namespace

DualFunction random_standard_function(std::size_t arity, int depth, std::uint64_t seed) {
  if (arity == 0) throw Error(Errc::InvalidArgument, "arity must be >= 1");
  TreeBuilder b{arity, Rng(seed)};
  return b.scalar(depth);
}

}  // namespace dqopt
