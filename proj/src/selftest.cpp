#include "dqopt/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "dqopt/dqfunc.hpp"
#include "dqopt/handeye.hpp"
#include "dqopt/posegraph.hpp"
#include "dqopt/random.hpp"

namespace dqopt {

namespace {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void record(SuiteResult& r, double deviation) {
  ++r.checks;
  r.worst = std::max(r.worst, deviation);
  if (!(deviation <= r.bound)) ++r.failures;
}

double diff(const DualQuaternion& a, const DualQuaternion& b) {
  return std::max(max_abs_diff(a.real, b.real), max_abs_diff(a.dual, b.dual));
}

std::vector<DualQuaternion> random_point(Rng& rng, std::size_t n) {
  std::vector<DualQuaternion> x;
  for (std::size_t i = 0; i < n; ++i) x.push_back(rng.dual_quaternion());
  return x;
}

std::vector<DualFunction> application_objectives(std::uint64_t seed) {
  return {build_axxb(generate_synthetic(HandEyeModel::AXXB, 5, 0.01, 0.01, seed)).objective,
          build_axyb(generate_synthetic(HandEyeModel::AXYB, 6, 0.01, 0.01, seed)).objective,
          build_pgo(generate_cycle_graph(10, 3, 0.01, 0.01, seed).graph).objective};
}

}  // namespace

SuiteResult algebra_suite(std::uint64_t seed, int pairs, double tol) {
  Timer timer;
  SuiteResult r{"algebra", 0, 0, 0.0, tol, 0.0};
  Rng rng(seed);
  for (int k = 0; k < pairs; ++k) {
    const DualQuaternion p = rng.dual_quaternion(), q = rng.dual_quaternion();
    const DualQuaternion pq = p * q;
    record(r, diff(pq.conj(), q.conj() * p.conj()));
    const DualNumber lhs = dq_magnitude(pq), rhs = dq_magnitude(p) * dq_magnitude(q);
    record(r, std::max(std::abs(lhs.real - rhs.real), std::abs(lhs.dual - rhs.dual)));
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult order_suite(std::uint64_t seed, int triples) {
  Timer timer;
  SuiteResult r{"order", 0, 0, 0.0, 0.0, 0.0};
  Rng rng(seed);
  // Coarse values so that ties in the standard part occur often.
  auto draw = [&] { return DualNumber(std::floor(rng.uniform(-3, 3)), std::floor(rng.uniform(-3, 3))); };
  auto check = [&](bool ok) { record(r, ok ? 0.0 : 1.0); };
  for (int k = 0; k < triples; ++k) {
    const DualNumber a = draw(), b = draw(), c = draw();
    check(a <= a);
    check(a <= b || b <= a);
    check(!(a <= b && b <= a) || (a.real == b.real && a.dual == b.dual));
    check(!(a <= b && b <= c) || a <= c);
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult standardness_suite(std::uint64_t seed, int trees, int samples, double tol) {
  Timer timer;
  SuiteResult r{"standardness", 0, 0, 0.0, tol, 0.0};
  for (int t = 0; t < trees; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(t % 3);
    const auto f = random_standard_function(n, 1 + t % 3, seed + 1000 + static_cast<std::uint64_t>(t));
    record(r, check_standardness(f, samples, seed + 2000 + static_cast<std::uint64_t>(t)));
  }
  for (const auto& f : application_objectives(seed)) {
    record(r, check_standardness(f, samples, seed + 3000));
    record(r, check_standardness(f, samples, seed + 3001, SampleDomain::Unit));
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult gradient_suite(std::uint64_t seed, int points, double tol) {
  Timer timer;
  SuiteResult r{"gradient", 0, 0, 0.0, tol, 0.0};
  Rng rng(seed);
  using Map = DualQuaternionMap;
  const auto x = Map::variable(1, 0);
  const DualQuaternion c = rng.dual_quaternion();
  std::vector<DualFunction> toys{
      squared_magnitude(x) - DualFunction::constant(1, {1, 0}),
      magnitude(x - Map::constant(1, c)),
      squared_magnitude(x - Map::constant(1, DualQuaternion(Quaternion(2)))),
      norm2({x, x * x, Map::constant(1, c)}),
  };
  EvalContext plain;
  for (const auto& f : toys) {
    for (int p = 0; p < points; ++p) record(r, gradient_check(f, random_point(rng, 1), 1e-5, plain).max_rel_error);
  }
  EvalContext smoothed;
  smoothed.smoothing = 1e-2;
  for (const auto& f : application_objectives(seed)) {
    for (int p = 0; p < points; ++p) {
      std::vector<DualQuaternion> pt;
      for (std::size_t i = 0; i < f.arity(); ++i) {
        pt.push_back(udq_from_pose(rng.unit_quaternion(), Quaternion::imaginary(rng.normal(), rng.normal(), rng.normal()))
                         .value());
      }
      record(r, gradient_check(f, pt, 1e-5, smoothed).max_rel_error);
    }
  }
  r.seconds = timer.seconds();
  return r;
}

std::vector<SuiteResult> run_selftest(std::uint64_t seed) {
  return {algebra_suite(seed), order_suite(seed), standardness_suite(seed), gradient_suite(seed)};
}

}  // namespace dqopt
