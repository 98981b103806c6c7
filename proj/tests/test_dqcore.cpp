#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "dqopt/dual_number.hpp"
#include "dqopt/dual_quaternion.hpp"
#include "dqopt/random.hpp"
#include "dqopt/unit_dual_quaternion.hpp"

using namespace dqopt;

namespace {

const double kS = std::sqrt(2.0) / 2.0;

void check_close(const Quaternion& a, const Quaternion& b, double tol) {
  CHECK_MESSAGE(max_abs_diff(a, b) <= tol, a, " vs ", b);
}

void check_close(const DualQuaternion& a, const DualQuaternion& b, double tol) {
  CHECK_MESSAGE(max_abs_diff(a, b) <= tol, a, " vs ", b);
}

void check_close(const DualNumber& a, const DualNumber& b, double tol) {
  CHECK_MESSAGE(approx_equal(a, b, tol), a, " vs ", b);
}

// Oracle: the 8x8 left-multiplication matrix of p_hat acting on (q, q_d),
// built only from the quaternion multiplication table.
DualQuaternion product_by_table(const DualQuaternion& p, const DualQuaternion& q) {
  auto mul = [](const Quaternion& a, const Quaternion& b) {
    // table[r][c] = (sign, index) for e_r * e_c with e = (1, i, j, k)
    static const int idx[4][4] = {{0, 1, 2, 3}, {1, 0, 3, 2}, {2, 3, 0, 1}, {3, 2, 1, 0}};
    static const double sgn[4][4] = {{1, 1, 1, 1}, {1, -1, 1, -1}, {1, -1, -1, 1}, {1, 1, -1, -1}};
    double out[4] = {0, 0, 0, 0};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) out[idx[r][c]] += sgn[r][c] * a[r] * b[c];
    return Quaternion(out[0], out[1], out[2], out[3]);
  };
  return {mul(p.real, q.real), mul(p.real, q.dual) + mul(p.dual, q.real)};
}

UnitDualQuaternion random_unit(Rng& rng) {
  return udq_from_pose(rng.unit_quaternion(), Quaternion::imaginary(rng.normal(), rng.normal(), rng.normal()));
}

}  // namespace

TEST_CASE("dual number order examples") {
  CHECK(compare({1, 2}, {1, 3}) == std::strong_ordering::less);
  CHECK(compare({0, 5}, {1, -100}) == std::strong_ordering::less);
  CHECK(compare({2, 0}, {2, 0}) == std::strong_ordering::equal);
  CHECK(dn_min({1, 5}, {1, 3}) == DualNumber(1, 3));
  CHECK(dn_max({1, 5}, {1, 3}) == DualNumber(1, 5));
}

TEST_CASE("dual number order axioms on random triples") {
  Rng rng(11);
  // Coarse values so that ties in the standard part actually occur.
  auto draw = [&] { return DualNumber(std::floor(rng.uniform(-3, 3)), std::floor(rng.uniform(-3, 3))); };
  for (int t = 0; t < 1000; ++t) {
    const DualNumber a = draw(), b = draw(), c = draw();
    CHECK((a <= b || b <= a));
    if (a <= b && b <= a) CHECK(a == b);
    if (a <= b && b <= c) CHECK(a <= c);
    CHECK(dn_min(a, b) <= a);
    CHECK(dn_min(a, b) <= b);
    CHECK(a <= dn_max(a, b));
  }
}

TEST_CASE("dual number sqrt") {
  // oracle: (2 + eps)^2 = 4 + 4 eps
  const DualNumber two_eps(2, 1);
  check_close(two_eps * two_eps, {4, 4}, 0);
  check_close(dqopt::sqrt(DualNumber(4, 4)), {2, 1}, 1e-15);
  check_close(dqopt::sqrt(DualNumber(1, 0)), {1, 0}, 0);
  CHECK(dqopt::sqrt(DualNumber(0, 0)) == DualNumber(0, 0));

  try {
    (void)dqopt::sqrt(DualNumber(-1, 0));
    FAIL("expected NegativeStandardPart");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NegativeStandardPart);
  }
  try {
    (void)dqopt::sqrt(DualNumber(0, 1));
    FAIL("expected InfinitesimalSqrt");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InfinitesimalSqrt);
  }

  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const DualNumber d(rng.uniform(0.01, 100), rng.uniform(-100, 100));
    const DualNumber s = dqopt::sqrt(d);
    const DualNumber sq = s * s;
    CHECK(std::abs(sq.real - d.real) <= 1e-12 * std::max(1.0, std::abs(d.real)));
    CHECK(std::abs(sq.dual - d.dual) <= 1e-12 * std::max(1.0, std::abs(d.dual)));
  }
}

TEST_CASE("quaternion product table") {
  check_close(Quaternion::i() * Quaternion::j(), Quaternion::k(), 0);
  check_close(Quaternion::j() * Quaternion::i(), -Quaternion::k(), 0);
  check_close(Quaternion(1, 1, 0, 0) * Quaternion(1, 0, 1, 0), Quaternion(1, 1, 1, 1), 0);
  const Quaternion q(0.3, -1.2, 2.0, 0.5);
  check_close(q * Quaternion::identity(), q, 0);

  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const Quaternion p = rng.quaternion(), r = rng.quaternion();
    CHECK(std::abs((p * r).norm() - p.norm() * r.norm()) <= 1e-12 * (1 + p.norm() * r.norm()));
    check_close((p * r).conj(), r.conj() * p.conj(), 1e-12);
    check_close(p * p.inverse(), Quaternion::identity(), 1e-12);
  }
}

TEST_CASE("axis-angle exponential") {
  check_close(exp_axis_angle(std::numbers::pi, Quaternion::k()), Quaternion::k(), 1e-15);
  check_close(exp_axis_angle(0, Quaternion::i()), Quaternion::identity(), 0);
  check_close(exp_axis_angle(std::numbers::pi / 2, Quaternion::k()), Quaternion(kS, 0, 0, kS), 1e-15);
  CHECK_THROWS_AS(exp_axis_angle(1.0, Quaternion(0, 2, 0, 0)), Error);
  try {
    (void)exp_axis_angle(1.0, Quaternion(1, 0, 0, 0));
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonUnitAxis);
  }
}

TEST_CASE("dual quaternion product matches the multiplication-table oracle") {
  Rng rng(17);
  for (int t = 0; t < 1000; ++t) {
    const DualQuaternion p = rng.dual_quaternion(), q = rng.dual_quaternion();
    check_close(p * q, product_by_table(p, q), 1e-12);
    check_close((p * q).conj(), q.conj() * p.conj(), 1e-12);
  }
}

TEST_CASE("dual quaternion magnitude examples") {
  check_close(dq_magnitude(DualQuaternion(Quaternion(2), Quaternion::i())), {2, 0}, 0);
  check_close(dq_magnitude(DualQuaternion(Quaternion(1, 1, 0, 0), Quaternion(1))), {std::sqrt(2.0), 1 / std::sqrt(2.0)},
              1e-15);
  check_close(dq_magnitude(DualQuaternion(Quaternion(), Quaternion(0, 3, 0, 4))), {0, 5}, 1e-15);
}

TEST_CASE("magnitude is multiplicative for appreciable inputs") {
  Rng rng(19);
  for (int t = 0; t < 1000; ++t) {
    const DualQuaternion p = rng.dual_quaternion(), q = rng.dual_quaternion();
    const DualNumber lhs = dq_magnitude(p * q);
    const DualNumber rhs = dq_magnitude(p) * dq_magnitude(q);
    CHECK(std::abs(lhs.real - rhs.real) <= 1e-10 * std::max(1.0, std::abs(rhs.real)));
    CHECK(std::abs(lhs.dual - rhs.dual) <= 1e-10 * std::max(1.0, std::abs(rhs.dual)));
  }
}

TEST_CASE("squared magnitude of an infinitesimal is zero while its magnitude is not") {
  const DualQuaternion q(Quaternion(), Quaternion(0, 1, -2, 2));
  const DualNumber m = dq_magnitude(q);
  CHECK(m == DualNumber(0, 3));
  CHECK(m * m == DualNumber(0, 0));
  CHECK(squared_magnitude(q) == DualNumber(0, 0));
  CHECK(compare(m, DualNumber(0, 0)) == std::strong_ordering::greater);
}

TEST_CASE("dual quaternion inverse") {
  check_close(inverse(DualQuaternion(Quaternion(1), Quaternion::i())),
              DualQuaternion(Quaternion(1), -Quaternion::i()), 0);
  check_close(inverse(DualQuaternion(Quaternion(2))), DualQuaternion(Quaternion(0.5)), 0);
  try {
    (void)inverse(DualQuaternion(Quaternion(), Quaternion(1)));
    FAIL("expected NotAppreciable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotAppreciable);
  }
  Rng rng(23);
  for (int t = 0; t < 100; ++t) {
    const DualQuaternion q = rng.dual_quaternion();
    check_close(q * inverse(q), DualQuaternion::identity(), 1e-10);
    check_close(inverse(q) * q, DualQuaternion::identity(), 1e-10);
    const UnitDualQuaternion u = random_unit(rng);
    check_close(inverse(u.value()), u.value().conj(), 1e-12);
  }
}

TEST_CASE("unit dual quaternion from pose") {
  check_close(udq_from_pose(Quaternion(1), Quaternion(0, 2, 0, 0)).value(),
              DualQuaternion(Quaternion(1), Quaternion::i()), 0);
  check_close(udq_from_pose(Quaternion::k(), Quaternion()).value(), DualQuaternion(Quaternion::k()), 0);
  check_close(udq_from_pose(Quaternion(kS, kS, 0, 0), Quaternion::j()).value(),
              DualQuaternion(Quaternion(kS, kS, 0, 0), Quaternion(0, 0, kS / 2, kS / 2)), 1e-15);

  try {
    (void)udq_from_pose(Quaternion(2), Quaternion());
    FAIL("expected NonUnitRotation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonUnitRotation);
  }
  try {
    (void)udq_from_pose(Quaternion(1), Quaternion(1, 0, 0, 0));
    FAIL("expected NonImaginaryTranslation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonImaginaryTranslation);
  }
  // Within the normalization band the rotation is renormalized.
  const auto near = udq_from_pose(Quaternion(1 + 5e-7), Quaternion());
  CHECK(is_unit(near.value()));
  CHECK_THROWS_AS(UnitDualQuaternion(DualQuaternion(Quaternion(1), Quaternion(0.1))), Error);

  Rng rng(29);
  for (int t = 0; t < 500; ++t) {
    const Quaternion r = rng.unit_quaternion();
    const Quaternion p = Quaternion::imaginary(rng.normal(), rng.normal(), rng.normal());
    const auto u = udq_from_pose(r, p);
    CHECK(is_unit(u.value()));
    const auto [r2, p2] = udq_to_pose(u);
    check_close(r2, r, 1e-12);
    check_close(p2, p, 1e-12);
  }
}

TEST_CASE("unit closure") {
  Rng rng(31);
  for (int t = 0; t < 500; ++t) {
    const DualQuaternion prod = random_unit(rng).value() * random_unit(rng).value();
    CHECK(is_unit(prod, kTolUnit));
  }
}

TEST_CASE("unit dual quaternion log and exp") {
  check_close(udq_log(UnitDualQuaternion(DualQuaternion(Quaternion(1), Quaternion::i()))),
              DualQuaternion(Quaternion(), Quaternion::i()), 1e-15);
  check_close(udq_log(UnitDualQuaternion::identity()), DualQuaternion(), 0);
  check_close(udq_log(UnitDualQuaternion(DualQuaternion(Quaternion(kS, 0, 0, kS)))),
              DualQuaternion(Quaternion(0, 0, 0, std::numbers::pi / 4)), 1e-15);
  // theta = pi: axis taken from the imaginary part
  check_close(udq_log(UnitDualQuaternion(DualQuaternion(Quaternion::k()))),
              DualQuaternion(Quaternion(0, 0, 0, std::numbers::pi / 2)), 1e-15);

  CHECK_THROWS_AS(udq_exp(DualQuaternion(Quaternion(1))), Error);

  Rng rng(37);
  for (int t = 0; t < 1000; ++t) {
    const double theta = rng.uniform(1e-3, std::numbers::pi - 1e-3);
    const Quaternion r = exp_axis_angle(theta, rng.unit_axis());
    const Quaternion sign = rng.uniform() < 0.5 ? Quaternion(1) : Quaternion(-1);
    const auto u = udq_from_pose(sign * r, Quaternion::imaginary(rng.normal(), rng.normal(), rng.normal()));
    const DualQuaternion xi = udq_log(u);
    CHECK(is_imaginary(xi, 1e-15));
    // the rotation vector has length theta/2
    CHECK(std::abs(xi.real.norm() - theta / 2) <= 1e-10);
    check_close(udq_exp(xi).value(), udq_canonicalize_sign(u).value(), 1e-10);
  }
}

TEST_CASE("sign canonicalization") {
  check_close(udq_canonicalize_sign(-UnitDualQuaternion::identity()).value(), DualQuaternion::identity(), 0);
  const UnitDualQuaternion k(DualQuaternion(Quaternion::k()));
  check_close(udq_canonicalize_sign(k).value(), k.value(), 0);
  const UnitDualQuaternion m(DualQuaternion(-Quaternion::k(), Quaternion::i()));
  const auto c = udq_canonicalize_sign(m);
  check_close(c.value(), DualQuaternion(Quaternion::k(), -Quaternion::i()), 0);
  // Same rigid transform: rotation agrees up to sign, translation exactly.
  const auto [r1, p1] = udq_to_pose(m);
  const auto [r2, p2] = udq_to_pose(c);
  check_close(r1, -r2, 0);
  check_close(p1, p2, 1e-15);
  check_close(udq_canonicalize_sign(c).value(), c.value(), 0);
}

TEST_CASE("vector 2-norm") {
  const std::vector<DualQuaternion> inf{{Quaternion(), Quaternion::i()}, {Quaternion(), Quaternion(0, 0, 0, 3)}};
  check_close(dqvec_norm2(inf), {0, std::sqrt(10.0)}, 1e-15);
  const std::vector<DualQuaternion> mixed{DualQuaternion(Quaternion(1)), {Quaternion(), Quaternion(1)}};
  check_close(dqvec_norm2(mixed), {1, 0}, 0);
  const std::vector<DualQuaternion> zero(2);
  CHECK(dqvec_norm2(zero) == DualNumber(0, 0));

  // Term-by-term oracle: sqrt of the eps-sum of squared magnitudes.
  Rng rng(41);
  for (int t = 0; t < 100; ++t) {
    std::vector<DualQuaternion> v;
    for (int i = 0; i < 4; ++i) v.push_back(rng.dual_quaternion());
    DualNumber acc;
    for (const auto& e : v) acc += dq_magnitude(e) * dq_magnitude(e);
    check_close(dqvec_norm2(v), dqopt::sqrt(acc), 1e-12);
  }
}

TEST_CASE("inner product") {
  const std::vector<DualQuaternion> x{DualQuaternion(Quaternion(1, 2, 0, 0), Quaternion::j())};
  const DualQuaternion xx = inner(x, x);
  check_close(xx.real, Quaternion(5), 1e-15);
  CHECK(std::abs(xx.dual.w - 2 * dot(x[0].real, x[0].dual)) <= 1e-15);
  const std::vector<DualQuaternion> two(2);
  CHECK_THROWS_AS(inner(x, two), Error);
}
