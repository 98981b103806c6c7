#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "dqopt/errors.hpp"
#include "dqopt/posegraph.hpp"
#include "dqopt/random.hpp"

using namespace dqopt;

namespace {

std::vector<DualQuaternion> values_of(const std::vector<Pose>& poses) {
  std::vector<DualQuaternion> out;
  for (const auto& p : poses) out.push_back(p.udq().value());
  return out;
}

double max_diff(const DualQuaternion& a, const DualQuaternion& b) {
  return std::max(max_abs_diff(a.real, b.real), max_abs_diff(a.dual, b.dual));
}

Errc code_of(const std::string& text) {
  try {
    parse_graph(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error");
  return Errc::Io;
}

SolverConfig one_restart() {
  SolverConfig cfg;
  cfg.restarts = 1;
  return cfg;
}

}  // namespace

TEST_CASE("edge_error examples") {
  const DualQuaternion one = DualQuaternion::identity();
  const DualQuaternion k(Quaternion::k());
  CHECK(max_diff(edge_error(one, one, one), DualQuaternion()) == 0.0);
  CHECK(max_diff(edge_error(one, k, k), DualQuaternion()) == 0.0);
  CHECK(max_diff(edge_error(one, one, k), DualQuaternion(Quaternion(-1, 0, 0, 1))) == 0.0);
}

TEST_CASE("parse records") {
  PoseGraph g = parse_graph("VERTEX 1 1 0 0 0 0 0 0\n");
  REQUIRE(g.n == 1);
  REQUIRE(g.guesses[0]);
  CHECK(max_diff(g.guesses[0]->udq().value(), DualQuaternion::identity()) == 0.0);

  g = parse_graph("# one edge\nEDGE 1 2 1 0 0 0 1 0 0  # trailing comment\n\n");
  REQUIRE(g.edges.size() == 1);
  CHECK(g.n == 2);
  const DualQuaternion expected(Quaternion(1), Quaternion(0, 0.5, 0, 0));
  CHECK(max_diff(g.edges[0].udq().value(), expected) <= 1e-16);
}

TEST_CASE("parse errors carry the line number") {
  try {
    parse_graph("VERTEX 1 1 0 0 0 0 0 0\n# ok\nEDGE 1 2 1 0 0 0 1 0\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK(code_of("EDGE 1 1 1 0 0 0 0 0 0\n") == Errc::ParseError);
  CHECK(code_of("EDGE 0 1 1 0 0 0 0 0 0\n") == Errc::ParseError);
  CHECK(code_of("EDGE 1 2 1 0 0 0 0 x 0\n") == Errc::ParseError);
  CHECK(code_of("EDGE 1 2 1 0 0 0 0 nan 0\n") == Errc::ParseError);
  CHECK(code_of("VERTEX 1 1 0 0 0 0 0 0\nVERTEX 1 1 0 0 0 0 0 0\n") == Errc::ParseError);
  CHECK(code_of("LANDMARK 1 0 0 0\n") == Errc::ParseError);
  CHECK(code_of("EDGE 1 2 1.01 0 0 0 0 0 0\n") == Errc::NonUnitMeasurement);
  // Within the normalization band the measurement is accepted.
  CHECK(parse_graph("EDGE 1 2 1.0000005 0 0 0 0 0 0\n").edges.size() == 1);
}

TEST_CASE("measurements are sign-canonicalized") {
  const PoseGraph g = parse_graph("EDGE 1 2 -0.6 0.8 0 0 1 2 3\n");
  const Quaternion& q = g.edges[0].measurement.rotation;
  CHECK(q.w == 0.6);
  CHECK(q.x == -0.8);
  CHECK(g.edges[0].measurement.translation.x == 1.0);
}

TEST_CASE("edges are ordered lexicographically, ties by input order") {
  const PoseGraph g = parse_graph(
      "EDGE 2 3 1 0 0 0 0 0 0\n"
      "EDGE 1 3 1 0 0 0 1 0 0\n"
      "EDGE 1 2 1 0 0 0 0 0 0\n"
      "EDGE 1 3 1 0 0 0 2 0 0\n");
  REQUIRE(g.edges.size() == 4);
  CHECK(g.edges[0].i == 1);
  CHECK(g.edges[0].j == 2);
  CHECK(g.edges[1].measurement.translation.x == 1.0);
  CHECK(g.edges[2].measurement.translation.x == 2.0);
  CHECK(g.edges[3].i == 2);
}

TEST_CASE("text round trip") {
  PgoInstance inst = generate_cycle_graph(8, 2, 0.01, 0.02, 4);
  inst.graph.set_guess(3, inst.truth[2]);
  const std::string text = serialize_graph(inst.graph);
  const PoseGraph back = parse_graph(text);
  CHECK(serialize_graph(back) == text);
  CHECK(back.n == inst.graph.n);
}

TEST_CASE("generator") {
  const PgoInstance a = generate_cycle_graph(10, 3, 0, 0, 12);
  CHECK(a.graph.n == 10);
  CHECK(a.graph.edges.size() == 10 + 3);
  CHECK(serialize_graph(a.graph) == serialize_graph(generate_cycle_graph(10, 3, 0, 0, 12).graph));
  CHECK(serialize_graph(a.graph) != serialize_graph(generate_cycle_graph(10, 3, 0, 0, 13).graph));
  const DualNumber at_truth = build_pgo(a.graph).objective(values_of(a.truth));
  CHECK(std::abs(at_truth.real) <= 1e-12);
  CHECK(std::abs(at_truth.dual) <= 1e-12);
  CHECK_THROWS_AS(generate_cycle_graph(4, 3, 0, 0, 1), Error);
  CHECK_THROWS_AS(generate_cycle_graph(2, 0, 0, 0, 1), Error);
}

TEST_CASE("build_pgo") {
  const PgoInstance inst = generate_cycle_graph(6, 2, 0.01, 0.01, 3);
  const EqdqoProblem P = build_pgo(inst.graph);
  CHECK(P.standard_flag);
  CHECK(P.arity() == 6);
  CHECK(P.constraints.size() == 6 + 3);
  CHECK(check_standardness(P.objective, 100, 5) <= 1e-12);

  CHECK_THROWS_AS(build_pgo(parse_graph("EDGE 1 2 1 0 0 0 0 0 0\nEDGE 3 4 1 0 0 0 0 0 0\n")), Error);
  CHECK_THROWS_AS(build_pgo(parse_graph("VERTEX 1 1 0 0 0 0 0 0\n")), Error);
  try {
    build_pgo(parse_graph("EDGE 1 2 1 0 0 0 0 0 0\nEDGE 3 4 1 0 0 0 0 0 0\n"));
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DisconnectedGraph);
  }
}

TEST_CASE("purely dual measurement noise takes the infinitesimal branch") {
  PgoInstance inst = generate_cycle_graph(5, 1, 0, 0, 8);
  Rng rng(3);
  double expected_sq = 0.0;
  PoseGraph g;
  for (const auto& e : inst.graph.edges) {
    // Perturb the translation only along the body x axis: q_d moves by
    // (1/2) q delta, a purely dual change of the error.
    Pose m = e.measurement;
    const double delta = 0.1 * rng.normal();
    m.translation = m.translation + Quaternion::imaginary(delta, 0, 0);
    g.add_edge(e.i, e.j, m);
    expected_sq += 0.25 * delta * delta;  // |(1/2) q delta|^2 with |q| = 1
  }
  const DualNumber v = build_pgo(g).objective(values_of(inst.truth));
  CHECK(std::abs(v.real) <= 1e-14);
  CHECK(v.dual == doctest::Approx(std::sqrt(expected_sq)).epsilon(1e-12));
}

TEST_CASE("norm agrees with a term-by-term oracle") {
  const PgoInstance inst = generate_cycle_graph(6, 2, 0.05, 0.05, 6);
  const EqdqoProblem P = build_pgo(inst.graph);
  Rng rng(17);
  for (int k = 0; k < 100; ++k) {
    std::vector<DualQuaternion> x;
    for (std::size_t i = 0; i < inst.graph.n; ++i) {
      x.push_back(udq_from_pose(rng.unit_quaternion(), Quaternion::imaginary(rng.normal(), rng.normal(), 0)).value());
    }
    // sqrt(sum |e|^2) + eps sum <e, e_d> / sqrt(sum |e|^2) for an appreciable vector.
    double s = 0.0, sd = 0.0;
    for (const auto& e : inst.graph.edges) {
      const DualQuaternion r = edge_error(x[e.i - 1], x[e.j - 1], e.udq().value());
      s += dot(r.real, r.real);
      sd += dot(r.real, r.dual);
    }
    const DualNumber v = P.objective(x);
    CHECK(std::abs(v.real - std::sqrt(s)) <= 1e-12);
    CHECK(std::abs(v.dual - sd / std::sqrt(s)) <= 1e-12);
  }
}

TEST_CASE("gauge invariance") {
  const PgoInstance inst = generate_cycle_graph(10, 3, 0.02, 0.02, 2);
  const EqdqoProblem P = build_pgo(inst.graph);
  Rng rng(23);
  std::vector<UnitDualQuaternion> x;
  for (std::size_t i = 0; i < inst.graph.n; ++i) {
    x.push_back(udq_from_pose(rng.unit_quaternion(), Quaternion::imaginary(rng.normal(), rng.normal(), rng.normal())));
  }
  std::vector<DualQuaternion> base;
  for (const auto& q : x) base.push_back(q.value());
  const DualNumber f = P.objective(base);
  for (int k = 0; k < 20; ++k) {
    const UnitDualQuaternion g =
        udq_from_pose(rng.unit_quaternion(), Quaternion::imaginary(rng.normal(), rng.normal(), rng.normal()));
    std::vector<DualQuaternion> moved;
    for (const auto& q : x) moved.push_back((g * q).value());
    const DualNumber h = P.objective(moved);
    CHECK(std::abs(h.real - f.real) <= 1e-10);
    CHECK(std::abs(h.dual - f.dual) <= 1e-10);
  }
}

TEST_CASE("single edge: x_2 = x_1 q_12") {
  const PoseGraph g = parse_graph("EDGE 1 2 0.8 0 0.6 0 0.5 -1 2\n");
  const PgoResult r = solve_pgo(g, one_restart());
  CHECK(std::abs(r.report.stage1_value) <= 1e-8);
  const DualQuaternion expected = (r.poses[0] * g.edges[0].udq()).value();
  CHECK(max_diff(r.poses[1].value(), expected) <= 1e-6);
  CHECK(max_diff(r.poses[0].value(), DualQuaternion::identity()) <= 1e-6);
}

TEST_CASE("spanning tree guess is exact on noiseless data") {
  const PgoInstance inst = generate_cycle_graph(7, 2, 0, 0, 9);
  const auto guess = spanning_tree_guess(inst.graph);
  const DualNumber v = build_pgo(inst.graph).objective(guess);
  CHECK(std::abs(v.real) <= 1e-12);
}

TEST_CASE("noiseless recovery") {
  const PgoInstance inst = generate_cycle_graph(10, 3, 0, 0, 1);
  const PgoResult r = solve_pgo(inst.graph, one_restart(), inst.truth);
  CHECK(r.report.stage1_value <= 1e-8);
  CHECK(std::abs(r.report.stage2_value) <= 1e-6);
  REQUIRE(r.errors);
  for (const auto& e : *r.errors) CHECK(e.rotation <= 1e-5);
  CHECK(r.poses[0].rotation().w > 0);
}

TEST_CASE("initial guesses from VERTEX records") {
  PgoInstance inst = generate_cycle_graph(5, 1, 0, 0, 2);
  for (std::size_t i = 0; i < inst.truth.size(); ++i) inst.graph.set_guess(i + 1, inst.truth[i]);
  const EqdqoProblem P = build_pgo(inst.graph);
  REQUIRE(P.initial_guesses.size() == 1);
  CHECK(max_diff(P.initial_guesses[0][0], DualQuaternion::identity()) <= 1e-15);
  CHECK(std::abs(P.objective(P.initial_guesses[0]).real) <= 1e-12);
}

TEST_CASE("serial and parallel error vectors agree") {
  const PgoInstance inst = generate_cycle_graph(40, 20, 0.01, 0.01, 5);
  const auto x = values_of(inst.truth);
  const auto a = error_vector(inst.graph, x, Exec::Serial);
  const auto b = error_vector(inst.graph, x, Exec::Parallel);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(max_diff(a[k], b[k]) == 0.0);
}
