#include "dqopt/posegraph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <numbers>
#include <sstream>

#include "dqopt/random.hpp"

namespace dqopt {

namespace {

using Map = DualQuaternionMap;

// Flips the rotation when the dual quaternion is not in canonical sign; p^b
// is unchanged by the flip.
Pose canonical_pose(const Pose& p) {
  const UnitDualQuaternion q = p.udq();
  const UnitDualQuaternion c = udq_canonicalize_sign(q);
  Pose out = p;
  if (!(c.value() == q.value())) out.rotation = -p.rotation;
  return out;
}

Pose checked_measurement(const Pose& p) {
  if (std::abs(p.rotation.norm() - 1.0) > kUnitNormalizeBand) {
    throw Error(Errc::NonUnitMeasurement, "edge rotation is not unit (|q| = " + format_double(p.rotation.norm()) + ")");
  }
  return canonical_pose(p);
}

std::vector<std::string> tokens_of(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(line, "not a finite number: \"" + s + "\"");
  }
  return v;
}

std::size_t parse_id(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v == 0) {
    throw ParseError(line, "vertex id must be a positive integer: \"" + s + "\"");
  }
  return v;
}

Pose parse_pose(const std::vector<std::string>& t, std::size_t first, std::size_t line) {
  Pose p;
  p.rotation = {parse_number(t[first], line), parse_number(t[first + 1], line), parse_number(t[first + 2], line),
                parse_number(t[first + 3], line)};
  p.translation = Quaternion::imaginary(parse_number(t[first + 4], line), parse_number(t[first + 5], line),
                                        parse_number(t[first + 6], line));
  return p;
}

std::string pose_fields(const Pose& p) {
  const Quaternion& q = p.rotation;
  const Quaternion& t = p.translation;
  std::string out;
  for (double v : {q.w, q.x, q.y, q.z, t.x, t.y, t.z}) out += " " + format_double(v);
  return out;
}

Json error_json(const PoseError& e) { return {{"rotation", e.rotation}, {"translation", e.translation}}; }

}  // namespace

// ---- graph ----------------------------------------------------------------

void PoseGraph::add_edge(std::size_t i, std::size_t j, const Pose& measurement) {
  if (i == 0 || j == 0) throw Error(Errc::InvalidArgument, "vertex ids start at 1");
  if (i == j) throw Error(Errc::InvalidArgument, "self-loop on vertex " + std::to_string(i));
  PoseGraphEdge e{i, j, checked_measurement(measurement)};
  n = std::max({n, i, j});
  if (!guesses.empty()) guesses.resize(n);
  const auto pos = std::upper_bound(edges.begin(), edges.end(), e, [](const auto& a, const auto& b) {
    return std::pair(a.i, a.j) < std::pair(b.i, b.j);
  });
  edges.insert(pos, std::move(e));
}

void PoseGraph::set_guess(std::size_t id, const Pose& guess) {
  if (id == 0) throw Error(Errc::InvalidArgument, "vertex ids start at 1");
  (void)guess.udq();
  n = std::max(n, id);
  guesses.resize(n);
  guesses[id - 1] = guess;
}

bool PoseGraph::weakly_connected() const {
  if (n == 0) return false;
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& e : edges) {
    adj[e.i - 1].push_back(e.j - 1);
    adj[e.j - 1].push_back(e.i - 1);
  }
  std::vector<bool> seen(n, false);
  std::deque<std::size_t> queue{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t w : adj[v]) {
      if (seen[w]) continue;
      seen[w] = true;
      ++count;
      queue.push_back(w);
    }
  }
  return count == n;
}

DualQuaternion edge_error(const DualQuaternion& xi, const DualQuaternion& xj, const DualQuaternion& qij) {
  return qij - xi.conj() * xj;
}

std::vector<DualQuaternion> error_vector(const PoseGraph& g, std::span<const DualQuaternion> poses, Exec exec) {
  if (poses.size() != g.n) throw Error(Errc::ArityMismatch, "one pose per vertex expected");
  std::vector<EdgeTerm> terms;
  terms.reserve(g.edges.size());
  for (const auto& e : g.edges) terms.push_back({e.i - 1, e.j - 1, e.udq().value()});
  return edge_errors(poses, terms, exec);
}

// ---- text format ----------------------------------------------------------

PoseGraph parse_graph(const std::string& text) {
  PoseGraph g;
  std::vector<bool> has_vertex;
  std::istringstream is(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = tokens_of(line);
    if (t.empty()) continue;
    if (t[0] == "VERTEX") {
      if (t.size() != 9) throw ParseError(number, "VERTEX takes 8 fields, got " + std::to_string(t.size() - 1));
      const std::size_t id = parse_id(t[1], number);
      if (id <= has_vertex.size() && has_vertex[id - 1]) {
        throw ParseError(number, "duplicate VERTEX " + std::to_string(id));
      }
      if (has_vertex.size() < id) has_vertex.resize(id, false);
      has_vertex[id - 1] = true;
      try {
        g.set_guess(id, parse_pose(t, 2, number));
      } catch (const ParseError&) {
        throw;
      } catch (const Error& e) {
        throw ParseError(number, e.what());
      }
    } else if (t[0] == "EDGE") {
      if (t.size() != 10) throw ParseError(number, "EDGE takes 9 fields, got " + std::to_string(t.size() - 1));
      const std::size_t i = parse_id(t[1], number), j = parse_id(t[2], number);
      if (i == j) throw ParseError(number, "self-loop on vertex " + std::to_string(i));
      const Pose p = parse_pose(t, 3, number);
      try {
        g.add_edge(i, j, p);
      } catch (const Error& e) {
        if (e.code() == Errc::NonUnitMeasurement) {
          throw Error(Errc::NonUnitMeasurement, "line " + std::to_string(number) + ": " + e.what());
        }
        throw ParseError(number, e.what());
      }
    } else {
      throw ParseError(number, "unknown record \"" + t[0] + "\"");
    }
  }
  return g;
}

std::string serialize_graph(const PoseGraph& g) {
  std::string out;
  for (std::size_t k = 0; k < g.guesses.size(); ++k) {
    if (g.guesses[k]) out += "VERTEX " + std::to_string(k + 1) + pose_fields(*g.guesses[k]) + "\n";
  }
  for (const auto& e : g.edges) {
    out += "EDGE " + std::to_string(e.i) + " " + std::to_string(e.j) + pose_fields(e.measurement) + "\n";
  }
  return out;
}

// ---- problem --------------------------------------------------------------

std::vector<DualQuaternion> spanning_tree_guess(const PoseGraph& g) {
  std::vector<std::vector<std::size_t>> incident(g.n);
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    incident[g.edges[k].i - 1].push_back(k);
    incident[g.edges[k].j - 1].push_back(k);
  }
  std::vector<std::optional<UnitDualQuaternion>> x(g.n);
  x[0] = UnitDualQuaternion::identity();
  std::deque<std::size_t> queue{0};
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t k : incident[v]) {
      const auto& e = g.edges[k];
      const std::size_t i = e.i - 1, j = e.j - 1;
      if (i == v && !x[j]) {
        x[j] = *x[i] * e.udq();
        queue.push_back(j);
      } else if (j == v && !x[i]) {
        x[i] = *x[j] * e.udq().conj();
        queue.push_back(i);
      }
    }
  }
  std::vector<DualQuaternion> out;
  out.reserve(g.n);
  for (const auto& q : x) out.push_back(q ? q->value() : DualQuaternion::identity());
  return out;
}

EqdqoProblem build_pgo(const PoseGraph& g) {
  if (g.edges.empty()) throw Error(Errc::InvalidArgument, "pose graph has no edges");
  if (!g.weakly_connected()) throw Error(Errc::DisconnectedGraph, "pose graph is not weakly connected");
  const std::size_t n = g.n;

  std::vector<Map> errors;
  errors.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    errors.push_back(Map::constant(n, e.udq().value()) - Map::variable(n, e.i - 1).conj() * Map::variable(n, e.j - 1));
  }
  std::vector<DualFunction> constraints;
  for (std::size_t i = 0; i < n; ++i) {
    constraints.push_back(squared_magnitude(Map::variable(n, i)) - DualFunction::constant(n, {1.0, 0.0}));
  }
  for (int c = 1; c <= 3; ++c) constraints.push_back(component(Map::variable(n, 0), c));

  std::vector<DualQuaternion> start;
  const bool all_guessed = g.guesses.size() == n && std::all_of(g.guesses.begin(), g.guesses.end(),
                                                                 [](const auto& p) { return p.has_value(); });
  if (all_guessed) {
    const UnitDualQuaternion inv = g.guesses[0]->udq().conj();
    for (const auto& p : g.guesses) start.push_back((inv * p->udq()).value());
  } else {
    start = spanning_tree_guess(g);
  }
  return EqdqoProblem::make(norm2(errors), std::move(constraints), {std::move(start)});
}

// ---- generator ------------------------------------------------------------

PgoInstance generate_cycle_graph(std::size_t n, std::size_t loop_closures, double noise_rot, double noise_trans,
                                 std::uint64_t seed) {
  if (n < 3) throw Error(Errc::InvalidArgument, "a cycle graph needs at least 3 vertices");
  if (loop_closures > n * (n - 1) / 2 - n) throw Error(Errc::InvalidArgument, "too many loop closures");
  if (!(noise_rot >= 0) || !(noise_trans >= 0)) throw Error(Errc::InvalidArgument, "noise levels must be >= 0");

  // Every measured relative rotation keeps w >= kMargin, so canonicalization
  // leaves the truth sign-consistent around every cycle.
  constexpr double kMargin = 0.05;
  Rng rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<UnitDualQuaternion> x;
    std::vector<Pose> truth;
    const double radius = 3.0;
    Quaternion q = rng.unit_quaternion();
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) q = q * exp_axis_angle(rng.uniform(0.2, 1.1), rng.unit_axis());
      const double phi = 2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
      const Quaternion t = Quaternion::imaginary(radius * std::cos(phi), radius * std::sin(phi), 0.3 * rng.normal());
      truth.push_back(Pose{q, q.conj() * t * q});
      x.push_back(truth.back().udq());
    }
    auto rel = [&](std::size_t i, std::size_t j) { return x[i].conj() * x[j]; };
    if (rel(n - 1, 0).rotation().w < kMargin) continue;

    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 2; j < n; ++j)
        if (!(i == 0 && j == n - 1) && rel(i, j).rotation().w >= kMargin) candidates.emplace_back(i, j);
    if (candidates.size() < loop_closures) continue;
    for (std::size_t k = 0; k < loop_closures; ++k) {
      std::swap(candidates[k], candidates[k + rng.index(candidates.size() - k)]);
    }
    candidates.resize(loop_closures);

    PgoInstance out;
    auto add = [&](std::size_t i, std::size_t j) {
      const UnitDualQuaternion m = rel(i, j) * measurement_noise(rng, noise_rot, noise_trans);
      out.graph.add_edge(i + 1, j + 1, Pose::from_udq(m));
    };
    for (std::size_t i = 0; i + 1 < n; ++i) add(i, i + 1);
    add(n - 1, 0);
    for (const auto& [i, j] : candidates) add(i, j);
    out.truth = std::move(truth);
    return out;
  }
  throw Error(Errc::InvalidArgument, "could not place the requested loop closures");
}

// ---- solve ----------------------------------------------------------------

std::vector<PoseError> vertex_errors(const std::vector<Pose>& truth, const std::vector<UnitDualQuaternion>& poses) {
  if (truth.size() != poses.size() || truth.empty()) {
    throw Error(Errc::InvalidArgument, "ground truth and estimate differ in size");
  }
  const UnitDualQuaternion t0 = truth[0].udq().conj();
  const UnitDualQuaternion x0 = poses[0].conj();
  std::vector<PoseError> out;
  out.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    out.push_back(pose_error(Pose::from_udq(t0 * truth[i].udq()), x0 * poses[i]));
  }
  return out;
}

PgoResult solve_pgo(const PoseGraph& g, const SolverConfig& cfg, const std::optional<std::vector<Pose>>& truth) {
  PgoResult r;
  r.report = solve_eqdqo(build_pgo(g), cfg);
  for (const auto& q : r.report.solution) r.poses.emplace_back(q);
  if (r.poses[0].rotation().w < 0) {
    for (auto& p : r.poses) p = -p;
  }
  if (truth) r.errors = vertex_errors(*truth, r.poses);
  return r;
}

Json to_json(const PgoResult& r) {
  Json j = to_json(r.report);
  Json poses = Json::array();
  for (const auto& p : r.poses) poses.push_back(to_json(Pose::from_udq(p)));
  j["poses"] = std::move(poses);
  if (r.errors) {
    Json errs = Json::array();
    double worst = 0.0;
    for (const auto& e : *r.errors) {
      errs.push_back(error_json(e));
      worst = std::max(worst, e.rotation);
    }
    j["vertex_errors"] = std::move(errs);
    j["max_rotation_error"] = worst;
  }
  return j;
}

}  // namespace dqopt
