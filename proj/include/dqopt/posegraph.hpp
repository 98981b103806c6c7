#pragma once

// Pose graph optimization: minimize the 2-norm of the edge errors
// e_ij = q_ij - x_i* x_j over unit dual quaternion poses.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dqopt/handeye.hpp"
#include "dqopt/kernels.hpp"
#include "dqopt/serialize.hpp"
#include "dqopt/solver.hpp"

namespace dqopt {

struct PoseGraphEdge {
  std::size_t i = 0, j = 0;  // one-based, i != j
  Pose measurement;          // sign-canonicalized

  UnitDualQuaternion udq() const { return measurement.udq(); }
};

struct PoseGraph {
  std::size_t n = 0;
  // Optional initial guesses, indexed by vertex id - 1; empty or size n.
  std::vector<std::optional<Pose>> guesses;
  // Lexicographic in (i, j), ties in insertion order.
  std::vector<PoseGraphEdge> edges;

  // Inserts keeping the edge order. Throws InvalidArgument on a bad index
  // and NonUnitMeasurement when the rotation is off unit by more than 1e-6.
  void add_edge(std::size_t i, std::size_t j, const Pose& measurement);
  void set_guess(std::size_t id, const Pose& guess);
  bool weakly_connected() const;
};

// q_ij - x_i* x_j.
DualQuaternion edge_error(const DualQuaternion& xi, const DualQuaternion& xj, const DualQuaternion& qij);

// One entry per edge in graph order; `poses` has n entries (vertex id - 1).
std::vector<DualQuaternion> error_vector(const PoseGraph& g, std::span<const DualQuaternion> poses,
                                         Exec exec = Exec::Serial);

// Line format: `VERTEX id qw qx qy qz tx ty tz`, `EDGE i j qw qx qy qz tx ty
// tz`, `#` starts a comment. Translations are body frame (t = p^b). Throws
// ParseError with the 1-based line number, NonUnitMeasurement for an edge
// rotation off unit by more than 1e-6.
PoseGraph parse_graph(const std::string& text);
// Guessed vertices first (by id), then edges; parse_graph of the output
// reproduces the graph exactly.
std::string serialize_graph(const PoseGraph& g);

// Objective ||e||_2, unit constraints on every pose and the anchor
// Im(x_1) = 0, which with |x_1|^2 = 1 fixes x_1 = +-1. Restart 0 starts from
// the guesses when every vertex has one, else from a spanning tree.
// Throws DisconnectedGraph, InvalidArgument without edges.
EqdqoProblem build_pgo(const PoseGraph& g);

// Composes measurements along a breadth-first tree from vertex 1 (= 1).
std::vector<DualQuaternion> spanning_tree_guess(const PoseGraph& g);

struct PgoInstance {
  PoseGraph graph;
  std::vector<Pose> truth;
};

// Trajectory of n poses with relative rotation angles in [0.2, 1.1]; edges
// (i, i+1), the closing edge (n, 1) and exactly `loop_closures` chords
// between non-adjacent vertices. Noise as in the hand-eye generator.
PgoInstance generate_cycle_graph(std::size_t n, std::size_t loop_closures, double noise_rot, double noise_trans,
                                 std::uint64_t seed);

// Ground truth re-anchored so that vertex 1 is the identity, then compared
// per vertex.
std::vector<PoseError> vertex_errors(const std::vector<Pose>& truth, const std::vector<UnitDualQuaternion>& poses);

struct PgoResult {
  SolveReport report;
  std::vector<UnitDualQuaternion> poses;  // x_1 with w >= 0
  std::optional<std::vector<PoseError>> errors;
};

PgoResult solve_pgo(const PoseGraph& g, const SolverConfig& cfg,
                    const std::optional<std::vector<Pose>>& truth = std::nullopt);

Json to_json(const PgoResult& r);

}  // namespace dqopt
