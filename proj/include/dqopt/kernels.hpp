#pragma once

// Data-parallel kernels. Each has a serial reference and an OpenMP version;
// both produce identical results element by element (no reductions cross
// elements), so the parallel path is a pure scheduling choice.

#include <span>
#include <vector>

#include "dqopt/dqfunc.hpp"
#include "dqopt/dual_quaternion.hpp"

namespace dqopt {

enum class Exec { Serial, Parallel };

// f at each point; a fresh copy of ctx per point.
std::vector<DualNumber> evaluate_batch(const DualFunction& f, std::span<const std::vector<DualQuaternion>> points,
                                       Exec exec, const EvalContext& ctx = {});

struct EdgeTerm {
  std::size_t i = 0, j = 0;  // zero-based vertex indices
  DualQuaternion measurement;
};

// q_ij - x_i* x_j per edge.
std::vector<DualQuaternion> edge_errors(std::span<const DualQuaternion> poses, std::span<const EdgeTerm> edges,
                                        Exec exec);

// Number of OpenMP threads a parallel region would use (1 without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace dqopt
