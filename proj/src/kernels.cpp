#include "dqopt/kernels.hpp"

#include <exception>

#include <omp.h>

namespace dqopt {

namespace {

// Runs body(k) for k in [0, n), rethrowing the first exception after the loop.
template <class Body>
void parallel_for(std::ptrdiff_t n, Body body) {
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    try {
      body(k);
    } catch (...) {
#pragma omp critical(dqopt_kernel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<DualNumber> evaluate_batch(const DualFunction& f, std::span<const std::vector<DualQuaternion>> points,
                                       Exec exec, const EvalContext& ctx) {
  std::vector<DualNumber> out(points.size());
  auto body = [&](std::ptrdiff_t k) { out[k] = f(points[k], ctx); };
  const auto n = static_cast<std::ptrdiff_t>(points.size());
  if (exec == Exec::Parallel) {
    parallel_for(n, body);
  } else {
    for (std::ptrdiff_t k = 0; k < n; ++k) body(k);
  }
  return out;
}

std::vector<DualQuaternion> edge_errors(std::span<const DualQuaternion> poses, std::span<const EdgeTerm> edges,
                                        Exec exec) {
  std::vector<DualQuaternion> out(edges.size());
  auto body = [&](std::ptrdiff_t k) {
    const EdgeTerm& e = edges[k];
    out[k] = e.measurement - poses[e.i].conj() * poses[e.j];
  };
  const auto n = static_cast<std::ptrdiff_t>(edges.size());
  if (exec == Exec::Parallel) {
    parallel_for(n, body);
  } else {
    for (std::ptrdiff_t k = 0; k < n; ++k) body(k);
  }
  return out;
}

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) { omp_set_num_threads(n > 0 ? n : 1); }

}  // namespace dqopt
