#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "dqopt/jet.hpp"
#include "dqopt/tolerances.hpp"

namespace dqopt {

// Subgradient directions of one norm evaluated at its kink: the gradients of
// the components of the vector inside the norm, for the standard part
// (dual = false) or the dual part (dual = true) of the result.
struct KinkGroup {
  bool dual = false;
  std::vector<Eigen::VectorXd> columns;
};

// Per-call evaluation settings for magnitudes and 2-norms.
//
// `smoothing` (mu > 0) replaces each kinked Euclidean norm |v| by
// sqrt(|v|^2 + mu^2) - mu. Branch decisions (appreciable or not) can be
// recorded into `record` and replayed from `frozen`, in evaluation order.
// One context is threaded by reference through a single evaluation; start
// each evaluation from a fresh copy so the replay cursor begins at zero.
//
// With `kinks` set (derivative evaluations only), every norm whose argument
// is at most kink_tol drops its derivative and reports its subgradient
// directions instead.
struct EvalContext {
  double tol_app = kTolAppreciable;
  double smoothing = 0.0;
  const std::vector<bool>* frozen = nullptr;
  std::vector<bool>* record = nullptr;
  std::size_t cursor = 0;
  double kink_tol = kKinkTol;
  std::vector<KinkGroup>* kinks = nullptr;
  // Kink pinning. Norm nodes are numbered in evaluation order; `norms`
  // receives the standard-part norm of each. A node flagged in `pinned`
  // contributes 0 to the standard part and appends the components of its
  // argument to `pinned_values`, so the caller can impose them as equalities.
  std::vector<double>* norms = nullptr;
  const std::vector<bool>* pinned = nullptr;
  std::vector<Jet>* pinned_values = nullptr;
  std::size_t norm_cursor = 0;

  bool branch(bool computed) {
    if (frozen != nullptr) {
      if (cursor >= frozen->size()) throw std::logic_error("frozen branch tape exhausted");
      computed = (*frozen)[cursor++];
    }
    if (record != nullptr) record->push_back(computed);
    return computed;
  }
};

// Euclidean norm from a sum of squares. With smoothing the kink at zero is
// rounded off; without it, a norm at or below tol_app carries the zero
// subgradient (its derivative is dropped).
template <class T>
T kinked_norm(const T& sum_sq, const EvalContext& ctx) {
  using std::sqrt;
  if (ctx.smoothing > 0.0) {
    const double mu = ctx.smoothing;
    return sqrt(sum_sq + mu * mu) - mu;
  }
  const double v = value_of(sum_sq);
  if (v <= ctx.tol_app * ctx.tol_app) return detach(T(std::sqrt(v > 0.0 ? v : 0.0)));
  return sqrt(sum_sq);
}

// Records the component gradients of `parts` as one kink group when kinks are
// collected and sum_sq is within kink_tol; returns whether it did.
template <class T, class Parts>
bool collect_kink(const T& sum_sq, const Parts& parts, bool dual, const EvalContext& ctx) {
  if constexpr (std::is_same_v<T, Jet>) {
    if (ctx.kinks == nullptr || value_of(sum_sq) > ctx.kink_tol * ctx.kink_tol) return false;
    KinkGroup g;
    g.dual = dual;
    for (const auto& q : parts) {
      for (int c = 0; c < 4; ++c) {
        if (!q[c].is_constant()) g.columns.push_back(q[c].grad());
      }
    }
    ctx.kinks->push_back(std::move(g));
    return true;
  } else {
    (void)sum_sq;
    (void)parts;
    (void)dual;
    (void)ctx;
    return false;
  }
}

// Numbers one norm node; returns whether it is pinned.
template <class T, class Parts>
bool pin_norm(const T& sum_sq, const Parts& parts, EvalContext& ctx) {
  const std::size_t idx = ctx.norm_cursor++;
  if (ctx.norms != nullptr) {
    const double v = value_of(sum_sq);
    ctx.norms->push_back(std::sqrt(v > 0.0 ? v : 0.0));
  }
  if (ctx.pinned == nullptr || idx >= ctx.pinned->size() || !(*ctx.pinned)[idx]) return false;
  if (ctx.pinned_values != nullptr) {
    for (const auto& q : parts) {
      for (int c = 0; c < 4; ++c) {
        if constexpr (std::is_same_v<T, Jet>) {
          ctx.pinned_values->push_back(q[c]);
        } else {
          ctx.pinned_values->push_back(Jet(value_of(q[c])));
        }
      }
    }
  }
  return true;
}

}  // namespace dqopt
