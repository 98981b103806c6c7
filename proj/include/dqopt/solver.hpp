#pragma once

// Two-stage solution of equality-constrained dual quaternion programs.
//
// Stage I minimizes the standard part f subject to h_j = 0 and (h_j)_d = 0
// and yields L^I. Stage II minimizes the dual part f_d subject to the same
// constraints and |f - L^I| <= tau_L. For standard problems Stage I runs over
// the standard coordinates x only, and Stage II keeps x at the Stage I point
// and optimizes x_d: with x free inside the band the affine dependence of f_d
// on x_d makes the second stage unbounded whenever residuals are appreciable.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dqopt/dqfunc.hpp"

namespace dqopt {

struct EqdqoProblem {
  DualFunction objective;
  std::vector<DualFunction> constraints;
  bool standard_flag = false;
  // Optional starting points; restart k uses initial_guesses[k] when present.
  std::vector<std::vector<DualQuaternion>> initial_guesses;

  // Checks arities and derives standard_flag from the declared flags.
  static EqdqoProblem make(DualFunction objective, std::vector<DualFunction> constraints,
                           std::vector<std::vector<DualQuaternion>> initial_guesses = {});

  std::size_t arity() const { return objective.arity(); }
};

struct SolverConfig {
  int restarts = 8;
  std::uint64_t seed = 0;
  double tol_grad = 1e-8;
  double tol_feas = 1e-9;
  double mu_max = 1e-2;
  double mu_min = 1e-9;
  double mu_factor = 10.0;
  // Stage II band half-width; unset means max(1e-8, 1e-6 |L^I|).
  std::optional<double> tau_l;
  int max_outer = 50;
  int max_inner = 500;
  int threads = 1;

  // Smoothing levels from mu_max down to mu_min, strictly decreasing.
  std::vector<double> mu_schedule() const;
  double band_width(double stage1_value) const;
  // Throws InvalidArgument on non-positive tolerances or counts.
  void validate() const;
};

struct StageMultipliers {
  std::vector<double> lambda;  // h_j
  std::vector<double> mu;      // (h_j)_d
  double sigma = 0.0;          // f, Stage II only
};

struct TraceRow {
  int iter = 0;
  int stage = 1;
  double objective_std = 0.0;
  double objective_dual = 0.0;
  double feasibility = 0.0;
  double kkt_residual = 0.0;
};

enum class StageStatus { Converged, MaxIterations, Infeasible };
const char* to_string(StageStatus s);

struct SolveReport {
  double stage1_value = 0.0;
  double stage2_value = 0.0;
  std::vector<DualQuaternion> solution;
  StageMultipliers stage1_multipliers;
  StageMultipliers stage2_multipliers;
  double kkt_residual_stage1 = 0.0;
  double kkt_residual_stage2 = 0.0;
  bool kkt_degenerate_stage1 = false;
  bool kkt_degenerate_stage2 = false;
  double feasibility = 0.0;
  int iterations_stage1 = 0;
  int iterations_stage2 = 0;
  int restart_index = 0;
  StageStatus status_stage1 = StageStatus::Converged;
  StageStatus status_stage2 = StageStatus::Converged;
  double wall_time_ms = 0.0;
  std::vector<TraceRow> trace;

  DualNumber objective() const { return {stage1_value, stage2_value}; }
};

struct Stage1Result {
  std::vector<DualQuaternion> point;  // x_d = 0 for standard problems
  double value = 0.0;                 // exact f at point
  double feasibility = 0.0;
  StageMultipliers multipliers;
  int iterations = 0;
  int restart_index = 0;
  StageStatus status = StageStatus::Converged;
  std::vector<TraceRow> trace;
};

// Best feasible Stage I result over all restarts (ties by restart index).
// Throws Infeasible when no restart reaches tol_feas, MaxIterations when the
// caps were hit before any restart became feasible.
Stage1Result solve_stage1(const EqdqoProblem& problem, const SolverConfig& cfg);

// Stage II from one Stage I result, with L^I = stage1.value.
SolveReport solve_stage2(const EqdqoProblem& problem, const Stage1Result& stage1, const SolverConfig& cfg);

// Both stages. Every Stage I restart within tau_L of the best value enters
// Stage II; the lowest Stage II value wins, ties by restart index.
SolveReport solve_eqdqo(const EqdqoProblem& problem, const SolverConfig& cfg);

// ---- KKT ------------------------------------------------------------------

enum class KktStage { One, Two };

struct KktAnalysis {
  double residual = 0.0;
  bool degenerate = false;  // constraint-gradient system rank-deficient
  StageMultipliers multipliers;
  // Norms of the objective sitting at their kink (argument <= kKinkTol) and
  // the largest Euclidean norm of their fitted subgradient coefficients;
  // a nonsmooth stationary point has max_subgradient <= 1.
  int kinks = 0;
  double max_subgradient = 0.0;
  Eigen::VectorXd stationarity;  // residual vector, length 8n
};

// Stationarity residual:
//   Stage I:  grad f + sum lambda_j grad h_j  (+ mu_j grad (h_j)_d, generic)
//   Stage II: grad f_d + sigma grad f + sum lambda_j grad h_j + mu_j grad (h_j)_d
// over the 8n real coordinates, except Stage II of a standard problem, which
// is measured over the dual coordinates only (x is fixed by Stage I there, so
// the terms in sigma and lambda vanish). Gradients are exact (no smoothing).
// An objective norm at its kink contributes a free subgradient J^T u in place
// of its derivative. Multipliers come from minimum-norm least squares unless
// supplied. `tapes` freezes branches (one tape per function: objective first,
// then constraints).
KktAnalysis analyze_kkt(const EqdqoProblem& problem, std::span<const DualQuaternion> point, KktStage stage,
                        const StageMultipliers* multipliers = nullptr,
                        const std::vector<std::vector<bool>>* tapes = nullptr);

// analyze_kkt(...).residual; with least-squares multipliers it throws
// DegenerateConstraintGradients on a rank-deficient system.
double kkt_residual(const EqdqoProblem& problem, std::span<const DualQuaternion> point, KktStage stage,
                    const StageMultipliers* multipliers = nullptr);

// ---- inner solver ---------------------------------------------------------

struct NlpValues {
  double f = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd c;    // equality constraints
  Eigen::MatrixXd jac;  // rows = constraints
  double band = 0.0;    // value kept within band_center +- band_width
  Eigen::VectorXd band_grad;
};

// Smooth real program in `dim` coordinates; eval fills values, plus
// derivatives when want_grad is set.
struct Nlp {
  Eigen::Index dim = 0;
  Eigen::Index num_eq = 0;
  bool has_band = false;
  double band_center = 0.0;
  double band_width = 0.0;
  std::function<void(const Eigen::VectorXd& z, bool want_grad, NlpValues& out)> eval;
};

struct InnerOptions {
  double tol_grad = 1e-8;
  double tol_feas = 1e-9;
  int max_outer = 50;
  int max_inner = 500;
  double rho_max = 1e10;
  int memory = 20;
};

struct InnerState {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;
  double rho = 10.0;
};

struct InnerResult {
  InnerState state;
  double feasibility = 0.0;
  double lagrangian_grad = 0.0;  // inf-norm of grad of the augmented Lagrangian
  int iterations = 0;            // inner (quasi-Newton) iterations
  int outer_iterations = 0;
  StageStatus status = StageStatus::Converged;
};

using OuterCallback = std::function<void(const InnerResult& progress)>;

// Augmented Lagrangian over the equalities (band by penalty only) with an
// L-BFGS inner loop and Armijo backtracking. Deterministic given the start.
InnerResult inner_solve(const Nlp& nlp, InnerState start, const InnerOptions& opts,
                        const OuterCallback& on_outer = {});

// Convenience form over plain real functions; fn(z, grad) fills grad when
// non-null.
using RealFunction = std::function<double(const Eigen::VectorXd& z, Eigen::VectorXd* grad)>;
Eigen::VectorXd inner_solve(const RealFunction& objective, const std::vector<RealFunction>& eq_constraints,
                            const Eigen::VectorXd& start, const SolverConfig& cfg);

}  // namespace dqopt
