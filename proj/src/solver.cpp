#include "dqopt/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <exception>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "dqopt/random.hpp"

namespace dqopt {

// ---- problem and config ---------------------------------------------------

EqdqoProblem EqdqoProblem::make(DualFunction objective, std::vector<DualFunction> constraints,
                                std::vector<std::vector<DualQuaternion>> initial_guesses) {
  bool standard = objective.declared_standard();
  for (const auto& h : constraints) {
    if (h.arity() != objective.arity()) {
      throw Error(Errc::ArityMismatch, "constraint arity differs from objective arity");
    }
    standard = standard && h.declared_standard();
  }
  for (const auto& g : initial_guesses) {
    if (g.size() != objective.arity()) throw Error(Errc::ArityMismatch, "initial guess has wrong length");
  }
  return {std::move(objective), std::move(constraints), standard, std::move(initial_guesses)};
}

std::vector<double> SolverConfig::mu_schedule() const {
  std::vector<double> out;
  for (double mu = mu_max; mu > mu_min * (1.0 + 1e-9); mu /= mu_factor) out.push_back(mu);
  out.push_back(mu_min);
  return out;
}

double SolverConfig::band_width(double stage1_value) const {
  return tau_l ? *tau_l : std::max(1e-8, 1e-6 * std::abs(stage1_value));
}

void SolverConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(Errc::InvalidArgument, what);
  };
  require(restarts >= 1, "restarts must be >= 1");
  require(tol_grad > 0.0, "tol_grad must be positive");
  require(tol_feas > 0.0, "tol_feas must be positive");
  require(mu_min > 0.0 && mu_max >= mu_min, "smoothing schedule needs 0 < mu_min <= mu_max");
  require(mu_factor > 1.0, "mu_factor must exceed 1");
  require(!tau_l || *tau_l > 0.0, "tau_l must be positive");
  require(max_outer >= 1 && max_inner >= 1, "iteration caps must be >= 1");
  require(threads >= 1, "threads must be >= 1");
}

const char* to_string(StageStatus s) {
  switch (s) {
    case StageStatus::Converged: return "converged";
    case StageStatus::MaxIterations: return "max_iterations";
    case StageStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

// ---- inner solver ---------------------------------------------------------

namespace {

using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Minimum-norm least squares; singular values below 1e-9 of the largest
// count as zero. The threshold must be set before the factorization.
Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> min_norm_ls(const Eigen::MatrixXd& A) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A.rows(), A.cols());
  cod.setThreshold(1e-9);
  cod.compute(A);
  return cod;
}

struct LbfgsResult {
  VectorXd z;
  double grad_norm = kInf;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
};

// phi(z, &g) returns the value and fills the gradient.
template <class Phi>
LbfgsResult lbfgs(Phi&& phi, VectorXd z, double tol, int max_iter, int memory) {
  LbfgsResult r;
  VectorXd g;
  double fz = phi(z, g);
  std::deque<VectorXd> S, Y;
  std::deque<double> R;
  int flat = 0;
  VectorXd zn, gn;
  for (; r.iterations < max_iter; ++r.iterations) {
    r.grad_norm = g.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(fz) || !std::isfinite(r.grad_norm)) break;
    if (r.grad_norm <= tol) {
      r.converged = true;
      break;
    }

    // two-loop recursion
    VectorXd q = g;
    std::vector<double> alpha(S.size());
    for (std::size_t k = S.size(); k-- > 0;) {
      alpha[k] = R[k] * S[k].dot(q);
      q -= alpha[k] * Y[k];
    }
    if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (std::size_t k = 0; k < S.size(); ++k) {
      const double beta = R[k] * Y[k].dot(q);
      q += (alpha[k] - beta) * S[k];
    }
    VectorXd d = -q;
    double gd = g.dot(d);
    if (!(gd < 0.0)) {
      S.clear();
      Y.clear();
      R.clear();
      d = -g;
      gd = -g.squaredNorm();
    }

    double t = S.empty() ? std::min(1.0, 1.0 / g.norm()) : 1.0;
    bool accepted = false;
    double fn = fz;
    for (int ls = 0; ls < 60; ++ls) {
      zn = z + t * d;
      fn = phi(zn, gn);
      if (std::isfinite(fn) && fn <= fz + 1e-4 * t * gd) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!S.empty()) {
        // retry once along steepest descent
        S.clear();
        Y.clear();
        R.clear();
        continue;
      }
      r.stalled = true;
      break;
    }

    VectorXd s = zn - z;
    VectorXd y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      R.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > memory) {
        S.pop_front();
        Y.pop_front();
        R.pop_front();
      }
    }
    const double decrease = fz - fn;
    z.swap(zn);
    g.swap(gn);
    fz = fn;
    if (decrease <= 1e-18 * std::max(1.0, std::abs(fz))) {
      if (++flat >= 5) {
        r.stalled = true;
        ++r.iterations;
        break;
      }
    } else {
      flat = 0;
    }
  }
  r.grad_norm = g.lpNorm<Eigen::Infinity>();
  r.z = std::move(z);
  return r;
}

double deadzone(double v, double width) {
  if (v > width) return v - width;
  if (v < -width) return v + width;
  return 0.0;
}

double feasibility_of(const Nlp& nlp, const NlpValues& v) {
  double feas = nlp.num_eq > 0 ? v.c.lpNorm<Eigen::Infinity>() : 0.0;
  if (nlp.has_band) feas = std::max(feas, std::abs(deadzone(v.band - nlp.band_center, nlp.band_width)));
  return feas;
}

}  // namespace

InnerResult inner_solve(const Nlp& nlp, InnerState start, const InnerOptions& opts, const OuterCallback& on_outer) {
  InnerResult res;
  res.state = std::move(start);
  InnerState& st = res.state;
  if (st.lambda.size() != nlp.num_eq) st.lambda = VectorXd::Zero(nlp.num_eq);

  NlpValues v;
  auto phi = [&](const VectorXd& z, VectorXd& g) {
    nlp.eval(z, true, v);
    double val = v.f;
    g = v.grad;
    if (nlp.num_eq > 0) {
      val += st.lambda.dot(v.c) + 0.5 * st.rho * v.c.squaredNorm();
      g.noalias() += v.jac.transpose() * (st.lambda + st.rho * v.c);
    }
    if (nlp.has_band) {
      const double e = deadzone(v.band - nlp.band_center, nlp.band_width);
      val += 0.5 * st.rho * e * e;
      if (e != 0.0) g += st.rho * e * v.band_grad;
    }
    return val;
  };

  double prev_feas = kInf;
  int stuck = 0;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    LbfgsResult lb = lbfgs(phi, st.z, opts.tol_grad, opts.max_inner, opts.memory);
    st.z = std::move(lb.z);
    res.iterations += lb.iterations;
    res.outer_iterations = outer + 1;
    res.lagrangian_grad = lb.grad_norm;

    nlp.eval(st.z, false, v);
    const double feas = feasibility_of(nlp, v);
    res.feasibility = feas;
    if (nlp.num_eq > 0) st.lambda += st.rho * v.c;
    if (on_outer) on_outer(res);

    if (feas <= opts.tol_feas && (lb.converged || lb.stalled)) {
      res.status = StageStatus::Converged;
      return res;
    }
    if (feas > opts.tol_feas && feas > 0.25 * prev_feas) {
      if (st.rho >= opts.rho_max) {
        if (++stuck >= 3) {
          res.status = StageStatus::Infeasible;
          return res;
        }
      } else {
        st.rho = std::min(10.0 * st.rho, opts.rho_max);
      }
    }
    prev_feas = std::min(prev_feas, feas);
  }
  res.status = StageStatus::MaxIterations;
  return res;
}

Eigen::VectorXd inner_solve(const RealFunction& objective, const std::vector<RealFunction>& eq_constraints,
                            const Eigen::VectorXd& start, const SolverConfig& cfg) {
  cfg.validate();
  Nlp nlp;
  nlp.dim = start.size();
  nlp.num_eq = static_cast<Eigen::Index>(eq_constraints.size());
  nlp.eval = [&](const VectorXd& z, bool want_grad, NlpValues& out) {
    VectorXd g;
    out.f = objective(z, want_grad ? &out.grad : nullptr);
    out.c.resize(nlp.num_eq);
    if (want_grad) out.jac.resize(nlp.num_eq, nlp.dim);
    for (Eigen::Index j = 0; j < nlp.num_eq; ++j) {
      out.c[j] = eq_constraints[static_cast<std::size_t>(j)](z, want_grad ? &g : nullptr);
      if (want_grad) out.jac.row(j) = g.transpose();
    }
  };
  InnerOptions opts;
  opts.tol_grad = cfg.tol_grad;
  opts.tol_feas = cfg.tol_feas;
  opts.max_outer = cfg.max_outer;
  opts.max_inner = cfg.max_inner;
  InnerState st;
  st.z = start;
  const InnerResult r = inner_solve(nlp, std::move(st), opts);
  if (r.status == StageStatus::MaxIterations && r.feasibility > cfg.tol_feas) {
    throw Error(Errc::MaxIterations, "inner solve hit its iteration caps");
  }
  return r.state.z;
}

// ---- stages ---------------------------------------------------------------

namespace {

using Tapes = std::vector<std::vector<bool>>;

// Which coordinates move and which parts of which functions enter.
struct StageSetup {
  std::vector<int> active;
  std::vector<DualQuaternion> base;
  bool objective_dual = false;
  std::vector<std::pair<std::size_t, bool>> eqs;  // (constraint index, dual part)
  bool band = false;
  double band_center = 0.0;
  double band_width = 0.0;
  const Tapes* tapes = nullptr;
  // Subtracted from the objective as linear * (z - origin) when non-empty.
  VectorXd linear;
  VectorXd origin;
};

void set_coordinate(std::vector<DualQuaternion>& x, int c, double value) {
  DualQuaternion& q = x[static_cast<std::size_t>(c / 8)];
  const int r = c % 8;
  (r < 4 ? q.real : q.dual)[r % 4] = value;
}

double get_coordinate(const std::vector<DualQuaternion>& x, int c) {
  const DualQuaternion& q = x[static_cast<std::size_t>(c / 8)];
  const int r = c % 8;
  return (r < 4 ? q.real : q.dual)[r % 4];
}

std::vector<DualQuaternion> assemble(const StageSetup& s, const VectorXd& z) {
  std::vector<DualQuaternion> x = s.base;
  for (std::size_t k = 0; k < s.active.size(); ++k) set_coordinate(x, s.active[k], z[static_cast<Eigen::Index>(k)]);
  return x;
}

VectorXd extract(const StageSetup& s, const std::vector<DualQuaternion>& x) {
  VectorXd z(static_cast<Eigen::Index>(s.active.size()));
  for (std::size_t k = 0; k < s.active.size(); ++k) z[static_cast<Eigen::Index>(k)] = get_coordinate(x, s.active[k]);
  return z;
}

EvalContext context_for(const Tapes* tapes, std::size_t fn_index, double smoothing) {
  EvalContext ctx;
  ctx.smoothing = smoothing;
  if (tapes != nullptr) ctx.frozen = &(*tapes)[fn_index];
  return ctx;
}

VectorXd pick(const Eigen::VectorXd& full, const std::vector<int>& active) {
  VectorXd out(static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) out[static_cast<Eigen::Index>(k)] = full[active[k]];
  return out;
}

Nlp make_nlp(const EqdqoProblem& P, const StageSetup& s, double mu) {
  Nlp nlp;
  nlp.dim = static_cast<Eigen::Index>(s.active.size());
  nlp.num_eq = static_cast<Eigen::Index>(s.eqs.size());
  nlp.has_band = s.band;
  nlp.band_center = s.band_center;
  nlp.band_width = s.band_width;
  nlp.eval = [&P, &s, mu](const VectorXd& z, bool want_grad, NlpValues& out) {
    const auto x = assemble(s, z);
    const EvalContext octx = context_for(s.tapes, 0, mu);
    const auto m = static_cast<Eigen::Index>(s.eqs.size());
    out.c.resize(m);
    if (want_grad) {
      const DualGradient g = gradient(P.objective, x, octx, s.active);
      out.f = s.objective_dual ? g.value.dual : g.value.real;
      out.grad = pick(s.objective_dual ? g.grad_dual : g.grad_std, s.active);
      if (s.band) {
        out.band = g.value.real;
        out.band_grad = pick(g.grad_std, s.active);
      }
      out.jac.resize(m, static_cast<Eigen::Index>(s.active.size()));
    } else {
      const DualNumber v = P.objective(x, octx);
      out.f = s.objective_dual ? v.dual : v.real;
      out.band = v.real;
    }
    if (s.linear.size() > 0) {
      out.f -= s.linear.dot(z - s.origin);
      if (want_grad) out.grad -= s.linear;
    }
    // Constraints are evaluated once per function even when both parts enter.
    std::size_t last = static_cast<std::size_t>(-1);
    DualGradient hg;
    DualNumber hv;
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto [j, dual] = s.eqs[static_cast<std::size_t>(r)];
      if (j != last) {
        const EvalContext hctx = context_for(s.tapes, 1 + j, 0.0);
        if (want_grad) {
          hg = gradient(P.constraints[j], x, hctx, s.active);
          hv = hg.value;
        } else {
          hv = P.constraints[j](x, hctx);
        }
        last = j;
      }
      out.c[r] = dual ? hv.dual : hv.real;
      if (want_grad) out.jac.row(r) = pick(dual ? hg.grad_dual : hg.grad_std, s.active).transpose();
    }
  };
  return nlp;
}


std::vector<int> standard_coordinates(std::size_t n) {
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 4; ++c) out.push_back(static_cast<int>(8 * i) + c);
  return out;
}

std::vector<int> dual_coordinates(std::size_t n) {
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 4; c < 8; ++c) out.push_back(static_cast<int>(8 * i) + c);
  return out;
}

std::vector<int> all_coordinates(std::size_t n) {
  std::vector<int> out(8 * n);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = static_cast<int>(c);
  return out;
}

// max |h_j|, |(h_j)_d| at x
double constraint_violation(const EqdqoProblem& P, std::span<const DualQuaternion> x) {
  double feas = 0.0;
  for (const auto& h : P.constraints) {
    const DualNumber v = h(x);
    feas = std::max({feas, std::abs(v.real), std::abs(v.dual)});
  }
  return feas;
}

// Branches for Stage II. Norms within kKinkTol of zero are recorded as
// infinitesimal: Stage I reaches a kink only to about tol_app, and the
// appreciable branch there would make the dual part <r/|r|, r_d>, a linear
// function of x_d that is unbounded below, instead of |r_d|.
Tapes record_tapes(const EqdqoProblem& P, std::span<const DualQuaternion> x) {
  Tapes tapes(1 + P.constraints.size());
  EvalContext ctx;
  ctx.tol_app = kKinkTol;
  ctx.record = &tapes[0];
  (void)P.objective(x, ctx);
  for (std::size_t j = 0; j < P.constraints.size(); ++j) {
    EvalContext hctx;
    hctx.record = &tapes[1 + j];
    (void)P.constraints[j](x, hctx);
  }
  return tapes;
}

struct StageRun {
  std::vector<DualQuaternion> point;
  InnerState state;
  int iterations = 0;
  StageStatus status = StageStatus::Converged;
  std::vector<TraceRow> trace;
};

// Smoothing continuation: one augmented Lagrangian run per mu level, warm
// started; only the last level uses the strict tolerances.
StageRun run_stage(const EqdqoProblem& P, const StageSetup& setup, const SolverConfig& cfg, int stage_no) {
  StageRun out;
  out.state.z = extract(setup, setup.base);
  out.state.rho = 10.0;
  const auto schedule = cfg.mu_schedule();
  StageStatus status = StageStatus::Converged;
  for (std::size_t level = 0; level < schedule.size(); ++level) {
    const double mu = schedule[level];
    const bool last = level + 1 == schedule.size();
    InnerOptions opts;
    opts.tol_grad = last ? cfg.tol_grad : std::max(cfg.tol_grad, mu);
    opts.tol_feas = last ? cfg.tol_feas : std::max(cfg.tol_feas, mu);
    opts.max_outer = cfg.max_outer;
    opts.max_inner = cfg.max_inner;
    const Nlp nlp = make_nlp(P, setup, mu);
    const int base_iter = out.iterations;
    auto on_outer = [&](const InnerResult& r) {
      const auto x = assemble(setup, r.state.z);
      const DualNumber v = P.objective(x);
      out.trace.push_back({base_iter + r.iterations, stage_no, v.real, v.dual, r.feasibility, r.lagrangian_grad});
    };
    InnerResult r = inner_solve(nlp, std::move(out.state), opts, on_outer);
    out.state = std::move(r.state);
    out.iterations += r.iterations;
    // Intermediate levels only warm start the next one.
    if (last) status = r.status;
  }
  out.status = status;
  out.point = assemble(setup, out.state.z);
  return out;
}

std::vector<DualQuaternion> restart_start(const EqdqoProblem& P, const SolverConfig& cfg, int k) {
  const std::size_t n = P.arity();
  if (static_cast<std::size_t>(k) < P.initial_guesses.size()) {
    auto x = P.initial_guesses[static_cast<std::size_t>(k)];
    if (P.standard_flag) {
      for (auto& q : x) q.dual = Quaternion();
    }
    return x;
  }
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(k)));
  std::vector<DualQuaternion> x(n);
  for (auto& q : x) q = DualQuaternion(rng.unit_quaternion());
  return x;
}

// ---- kink polish ----------------------------------------------------------
//
// Smoothing locates a nonsmooth minimizer only to about the final smoothing
// level, and where a norm of the objective vanishes at the optimum the
// quasi-Newton iterates stall a little off the kink. The polish pins every
// norm that is nearly zero (its argument becomes a set of equalities and its
// value 0) and solves that smooth program. The result is kept when it does
// not raise the exact objective and every pinned norm's fitted subgradient
// has Euclidean norm <= 1, which makes it a stationary point of the
// nonsmooth program; pins with larger subgradients are released and the
// polish retried.

constexpr double kPinTol = 1e-4;
constexpr int kPolishRounds = 3;

// Number of pinned equalities contributed by each pinned node, in node order.
std::vector<std::size_t> pin_widths(const EqdqoProblem& P, std::span<const DualQuaternion> x,
                                    const std::vector<bool>& pinned) {
  std::vector<std::size_t> out;
  for (std::size_t idx = 0; idx < pinned.size(); ++idx) {
    if (!pinned[idx]) continue;
    std::vector<bool> one(pinned.size(), false);
    one[idx] = true;
    std::vector<Jet> values;
    EvalContext ctx;
    ctx.pinned = &one;
    ctx.pinned_values = &values;
    (void)P.objective(x, ctx);
    out.push_back(values.size());
  }
  return out;
}

std::vector<double> norm_values(const EqdqoProblem& P, std::span<const DualQuaternion> x) {
  std::vector<double> norms;
  EvalContext ctx;
  ctx.norms = &norms;
  (void)P.objective(x, ctx);
  return norms;
}

// Stationarity of the Lagrangian with least-squares multipliers, and the
// constraint violation, as one merit.
struct KktMerit {
  double stationarity = kInf;
  double feasibility = kInf;
  VectorXd lambda;

  double value() const { return std::max(stationarity, feasibility); }
};

KktMerit kkt_merit(const NlpValues& v) {
  KktMerit m;
  m.feasibility = v.c.size() > 0 ? v.c.lpNorm<Eigen::Infinity>() : 0.0;
  if (v.c.size() > 0) {
    m.lambda = -min_norm_ls(v.jac.transpose()).solve(v.grad);
    m.stationarity = (v.grad + v.jac.transpose() * m.lambda).lpNorm<Eigen::Infinity>();
  } else {
    m.lambda.resize(0);
    m.stationarity = v.grad.lpNorm<Eigen::Infinity>();
  }
  return m;
}

// Newton iterations on grad f + J^T lambda = 0, c = 0 with a central
// difference Hessian of the Lagrangian and backtracking on the merit. The
// first-order solve leaves stationarity near 1e-6 when residual norms are
// small (the curvature grows like 1 / |r|); a few Newton steps recover the
// digits. Returns the best point seen.
VectorXd newton_kkt(const Nlp& nlp, VectorXd z, int max_iter = 20) {
  const Eigen::Index n = nlp.dim;
  NlpValues v;
  nlp.eval(z, true, v);
  KktMerit best = kkt_merit(v);
  VectorXd best_z = z;
  KktMerit cur = best;
  for (int it = 0; it < max_iter && best.value() > 1e-13; ++it) {
    const VectorXd& lambda = cur.lambda;
    auto lagrangian_grad = [&](const VectorXd& p) {
      NlpValues w;
      nlp.eval(p, true, w);
      VectorXd g = w.grad;
      if (w.c.size() > 0) g.noalias() += w.jac.transpose() * lambda;
      return g;
    };
    Eigen::MatrixXd H(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(z[k]));
      VectorXd zp = z, zm = z;
      zp[k] += h;
      zm[k] -= h;
      H.col(k) = (lagrangian_grad(zp) - lagrangian_grad(zm)) / (2 * h);
    }
    H = 0.5 * (H + H.transpose()).eval();
    const Eigen::Index m = v.c.size();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = H;
    if (m > 0) {
      K.topRightCorner(n, m) = v.jac.transpose();
      K.bottomLeftCorner(m, n) = v.jac;
    }
    VectorXd rhs(n + m);
    rhs.head(n) = -(v.grad + (m > 0 ? VectorXd(v.jac.transpose() * lambda) : VectorXd::Zero(n)));
    if (m > 0) rhs.tail(m) = -v.c;
    const VectorXd step = min_norm_ls(K).solve(rhs);
    if (!step.allFinite()) break;

    bool moved = false;
    for (double t = 1.0; t >= 1.0 / 64; t *= 0.5) {
      const VectorXd zn = z + t * step.head(n);
      NlpValues vn;
      nlp.eval(zn, true, vn);
      const KktMerit mn = kkt_merit(vn);
      if (std::isfinite(mn.value()) && mn.value() < cur.value()) {
        z = zn;
        v = std::move(vn);
        cur = mn;
        moved = true;
        break;
      }
    }
    if (!moved) break;
    if (cur.value() < best.value()) {
      best = cur;
      best_z = z;
    }
  }
  return best_z;
}

struct Polished {
  std::vector<DualQuaternion> point;
  std::vector<double> subgradients;  // per pinned norm, in node order
  int iterations = 0;
  bool feasible = false;
  double merit = kInf;  // stationarity and feasibility of the smooth program
};

Polished polish_pinned(const EqdqoProblem& P, const SolverConfig& cfg, const std::vector<DualQuaternion>& start,
                       const std::vector<bool>& pinned) {
  StageSetup s;
  s.base = start;
  s.active = standard_coordinates(P.arity());
  const auto m = static_cast<Eigen::Index>(P.constraints.size());
  // Values and derivatives of f, the constraints and the pinned arguments.
  auto evaluate = [&](const VectorXd& z, bool want_grad, NlpValues& out, std::vector<Jet>& pins) {
    const auto x = assemble(s, z);
    pins.clear();
    EvalContext ctx;
    ctx.pinned = &pinned;
    ctx.pinned_values = &pins;
    if (want_grad) {
      const DualGradient g = gradient(P.objective, x, ctx, s.active);
      out.f = g.value.real;
      out.grad = pick(g.grad_std, s.active);
    } else {
      out.f = P.objective(x, ctx).real;
    }
    const auto np = static_cast<Eigen::Index>(pins.size());
    out.c.resize(m + np);
    if (want_grad) out.jac.resize(m + np, static_cast<Eigen::Index>(s.active.size()));
    for (Eigen::Index j = 0; j < m; ++j) {
      if (want_grad) {
        const DualGradient hg = gradient(P.constraints[static_cast<std::size_t>(j)], x, {}, s.active);
        out.c[j] = hg.value.real;
        out.jac.row(j) = pick(hg.grad_std, s.active).transpose();
      } else {
        out.c[j] = P.constraints[static_cast<std::size_t>(j)](x).real;
      }
    }
    for (Eigen::Index k = 0; k < np; ++k) {
      const Jet& v = pins[static_cast<std::size_t>(k)];
      out.c[m + k] = v.value();
      if (want_grad) out.jac.row(m + k) = v.gradient(static_cast<Eigen::Index>(s.active.size())).transpose();
    }
  };

  Nlp nlp;
  nlp.dim = static_cast<Eigen::Index>(s.active.size());
  {
    NlpValues probe;
    std::vector<Jet> pins;
    evaluate(extract(s, start), false, probe, pins);
    nlp.num_eq = probe.c.size();
  }
  nlp.eval = [&](const VectorXd& z, bool want_grad, NlpValues& out) {
    std::vector<Jet> pins;
    evaluate(z, want_grad, out, pins);
  };
  InnerOptions opts;
  opts.tol_grad = cfg.tol_grad;
  opts.tol_feas = std::min(cfg.tol_feas, 0.1 * kTolAppreciable);
  opts.max_outer = cfg.max_outer;
  opts.max_inner = cfg.max_inner;
  VectorXd z = extract(s, start);
  Polished out;
  if (std::find(pinned.begin(), pinned.end(), true) != pinned.end()) {
    InnerState st;
    st.z = z;
    const InnerResult r = inner_solve(nlp, std::move(st), opts);
    out.iterations = r.iterations;
    z = r.state.z;
  }
  z = newton_kkt(nlp, z);
  out.point = assemble(s, z);

  // Minimum-norm multipliers at the polished point; one block of columns per
  // pinned norm.
  NlpValues v;
  std::vector<Jet> pins;
  evaluate(z, true, v, pins);
  out.feasible = feasibility_of(nlp, v) <= opts.tol_feas;
  out.merit = kkt_merit(v).value();
  const Eigen::Index cols = v.jac.rows();
  if (cols > 0) {
    const auto cod = min_norm_ls(v.jac.transpose());
    const VectorXd mult = -cod.solve(v.grad);
    out.subgradients.clear();
    std::size_t offset = static_cast<std::size_t>(m);
    for (const std::size_t w : pin_widths(P, out.point, pinned)) {
      out.subgradients.push_back(mult.segment(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(w)).norm());
      offset += w;
    }
  }
  return out;
}

void polish_kinks(const EqdqoProblem& P, const SolverConfig& cfg, std::vector<DualQuaternion>& point,
                  int& iterations) {
  const auto norms = norm_values(P, point);
  std::vector<bool> pinned(norms.size(), false);
  for (std::size_t i = 0; i < norms.size(); ++i) pinned[i] = norms[i] <= kPinTol;
  // Compared on the continuous standard part: the natural value drops norms
  // below tol_app and would favour the unpolished point by about tol_app.
  auto continuous = [&](std::span<const DualQuaternion> x) {
    EvalContext ctx;
    ctx.tol_app = 0.0;
    return P.objective(x, ctx).real;
  };
  const double f0 = continuous(point);
  const double slack = 1e-8 * std::max(1.0, std::abs(f0));
  // Small residual norms need not be kinks. Pin the k smallest candidates for
  // k = 0, 1, ... and keep the first smooth solve that converges with every
  // pinned subgradient inside the unit ball and every free norm clear of zero.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (pinned[i]) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
  for (std::size_t k = 0; k <= order.size(); ++k) {
    std::vector<bool> pins(norms.size(), false);
    for (std::size_t t = 0; t < k; ++t) pins[order[t]] = true;
    const Polished q = polish_pinned(P, cfg, point, pins);
    iterations += q.iterations;
    if (!q.feasible || q.merit > 1e-8 || continuous(q.point) > f0 + slack) continue;
    if (!std::all_of(q.subgradients.begin(), q.subgradients.end(), [](double g) { return g <= 1.0 + 1e-6; })) continue;
    const auto after = norm_values(P, q.point);
    bool clear = true;
    for (std::size_t i = 0; i < after.size(); ++i) clear = clear && (pins[i] || after[i] > 1e-2 * kPinTol);
    if (!clear) continue;
    point = q.point;
    return;
  }
  if (std::find(pinned.begin(), pinned.end(), true) == pinned.end()) return;
  for (int round = 0; round < kPolishRounds; ++round) {
    const Polished q = polish_pinned(P, cfg, point, pinned);
    iterations += q.iterations;
    if (!q.feasible) return;
    bool released = false;
    std::size_t k = 0;
    for (std::size_t i = 0; i < pinned.size(); ++i) {
      if (!pinned[i]) continue;
      if (q.subgradients[k++] > 1.0 + 1e-6) {
        pinned[i] = false;
        released = true;
      }
    }
    if (!released) {
      // The unpolished point is feasible only to tol_feas, so its value may
      // undercut the stationary one by about that much.
      if (continuous(q.point) <= f0 + slack) point = q.point;
      return;
    }
  }
}

Stage1Result stage1_restart(const EqdqoProblem& P, const SolverConfig& cfg, int k) {
  StageSetup s;
  s.base = restart_start(P, cfg, k);
  const std::size_t n = P.arity();
  s.active = P.standard_flag ? standard_coordinates(n) : all_coordinates(n);
  for (std::size_t j = 0; j < P.constraints.size(); ++j) {
    s.eqs.emplace_back(j, false);
    if (!P.standard_flag) s.eqs.emplace_back(j, true);
  }
  StageRun run = run_stage(P, s, cfg, 1);
  if (P.standard_flag) polish_kinks(P, cfg, run.point, run.iterations);

  Stage1Result r;
  r.point = std::move(run.point);
  r.value = P.objective(r.point).real;
  r.feasibility = 0.0;
  for (const auto& h : P.constraints) {
    const DualNumber v = h(r.point);
    r.feasibility = std::max(r.feasibility, std::abs(v.real));
    if (!P.standard_flag) r.feasibility = std::max(r.feasibility, std::abs(v.dual));
  }
  r.iterations = run.iterations;
  r.restart_index = k;
  r.status = run.status;
  r.trace = std::move(run.trace);
  r.multipliers = analyze_kkt(P, r.point, KktStage::One).multipliers;
  return r;
}

// Runs body(k) for every restart, in parallel when cfg.threads > 1. Results
// do not depend on the thread count.
template <class R, class Body>
std::vector<R> for_each_restart(int count, int threads, Body body) {
  std::vector<R> out(static_cast<std::size_t>(count));
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
  for (int k = 0; k < count; ++k) {
    try {
      out[static_cast<std::size_t>(k)] = body(k);
    } catch (...) {
#pragma omp critical(dqopt_restart_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<Stage1Result> stage1_all(const EqdqoProblem& P, const SolverConfig& cfg) {
  cfg.validate();
  return for_each_restart<Stage1Result>(cfg.restarts, cfg.threads,
                                        [&](int k) { return stage1_restart(P, cfg, k); });
}

[[noreturn]] void throw_no_feasible(const std::vector<Stage1Result>& all) {
  const bool capped = std::any_of(all.begin(), all.end(),
                                  [](const Stage1Result& r) { return r.status == StageStatus::MaxIterations; });
  double best = kInf;
  for (const auto& r : all) best = std::min(best, r.feasibility);
  const std::string msg = "no restart reached the feasibility tolerance (best " + std::to_string(best) + ")";
  throw Error(capped ? Errc::MaxIterations : Errc::Infeasible, msg);
}

std::vector<const Stage1Result*> feasible_of(const std::vector<Stage1Result>& all, double tol_feas) {
  std::vector<const Stage1Result*> out;
  for (const auto& r : all)
    if (r.feasibility <= tol_feas) out.push_back(&r);
  return out;
}

// Minimum-norm Gauss-Newton projection of x_d onto (h_j)_d(x, x_d) = 0.
void project_dual(const EqdqoProblem& P, std::vector<DualQuaternion>& x, double tol) {
  if (P.constraints.empty()) return;
  const auto active = dual_coordinates(x.size());
  const auto m = static_cast<Eigen::Index>(P.constraints.size());
  for (int it = 0; it < 10; ++it) {
    VectorXd c(m);
    Eigen::MatrixXd J(m, static_cast<Eigen::Index>(active.size()));
    for (Eigen::Index j = 0; j < m; ++j) {
      const DualGradient g = gradient(P.constraints[static_cast<std::size_t>(j)], x, {}, active);
      c[j] = g.value.dual;
      J.row(j) = pick(g.grad_dual, active).transpose();
    }
    if (c.lpNorm<Eigen::Infinity>() <= tol) return;
    const VectorXd step = min_norm_ls(J).solve(c);
    for (std::size_t k = 0; k < active.size(); ++k) {
      set_coordinate(x, active[k], get_coordinate(x, active[k]) - step[static_cast<Eigen::Index>(k)]);
    }
  }
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Stage1Result solve_stage1(const EqdqoProblem& P, const SolverConfig& cfg) {
  const auto all = stage1_all(P, cfg);
  const auto feasible = feasible_of(all, cfg.tol_feas);
  if (feasible.empty()) throw_no_feasible(all);
  const Stage1Result* best = feasible.front();
  for (const auto* r : feasible)
    if (r->value < best->value) best = r;
  return *best;
}

SolveReport solve_stage2(const EqdqoProblem& P, const Stage1Result& stage1, const SolverConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = P.arity();

  StageSetup s;
  s.base = stage1.point;
  if (P.standard_flag) {
    for (auto& q : s.base) q.dual = Quaternion();
    project_dual(P, s.base, cfg.tol_feas);
    s.active = dual_coordinates(n);
    for (std::size_t j = 0; j < P.constraints.size(); ++j) s.eqs.emplace_back(j, true);
  } else {
    s.active = all_coordinates(n);
    for (std::size_t j = 0; j < P.constraints.size(); ++j) {
      s.eqs.emplace_back(j, false);
      s.eqs.emplace_back(j, true);
    }
    s.band = true;
    s.band_center = stage1.value;
    s.band_width = cfg.band_width(stage1.value);
  }
  s.objective_dual = true;
  const Tapes tapes = record_tapes(P, s.base);
  s.tapes = &tapes;
  if (P.standard_flag) {
    // With x fixed, every appreciable norm contributes grad f(x) . x_d to f_d.
    // At an exact Stage I stationary point that slope is balanced by the
    // constraints and kink subgradients; the leftover Stage I residual would
    // otherwise be an unbounded descent direction, so it is removed.
    const VectorXd r = analyze_kkt(P, s.base, KktStage::One).stationarity;
    s.linear.resize(static_cast<Eigen::Index>(s.active.size()));
    for (std::size_t k = 0; k < s.active.size(); ++k) s.linear[static_cast<Eigen::Index>(k)] = r[s.active[k] - 4];
    s.origin = extract(s, s.base);
  }

  StageRun run = run_stage(P, s, cfg, 2);

  SolveReport rep;
  rep.solution = run.point;
  const DualNumber v = P.objective(rep.solution);
  rep.stage1_value = v.real;
  rep.stage2_value = v.dual;
  rep.feasibility = constraint_violation(P, rep.solution);
  rep.iterations_stage1 = stage1.iterations;
  rep.iterations_stage2 = run.iterations;
  rep.restart_index = stage1.restart_index;
  rep.status_stage1 = stage1.status;
  rep.status_stage2 = run.status;
  if (rep.feasibility > cfg.tol_feas && rep.status_stage2 == StageStatus::Converged) {
    rep.status_stage2 = StageStatus::Infeasible;
  }

  const KktAnalysis k1 = analyze_kkt(P, rep.solution, KktStage::One);
  rep.stage1_multipliers = k1.multipliers;
  rep.kkt_residual_stage1 = k1.residual;
  rep.kkt_degenerate_stage1 = k1.degenerate;
  const KktAnalysis k2 = analyze_kkt(P, rep.solution, KktStage::Two, nullptr, &tapes);
  rep.stage2_multipliers = k2.multipliers;
  rep.kkt_residual_stage2 = k2.residual;
  rep.kkt_degenerate_stage2 = k2.degenerate;

  rep.trace = stage1.trace;
  rep.trace.insert(rep.trace.end(), run.trace.begin(), run.trace.end());
  rep.wall_time_ms = elapsed_ms(t0);
  return rep;
}

SolveReport solve_eqdqo(const EqdqoProblem& P, const SolverConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto all = stage1_all(P, cfg);
  const auto feasible = feasible_of(all, cfg.tol_feas);
  if (feasible.empty()) throw_no_feasible(all);

  double L = kInf;
  for (const auto* r : feasible) L = std::min(L, r->value);
  const double tau = cfg.band_width(L);
  std::vector<const Stage1Result*> candidates;
  for (const auto* r : feasible)
    if (r->value <= L + tau) candidates.push_back(r);

  auto reports = for_each_restart<SolveReport>(static_cast<int>(candidates.size()), cfg.threads, [&](int k) {
    return solve_stage2(P, *candidates[static_cast<std::size_t>(k)], cfg);
  });

  const SolveReport* best = nullptr;
  for (const auto& r : reports) {
    if (r.feasibility > cfg.tol_feas) continue;
    if (best == nullptr || r.stage2_value < best->stage2_value) best = &r;
  }
  if (best == nullptr) throw Error(Errc::Infeasible, "no Stage II candidate satisfied the constraints");
  SolveReport out = *best;
  out.wall_time_ms = elapsed_ms(t0);
  return out;
}

// ---- KKT ------------------------------------------------------------------

KktAnalysis analyze_kkt(const EqdqoProblem& P, std::span<const DualQuaternion> x, KktStage stage,
                        const StageMultipliers* multipliers, const Tapes* tapes) {
  const std::size_t m = P.constraints.size();
  std::vector<KinkGroup> kinks;
  EvalContext octx = context_for(tapes, 0, 0.0);
  octx.kinks = &kinks;
  const DualGradient gf = gradient(P.objective, x, octx);
  std::vector<DualGradient> gh;
  gh.reserve(m);
  for (std::size_t j = 0; j < m; ++j) gh.push_back(gradient(P.constraints[j], x, context_for(tapes, 1 + j, 0.0)));

  const bool stage2 = stage == KktStage::Two;
  const bool dual_only = stage2 && P.standard_flag;
  const bool with_sigma = stage2 && !dual_only;
  const bool with_lambda = !dual_only;
  const bool with_mu = stage2 || !P.standard_flag;
  const std::vector<int> rows = dual_only ? dual_coordinates(x.size()) : all_coordinates(x.size());
  const VectorXd g0 = pick(stage2 ? gf.grad_dual : gf.grad_std, rows);
  const Eigen::Index nr = g0.size();

  // Constraint columns first, then one block of free columns per kink group.
  std::vector<VectorXd> cons;
  if (with_sigma) cons.push_back(pick(gf.grad_std, rows));
  if (with_lambda)
    for (std::size_t j = 0; j < m; ++j) cons.push_back(pick(gh[j].grad_std, rows));
  if (with_mu)
    for (std::size_t j = 0; j < m; ++j) cons.push_back(pick(gh[j].grad_dual, rows));
  std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks;  // (first column, width) of checked groups
  std::vector<VectorXd> free_cols;
  for (const KinkGroup& g : kinks) {
    // Stage I balances the standard part, Stage II the dual part; a generic
    // Stage II also carries sigma times the standard-part subgradient.
    if (g.dual != stage2 && !(with_sigma && !g.dual)) continue;
    const auto first = static_cast<Eigen::Index>(cons.size() + free_cols.size());
    for (const VectorXd& c : g.columns) free_cols.push_back(pick(c, rows));
    if (g.dual == stage2) blocks.emplace_back(first, static_cast<Eigen::Index>(g.columns.size()));
  }
  const auto nc = static_cast<Eigen::Index>(cons.size());
  const auto cols = nc + static_cast<Eigen::Index>(free_cols.size());
  Eigen::MatrixXd A(nr, cols);
  for (Eigen::Index c = 0; c < nc; ++c) A.col(c) = cons[static_cast<std::size_t>(c)];
  for (std::size_t c = 0; c < free_cols.size(); ++c) A.col(nc + static_cast<Eigen::Index>(c)) = free_cols[c];

  KktAnalysis out;
  VectorXd mult = VectorXd::Zero(cols);
  if (multipliers != nullptr) {
    Eigen::Index col = 0;
    if (with_sigma) mult[col++] = multipliers->sigma;
    if (with_lambda)
      for (std::size_t j = 0; j < m; ++j) mult[col++] = j < multipliers->lambda.size() ? multipliers->lambda[j] : 0.0;
    if (with_mu)
      for (std::size_t j = 0; j < m; ++j) mult[col++] = j < multipliers->mu.size() ? multipliers->mu[j] : 0.0;
    if (cols > nc) {
      // subgradients stay free: fit them to what the given multipliers leave
      const VectorXd rest = g0 + A.leftCols(nc) * mult.head(nc);
      const auto cod = min_norm_ls(A.rightCols(cols - nc));
      mult.tail(cols - nc) = -cod.solve(rest);
    }
  } else if (cols > 0) {
    const auto cod = min_norm_ls(A);
    mult = -cod.solve(g0);
    if (nc > 0) {
      const auto ccod = min_norm_ls(A.leftCols(nc));
      out.degenerate = ccod.rank() < nc;
    }
  }
  const VectorXd res = cols > 0 ? VectorXd(g0 + A * mult) : g0;
  out.residual = res.norm();
  out.stationarity = VectorXd::Zero(static_cast<Eigen::Index>(8 * x.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out.stationarity[rows[k]] = res[static_cast<Eigen::Index>(k)];
  out.kinks = static_cast<int>(blocks.size());
  for (const auto& [first, width] : blocks) {
    out.max_subgradient = std::max(out.max_subgradient, mult.segment(first, width).norm());
  }

  Eigen::Index col = 0;
  out.multipliers.lambda.assign(m, 0.0);
  out.multipliers.mu.assign(m, 0.0);
  if (with_sigma) out.multipliers.sigma = mult[col++];
  if (with_lambda)
    for (std::size_t j = 0; j < m; ++j) out.multipliers.lambda[j] = mult[col++];
  if (with_mu)
    for (std::size_t j = 0; j < m; ++j) out.multipliers.mu[j] = mult[col++];
  return out;
}

double kkt_residual(const EqdqoProblem& P, std::span<const DualQuaternion> point, KktStage stage,
                    const StageMultipliers* multipliers) {
  const KktAnalysis a = analyze_kkt(P, point, stage, multipliers);
  if (multipliers == nullptr && a.degenerate) {
    throw Error(Errc::DegenerateConstraintGradients, "constraint gradients are linearly dependent at this point");
  }
  return a.residual;
}

}  // namespace dqopt
