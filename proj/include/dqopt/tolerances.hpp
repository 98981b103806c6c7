#pragma once

namespace dqopt {

// Standard parts with magnitude at or below this are treated as zero when
// choosing the branch of the magnitude / 2-norm definitions.
inline constexpr double kTolAppreciable = 1e-8;

// Unit validation tolerance for quaternions and dual quaternions.
inline constexpr double kTolUnit = 1e-9;

// Inputs this close to unit are normalized instead of rejected.
inline constexpr double kUnitNormalizeBand = 1e-6;

// Norms at or below this at a solver output are taken to sit at their kink:
// the iterates approach a nonsmooth minimizer only to about tol_app, so a
// residual of 1e-8 and one of exactly 0 describe the same limit point.
inline constexpr double kKinkTol = 1e-6;

}  // namespace dqopt
