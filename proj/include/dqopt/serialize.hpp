#pragma once

// JSON forms. Quaternions are [w, x, y, z]; dual quaternions are
// {"std": [..], "dual": [..]}. Objects use insertion-ordered keys so files are
// byte-reproducible.

#include "json.hpp"

#include "dqopt/dual_quaternion.hpp"
#include "dqopt/solver.hpp"

namespace dqopt {

using Json = nlohmann::ordered_json;

Json to_json(const Quaternion& q);
Json to_json(const DualQuaternion& q);
Json to_json(const SolverConfig& cfg);
Json to_json(const StageMultipliers& m);
// wall_time_ms is the last key so that determinism checks can drop it.
Json to_json(const SolveReport& r);

// Throw ParseError (line 0) on malformed input.
Quaternion quaternion_from_json(const Json& j);
DualQuaternion dual_quaternion_from_json(const Json& j);
// Missing keys keep their defaults; unknown keys are rejected.
SolverConfig solver_config_from_json(const Json& j);

// CSV rows: iter,stage,objective_std,objective_dual,feasibility,kkt_residual
std::string trace_csv(const std::vector<TraceRow>& rows);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace dqopt
