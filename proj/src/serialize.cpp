#include "dqopt/serialize.hpp"

#include <charconv>
#include <set>
#include <string>

namespace dqopt {

Json to_json(const Quaternion& q) { return Json::array({q.w, q.x, q.y, q.z}); }

Json to_json(const DualQuaternion& q) {
  Json j;
  j["std"] = to_json(q.real);
  j["dual"] = to_json(q.dual);
  return j;
}

Json to_json(const SolverConfig& cfg) {
  Json j;
  j["restarts"] = cfg.restarts;
  j["seed"] = cfg.seed;
  j["tol_grad"] = cfg.tol_grad;
  j["tol_feas"] = cfg.tol_feas;
  j["mu_max"] = cfg.mu_max;
  j["mu_min"] = cfg.mu_min;
  j["mu_factor"] = cfg.mu_factor;
  j["tau_l"] = cfg.tau_l ? Json(*cfg.tau_l) : Json(nullptr);
  j["max_outer"] = cfg.max_outer;
  j["max_inner"] = cfg.max_inner;
  j["threads"] = cfg.threads;
  return j;
}

Json to_json(const StageMultipliers& m) {
  Json j;
  j["lambda"] = m.lambda;
  j["mu"] = m.mu;
  j["sigma"] = m.sigma;
  return j;
}

Json to_json(const SolveReport& r) {
  Json j;
  j["label"] = "best found";
  j["stage1_value"] = r.stage1_value;
  j["stage2_value"] = r.stage2_value;
  Json sol = Json::array();
  for (const auto& q : r.solution) sol.push_back(to_json(q));
  j["solution"] = std::move(sol);
  j["multipliers"] = {{"stage1", to_json(r.stage1_multipliers)}, {"stage2", to_json(r.stage2_multipliers)}};
  j["kkt_residual"] = {{"stage1", r.kkt_residual_stage1}, {"stage2", r.kkt_residual_stage2}};
  j["kkt_degenerate"] = {{"stage1", r.kkt_degenerate_stage1}, {"stage2", r.kkt_degenerate_stage2}};
  j["feasibility"] = r.feasibility;
  j["iterations"] = {{"stage1", r.iterations_stage1}, {"stage2", r.iterations_stage2}};
  j["status"] = {{"stage1", to_string(r.status_stage1)}, {"stage2", to_string(r.status_stage2)}};
  j["restart_index"] = r.restart_index;
  j["wall_time_ms"] = r.wall_time_ms;
  return j;
}

namespace {

double number(const Json& j, const char* what) {
  if (!j.is_number()) throw ParseError(0, std::string(what) + " must be a number");
  return j.get<double>();
}

}  // namespace

Quaternion quaternion_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError(0, "quaternion must be an array of 4 numbers");
  return {number(j[0], "w"), number(j[1], "x"), number(j[2], "y"), number(j[3], "z")};
}

DualQuaternion dual_quaternion_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("std") || !j.contains("dual")) {
    throw ParseError(0, "dual quaternion must have \"std\" and \"dual\"");
  }
  return {quaternion_from_json(j["std"]), quaternion_from_json(j["dual"])};
}

SolverConfig solver_config_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError(0, "solver config must be an object");
  static const std::set<std::string> known{"restarts", "seed",      "tol_grad",  "tol_feas",  "mu_max", "mu_min",
                                           "mu_factor", "tau_l",    "max_outer", "max_inner", "threads"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ParseError(0, "unknown solver config key \"" + k + "\"");
  }
  SolverConfig c;
  try {
    if (j.contains("restarts")) c.restarts = j["restarts"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("tol_grad")) c.tol_grad = number(j["tol_grad"], "tol_grad");
    if (j.contains("tol_feas")) c.tol_feas = number(j["tol_feas"], "tol_feas");
    if (j.contains("mu_max")) c.mu_max = number(j["mu_max"], "mu_max");
    if (j.contains("mu_min")) c.mu_min = number(j["mu_min"], "mu_min");
    if (j.contains("mu_factor")) c.mu_factor = number(j["mu_factor"], "mu_factor");
    if (j.contains("tau_l") && !j["tau_l"].is_null()) c.tau_l = number(j["tau_l"], "tau_l");
    if (j.contains("max_outer")) c.max_outer = j["max_outer"].get<int>();
    if (j.contains("max_inner")) c.max_inner = j["max_inner"].get<int>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, e.what());
  }
  c.validate();
  return c;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::string out = "iter,stage,objective_std,objective_dual,feasibility,kkt_residual\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iter) + "," + std::to_string(r.stage) + "," + format_double(r.objective_std) + "," +
           format_double(r.objective_dual) + "," + format_double(r.feasibility) + "," +
           format_double(r.kkt_residual) + "\n";
  }
  return out;
}

}  // namespace dqopt
