#include "cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dqopt/errors.hpp"
#include "dqopt/handeye.hpp"
#include "dqopt/posegraph.hpp"
#include "dqopt/selftest.hpp"
#include "dqopt/serialize.hpp"

namespace dqopt::cli {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Empty path or "-" means `out`.
void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot write " + path);
  f << text;
  if (!f) throw Error(Errc::Io, "write failed for " + path);
}

Json parse_json(const std::string& text, const std::string& path) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, path + ": " + e.what());
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("DQOPT_SEED");
  if (!s || !*s) return std::nullopt;
  std::uint64_t v = 0;
  const std::string str(s);
  const auto res = std::from_chars(str.data(), str.data() + str.size(), v);
  if (res.ec != std::errc() || res.ptr != str.data() + str.size()) {
    throw Error(Errc::InvalidArgument, "DQOPT_SEED must be a non-negative integer, got \"" + str + "\"");
  }
  return v;
}

// Precedence: DQOPT_SEED, then --seed, then `fallback`.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (const auto e = env_seed()) return *e;
  return flag.value_or(fallback);
}

struct SolverFlags {
  std::optional<int> restarts, max_outer, max_inner, threads;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_grad, tol_feas, tau_l, mu_min;
  std::string csv;

  void attach(CLI::App* app) {
    app->add_option("--restarts", restarts, "Stage I restarts");
    app->add_option("--seed", seed, "Restart seed (DQOPT_SEED overrides)");
    app->add_option("--tol-grad", tol_grad, "Inner gradient tolerance");
    app->add_option("--tol-feas", tol_feas, "Feasibility tolerance");
    app->add_option("--tau-l", tau_l, "Stage II band half-width");
    app->add_option("--mu-min", mu_min, "Final smoothing level");
    app->add_option("--max-outer", max_outer, "Augmented Lagrangian iterations per smoothing level");
    app->add_option("--max-inner", max_inner, "Quasi-Newton iterations per outer iteration");
    app->add_option("--threads", threads, "Threads for restarts and kernels");
    app->add_option("--csv", csv, "Write the per-iteration trace as CSV");
  }

  SolverConfig resolve(std::uint64_t fallback_seed) const {
    SolverConfig c;
    if (restarts) c.restarts = *restarts;
    c.seed = resolve_seed(seed, fallback_seed);
    if (tol_grad) c.tol_grad = *tol_grad;
    if (tol_feas) c.tol_feas = *tol_feas;
    if (tau_l) c.tau_l = *tau_l;
    if (mu_min) {
      c.mu_min = *mu_min;
      c.mu_max = std::max(c.mu_max, c.mu_min);
    }
    if (max_outer) c.max_outer = *max_outer;
    if (max_inner) c.max_inner = *max_inner;
    if (threads) c.threads = *threads;
    c.validate();
    return c;
  }
};

bool converged(const SolveReport& r) {
  return r.status_stage1 == StageStatus::Converged && r.status_stage2 == StageStatus::Converged;
}

int finish_solve(const SolveReport& report, Json j, const SolverConfig& cfg, const std::string& command,
                 const std::string& out_path, const std::string& csv, std::ostream& out, std::ostream& err) {
  j["command"] = command;
  j["config"] = to_json(cfg);
  write_output(out_path, j.dump(2) + "\n", out);
  if (!csv.empty()) write_output(csv, trace_csv(report.trace), out);
  if (!converged(report)) {
    err << command << ": solver did not converge (stage I " << to_string(report.status_stage1) << ", stage II "
        << to_string(report.status_stage2) << ")\n";
    return 1;
  }
  return 0;
}

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::Infeasible:
    case Errc::MaxIterations:
    case Errc::DegenerateConstraintGradients:
      return 1;
    default:
      return 2;
  }
}

std::string summary_line(const std::string& path, const Json& j) {
  auto num = [&](const char* key, const char* sub = nullptr) -> std::string {
    const Json* v = j.contains(key) ? &j[key] : nullptr;
    if (v && sub) v = v->contains(sub) ? &(*v)[sub] : nullptr;
    return v && v->is_number() ? format_double(v->get<double>()) : "-";
  };
  auto str = [&](const char* key, const char* sub) -> std::string {
    if (!j.contains(key) || !j[key].contains(sub)) return "-";
    return j[key][sub].get<std::string>();
  };
  std::string rot = num("rotation_error");
  if (rot == "-") rot = num("max_rotation_error");
  return path + "\t" + num("stage1_value") + "\t" + num("stage2_value") + "\t" + num("kkt_residual", "stage1") +
         "\t" + num("kkt_residual", "stage2") + "\t" + str("status", "stage1") + "\t" + str("status", "stage2") +
         "\t" + rot + "\t" + num("translation_error") + "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual quaternion optimization: hand-eye calibration and pose graphs", "dqopt"};
  app.require_subcommand(1);

  // gen-handeye
  auto* gen_he = app.add_subcommand("gen-handeye", "Generate a synthetic hand-eye dataset");
  std::string he_model = "axxb", gen_out;
  int he_motions = 5;
  double noise_rot = 0.0, noise_trans = 0.0;
  std::optional<std::uint64_t> gen_seed;
  gen_he->add_option("--model", he_model, "axxb or axyb")->check(CLI::IsMember({"axxb", "axyb"}));
  gen_he->add_option("--motions", he_motions, "Relative motions (axxb) or pose pairs (axyb)");
  gen_he->add_option("--noise-rot", noise_rot, "Rotation noise sigma, rad")->check(CLI::NonNegativeNumber);
  gen_he->add_option("--noise-trans", noise_trans, "Translation noise sigma")->check(CLI::NonNegativeNumber);
  gen_he->add_option("--seed", gen_seed, "Generator seed (DQOPT_SEED overrides)");
  gen_he->add_option("--out", gen_out, "Output dataset JSON");

  // solve-handeye
  auto* solve_he = app.add_subcommand("solve-handeye", "Solve a hand-eye dataset");
  std::string in_path, out_path, truth_path;
  SolverFlags flags;
  solve_he->add_option("--in", in_path, "Dataset JSON")->required();
  solve_he->add_option("--out", out_path, "Output report JSON");
  flags.attach(solve_he);

  // gen-pgo
  auto* gen_pgo = app.add_subcommand("gen-pgo", "Generate a synthetic cycle pose graph");
  std::size_t vertices = 10, closures = 3;
  std::string gen_truth;
  gen_pgo->add_option("--vertices", vertices, "Number of poses");
  gen_pgo->add_option("--loop-closures", closures, "Chords besides the cycle");
  gen_pgo->add_option("--noise-rot", noise_rot, "Rotation noise sigma, rad")->check(CLI::NonNegativeNumber);
  gen_pgo->add_option("--noise-trans", noise_trans, "Translation noise sigma")->check(CLI::NonNegativeNumber);
  gen_pgo->add_option("--seed", gen_seed, "Generator seed (DQOPT_SEED overrides)");
  gen_pgo->add_option("--out", gen_out, "Output graph file");
  gen_pgo->add_option("--truth", gen_truth, "Output ground-truth poses (VERTEX records)");

  // solve-pgo
  auto* solve_pgo_cmd = app.add_subcommand("solve-pgo", "Solve a pose graph");
  solve_pgo_cmd->add_option("--in", in_path, "Graph file")->required();
  solve_pgo_cmd->add_option("--truth", truth_path, "Ground-truth poses for per-vertex errors");
  solve_pgo_cmd->add_option("--out", out_path, "Output report JSON");
  flags.attach(solve_pgo_cmd);

  // selftest
  auto* selftest = app.add_subcommand("selftest", "Run the algebra, order, standardness and gradient suites");
  std::optional<std::uint64_t> test_seed;
  selftest->add_option("--seed", test_seed, "Suite seed (DQOPT_SEED overrides)");

  // report
  auto* report = app.add_subcommand("report", "Tabulate solve reports");
  std::vector<std::string> report_in;
  report->add_option("--in", report_in, "Report JSON files")->required();
  report->add_option("--out", out_path, "Output table (TSV)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    // Help for the deepest subcommand that was parsed.
    const CLI::App* target = &app;
    for (const CLI::App* sub = target; sub != nullptr;) {
      target = sub;
      const auto parsed = sub->get_subcommands();
      sub = parsed.empty() ? nullptr : parsed.front();
    }
    out << target->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "dqopt: " << e.what() << "\n";
    err << "run 'dqopt --help' for usage\n";
    return 2;
  }

  try {
    if (*gen_he) {
      const HandEyeModel model = he_model == "axyb" ? HandEyeModel::AXYB : HandEyeModel::AXXB;
      const auto d = generate_synthetic(model, he_motions, noise_rot, noise_trans, resolve_seed(gen_seed, 0));
      write_output(gen_out, to_json(d).dump(2) + "\n", out);
      return 0;
    }
    if (*solve_he) {
      const HandEyeDataset d = handeye_from_json(parse_json(read_file(in_path), in_path));
      const SolverConfig cfg = flags.resolve(d.generator ? d.generator->seed : 0);
      const HandEyeResult r = solve_handeye(d, cfg);
      for (const auto& w : r.warnings) err << "warning: " << w << "\n";
      return finish_solve(r.report, to_json(r), cfg, "solve-handeye", out_path, flags.csv, out, err);
    }
    if (*gen_pgo) {
      const std::uint64_t seed = resolve_seed(gen_seed, 0);
      const PgoInstance inst = generate_cycle_graph(vertices, closures, noise_rot, noise_trans, seed);
      const std::string header = "# cycle graph: vertices " + std::to_string(vertices) + ", loop closures " +
                                 std::to_string(closures) + ", noise_rot " + format_double(noise_rot) +
                                 ", noise_trans " + format_double(noise_trans) + ", seed " + std::to_string(seed) +
                                 "\n";
      write_output(gen_out, header + serialize_graph(inst.graph), out);
      if (!gen_truth.empty()) {
        PoseGraph truth;
        for (std::size_t i = 0; i < inst.truth.size(); ++i) truth.set_guess(i + 1, inst.truth[i]);
        write_output(gen_truth, "# ground truth\n" + serialize_graph(truth), out);
      }
      return 0;
    }
    if (*solve_pgo_cmd) {
      const PoseGraph g = parse_graph(read_file(in_path));
      std::optional<std::vector<Pose>> truth;
      if (!truth_path.empty()) {
        const PoseGraph t = parse_graph(read_file(truth_path));
        if (t.n != g.n || t.guesses.size() != g.n) {
          throw Error(Errc::InvalidArgument, "ground truth must give a VERTEX record for every vertex");
        }
        truth.emplace();
        for (const auto& p : t.guesses) {
          if (!p) throw Error(Errc::InvalidArgument, "ground truth must give a VERTEX record for every vertex");
          truth->push_back(*p);
        }
      }
      const SolverConfig cfg = flags.resolve(0);
      const PgoResult r = solve_pgo(g, cfg, truth);
      return finish_solve(r.report, to_json(r), cfg, "solve-pgo", out_path, flags.csv, out, err);
    }
    if (*selftest) {
      const auto suites = run_selftest(resolve_seed(test_seed, 0));
      int passed = 0;
      for (const auto& s : suites) {
        out << s.name << ": " << (s.passed() ? "pass" : "FAIL") << ", " << s.checks << " checks, " << s.failures
            << " failures, worst " << format_double(s.worst) << " (bound " << format_double(s.bound) << ")\n";
        passed += s.passed() ? 1 : 0;
      }
      out << "selftest: " << passed << "/" << suites.size() << " suites passed\n";
      return passed == static_cast<int>(suites.size()) ? 0 : 1;
    }
    if (*report) {
      std::string table = "file\tstage1\tstage2\tkkt1\tkkt2\tstatus1\tstatus2\trotation_error\ttranslation_error\n";
      for (const auto& path : report_in) table += summary_line(path, parse_json(read_file(path), path));
      write_output(out_path, table, out);
      return 0;
    }
  } catch (const Error& e) {
    err << "dqopt: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "dqopt: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace dqopt::cli
