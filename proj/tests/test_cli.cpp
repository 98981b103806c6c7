#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "dqopt/serialize.hpp"

using namespace dqopt;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dqopt_cli_" + std::to_string(std::rand()) + "_" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string without_wall_time(const std::string& report) {
  Json j = Json::parse(report);
  j.erase("wall_time_ms");
  return j.dump();
}

}  // namespace

TEST_CASE("noiseless hand-eye pipeline") {
  TempDir dir;
  REQUIRE(run({"gen-handeye", "--model", "axxb", "--motions", "5", "--noise-rot", "0", "--noise-trans", "0",
               "--seed", "7", "--out", dir / "d.json"})
              .code == 0);
  const Run r = run({"solve-handeye", "--in", dir / "d.json", "--restarts", "8", "--out", dir / "r.json", "--csv",
                     dir / "r.csv"});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(slurp(dir / "r.json"));
  CHECK(j["rotation_error"].get<double>() <= 1e-6);
  CHECK(j["translation_error"].get<double>() <= 1e-6);
  CHECK(j["config"]["restarts"] == 8);
  // The solver seed falls back to the generator's seed.
  CHECK(j["config"]["seed"] == 7);
  CHECK(slurp(dir / "r.csv").rfind("iter,stage,objective_std,objective_dual,feasibility,kkt_residual\n", 0) == 0);
}

TEST_CASE("error exits") {
  CHECK(run({"solve-pgo", "--in", "does-not-exist.txt"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"selftest", "--no-such-flag"}).code == 2);
  CHECK(run({"gen-handeye", "--model", "axzb"}).code == 2);
  CHECK(run({"gen-handeye", "--noise-rot", "-1"}).code == 2);
  const Run help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("Usage: dqopt") != std::string::npos);
  CHECK(run({"solve-pgo", "--help"}).out.find("--truth") != std::string::npos);

  TempDir dir;
  std::ofstream(dir / "bad.txt") << "EDGE 1 2 1 0 0\n";
  const Run bad = run({"solve-pgo", "--in", dir / "bad.txt"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("line 1") != std::string::npos);

  std::ofstream(dir / "apart.txt") << "EDGE 1 2 1 0 0 0 0 0 0\nEDGE 3 4 1 0 0 0 0 0 0\n";
  CHECK(run({"solve-pgo", "--in", dir / "apart.txt"}).code == 2);
}

TEST_CASE("solver failure exits 1 and still writes the report") {
  TempDir dir;
  REQUIRE(run({"gen-handeye", "--model", "axyb", "--motions", "6", "--noise-rot", "0.05", "--noise-trans", "0.05",
               "--seed", "1", "--out", dir / "d.json"})
              .code == 0);
  const Run r = run({"solve-handeye", "--in", dir / "d.json", "--restarts", "1", "--max-outer", "1", "--max-inner",
                     "2", "--out", dir / "r.json"});
  CHECK(r.code == 1);
}

TEST_CASE("selftest") {
  const Run r = run({"selftest"});
  CHECK(r.code == 0);
  CHECK(r.out.find("selftest: 4/4 suites passed") != std::string::npos);
}

TEST_CASE("byte-identical reports for fixed seeds") {
  TempDir dir;
  REQUIRE(run({"gen-pgo", "--vertices", "6", "--loop-closures", "2", "--noise-rot", "0.01", "--noise-trans",
               "0.01", "--seed", "5", "--out", dir / "g.txt", "--truth", dir / "t.txt"})
              .code == 0);
  REQUIRE(run({"gen-pgo", "--vertices", "6", "--loop-closures", "2", "--noise-rot", "0.01", "--noise-trans",
               "0.01", "--seed", "5", "--out", dir / "g2.txt"})
              .code == 0);
  CHECK(slurp(dir / "g.txt") == slurp(dir / "g2.txt"));

  const std::vector<std::string> solve{"solve-pgo", "--in",        dir / "g.txt", "--truth", dir / "t.txt",
                                       "--restarts", "2",          "--seed",      "3",       "--out"};
  auto with_out = [&](const std::string& name) {
    auto a = solve;
    a.push_back(dir / name);
    return a;
  };
  REQUIRE(run(with_out("a.json")).code == 0);
  REQUIRE(run(with_out("b.json")).code == 0);
  const std::string a = slurp(dir / "a.json"), b = slurp(dir / "b.json");
  CHECK(without_wall_time(a) == without_wall_time(b));
  const Json j = Json::parse(a);
  CHECK(j["vertex_errors"].size() == 6);

  const Run table = run({"report", "--in", dir / "a.json"});
  CHECK(table.code == 0);
  CHECK(table.out.find("a.json\t") != std::string::npos);
}

TEST_CASE("DQOPT_SEED overrides --seed") {
  TempDir dir;
  ::setenv("DQOPT_SEED", "11", 1);
  const Run a = run({"gen-handeye", "--seed", "3", "--out", dir / "a.json"});
  ::unsetenv("DQOPT_SEED");
  const Run b = run({"gen-handeye", "--seed", "11", "--out", dir / "b.json"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));

  ::setenv("DQOPT_SEED", "not-a-number", 1);
  CHECK(run({"gen-handeye", "--out", dir / "c.json"}).code == 2);
  ::unsetenv("DQOPT_SEED");
}
