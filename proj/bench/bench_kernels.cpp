// Serial reference vs OpenMP kernels. Arg(0) runs the serial path, Arg(1) the
// parallel one; sizes are fixed so the two rows compare directly.

#include <vector>

#include <benchmark/benchmark.h>

#include "dqopt/handeye.hpp"
#include "dqopt/kernels.hpp"
#include "dqopt/posegraph.hpp"
#include "dqopt/random.hpp"

using namespace dqopt;

namespace {

constexpr std::size_t kPoses = 20000;
constexpr std::size_t kEdges = 400000;
constexpr int kPoints = 2000;

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

void BM_EdgeErrors(benchmark::State& state) {
  Rng rng(1);
  std::vector<DualQuaternion> poses;
  for (std::size_t i = 0; i < kPoses; ++i) {
    poses.push_back(udq_from_pose(rng.unit_quaternion(), Quaternion::imaginary(rng.normal(), rng.normal(), 0)).value());
  }
  std::vector<EdgeTerm> edges;
  for (std::size_t k = 0; k < kEdges; ++k) {
    const std::size_t i = rng.index(kPoses), j = (i + 1 + rng.index(kPoses - 1)) % kPoses;
    edges.push_back({i, j, poses[i].conj() * poses[j]});
  }
  const Exec exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(edge_errors(poses, edges, exec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kEdges));
  state.counters["threads"] = exec == Exec::Serial ? 1 : max_threads();
}

void BM_EvaluateBatch(benchmark::State& state) {
  const PgoInstance inst = generate_cycle_graph(30, 20, 0.01, 0.01, 2);
  const DualFunction f = build_pgo(inst.graph).objective;
  Rng rng(3);
  std::vector<std::vector<DualQuaternion>> points(kPoints);
  for (auto& p : points) {
    for (std::size_t i = 0; i < inst.graph.n; ++i) {
      p.push_back(udq_from_pose(rng.unit_quaternion(), Quaternion::imaginary(rng.normal(), rng.normal(), 0)).value());
    }
  }
  const Exec exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_batch(f, points, exec));
  state.SetItemsProcessed(state.iterations() * kPoints);
  state.counters["threads"] = exec == Exec::Serial ? 1 : max_threads();
}

}  // namespace

BENCHMARK(BM_EdgeErrors)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_EvaluateBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
