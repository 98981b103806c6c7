#pragma once

// Randomized property suites shared by the `selftest` command and the
// acceptance harness. Each suite reports its worst observed deviation next to
// the bound it was held to.

#include <cstdint>
#include <string>
#include <vector>

namespace dqopt {

struct SuiteResult {
  std::string name;
  int checks = 0;
  int failures = 0;
  double worst = 0.0;  // largest deviation seen
  double bound = 0.0;
  double seconds = 0.0;

  bool passed() const { return checks > 0 && failures == 0; }
};

// (pq)* = q* p* and |pq| = |p||q| on random appreciable pairs.
SuiteResult algebra_suite(std::uint64_t seed, int pairs = 1000, double tol = 1e-10);

// Reflexivity, antisymmetry, transitivity and totality of the dual number
// order on random triples drawn with frequent ties.
SuiteResult order_suite(std::uint64_t seed, int triples = 1000);

// Standard-part deviation under dual-part perturbation for random function
// trees and both hand-eye objectives plus the pose-graph objective.
SuiteResult standardness_suite(std::uint64_t seed, int trees = 50, int samples = 100, double tol = 1e-12);

// Forward-mode gradients against central differences for toy objectives and
// the smoothed application objectives.
SuiteResult gradient_suite(std::uint64_t seed, int points = 10, double tol = 1e-5);

std::vector<SuiteResult> run_selftest(std::uint64_t seed);

}  // namespace dqopt
