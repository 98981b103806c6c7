#pragma once

// Hand-eye (AX = XB) and robot-world/hand-eye (AX = YB) calibration posed as
// standard dual quaternion programs. Residuals use magnitudes, never squared
// magnitudes: a squared magnitude drops a purely dual residual entirely.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dqopt/serialize.hpp"
#include "dqopt/solver.hpp"
#include "dqopt/unit_dual_quaternion.hpp"

namespace dqopt {

class Rng;

// Rigid transform: unit rotation q and body-frame translation p^b (imaginary).
// The homogeneous matrix is [R(q), R(q) p^b; 0 0 0 1].
struct Pose {
  Quaternion rotation = Quaternion::identity();
  Quaternion translation;

  // Validates through udq_from_pose.
  UnitDualQuaternion udq() const;
  static Pose from_udq(const UnitDualQuaternion& q);

  Eigen::Matrix4d matrix() const;
  // Throws InvalidPose unless the 3x3 block is orthonormal with det +1 (to
  // 1e-9) and the bottom row is (0, 0, 0, 1).
  static Pose from_matrix(const Eigen::Matrix4d& m);
};

Eigen::Matrix3d rotation_matrix(const Quaternion& q);
// Largest-pivot extraction, w >= 0. The input must be orthonormal.
Quaternion quaternion_from_rotation(const Eigen::Matrix3d& r);

enum class HandEyeModel { AXXB, AXYB };
const char* to_string(HandEyeModel m);

struct GeneratorInfo {
  std::uint64_t seed = 0;
  int motions = 0;
  double noise_rot = 0.0;
  double noise_trans = 0.0;
};

struct HandEyeDataset {
  HandEyeModel model = HandEyeModel::AXXB;
  std::vector<Pose> A;  // n+1 for AXXB, n for AXYB
  std::vector<Pose> B;
  std::optional<Pose> X;
  std::optional<Pose> Y;
  std::optional<GeneratorInfo> generator;

  // Throws InvalidArgument on length mismatch, InvalidPose on a bad pose.
  void validate() const;
};

Json to_json(const Pose& p);
Pose pose_from_json(const Json& j);
Json to_json(const HandEyeDataset& d);
HandEyeDataset handeye_from_json(const Json& j);

using MotionPair = std::pair<UnitDualQuaternion, UnitDualQuaternion>;

// (a^(i), b^(i)) from A_{i+1} A_i^-1 and B_{i+1}^-1 B_i, sign-canonicalized.
std::vector<MotionPair> relative_motions(const HandEyeDataset& d);

// Largest pairwise angle between rotation axes (as lines) of the A-side
// motions, in [0, pi/2]; motions with angle below 1e-6 are skipped.
double axis_spread(const std::vector<UnitDualQuaternion>& motions);

constexpr double kMinAxisSpread = 0.3;

// One variable x. Throws TooFewMotions below two relative motions. A
// degenerate axis spread appends a message to `warnings` when given.
EqdqoProblem build_axxb(const HandEyeDataset& d, std::vector<std::string>* warnings = nullptr);
// Variables (x, y). Throws TooFewMotions below three pose pairs. With
// `known_y` the problem has the single variable x and y is a constant.
EqdqoProblem build_axyb(const HandEyeDataset& d, std::vector<std::string>* warnings = nullptr,
                        const std::optional<UnitDualQuaternion>& known_y = std::nullopt);

// AXYB data with Y known, rewritten as an AXXB sequence (A'_i = A_i^-1,
// B'_i = B_i) whose relative motions satisfy A'^(i) X = X B'^(i).
HandEyeDataset axxb_reduction(const HandEyeDataset& d);

// Rotation of angle ~N(0, noise_rot^2) about a random axis with translation
// ~N(0, noise_trans^2 I). Consumes the same draws at every noise level, so
// datasets that differ only in noise share their base data.
UnitDualQuaternion measurement_noise(Rng& rng, double noise_rot, double noise_trans);

// n is the number of relative motions (AXXB) or pose pairs (AXYB).
HandEyeDataset generate_synthetic(HandEyeModel model, int n, double noise_rot, double noise_trans,
                                  std::uint64_t seed);

struct PoseError {
  double rotation = 0.0;     // rad
  double translation = 0.0;  // |p^b_true - p^b_est|
};

struct HandEyeErrors {
  PoseError x;
  std::optional<PoseError> y;
};

PoseError pose_error(const Pose& truth, const UnitDualQuaternion& estimate);

// Throws NoGroundTruth when the dataset lacks X (or Y for AXYB).
HandEyeErrors evaluate_solution(const HandEyeDataset& d, const UnitDualQuaternion& x,
                                const std::optional<UnitDualQuaternion>& y = std::nullopt);

struct HandEyeResult {
  SolveReport report;
  UnitDualQuaternion x;
  std::optional<UnitDualQuaternion> y;
  std::optional<HandEyeErrors> errors;  // when ground truth is present
  std::vector<std::string> warnings;
};

HandEyeResult solve_handeye(const HandEyeDataset& d, const SolverConfig& cfg);

Json to_json(const HandEyeResult& r);

}  // namespace dqopt
