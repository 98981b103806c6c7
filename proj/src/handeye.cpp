#include "dqopt/handeye.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "dqopt/random.hpp"

namespace dqopt {

namespace {

using Map = DualQuaternionMap;

constexpr double kMatrixTol = 1e-9;

UnitDualQuaternion canonical(const UnitDualQuaternion& q) { return udq_canonicalize_sign(q); }

DualFunction unit_constraint(std::size_t n, std::size_t i) {
  return squared_magnitude(Map::variable(n, i)) - DualFunction::constant(n, {1.0, 0.0});
}

// Angle between two rotation axes taken as lines, or -1 when either rotation
// is too small to define an axis.
double line_angle(const Quaternion& p, const Quaternion& q) {
  const Quaternion u = p.imag_part(), v = q.imag_part();
  const double nu = u.norm(), nv = v.norm();
  if (rotation_angle(p) < 1e-6 || rotation_angle(q) < 1e-6) return -1.0;
  const double c = std::min(1.0, std::abs(dot(u, v)) / (nu * nv));
  return std::acos(c);
}

std::vector<UnitDualQuaternion> first_of(const std::vector<MotionPair>& pairs) {
  std::vector<UnitDualQuaternion> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.first);
  return out;
}

void spread_warning(const std::vector<UnitDualQuaternion>& motions, std::vector<std::string>* warnings) {
  const double s = axis_spread(motions);
  if (warnings && s < kMinAxisSpread) {
    warnings->push_back("degenerate motion set: largest rotation-axis spread " + format_double(s) +
                        " rad is below " + format_double(kMinAxisSpread) + " rad");
  }
}

Pose random_pose(Rng& rng, double scale) {
  Pose p;
  p.rotation = rng.unit_quaternion();
  p.translation = Quaternion::imaginary(scale * rng.normal(), scale * rng.normal(), scale * rng.normal());
  return p;
}

Json json_vec3(const Quaternion& t) { return Json::array({t.x, t.y, t.z}); }

Json pose_error_json(const PoseError& e) { return {{"rotation", e.rotation}, {"translation", e.translation}}; }

}  // namespace

// ---- Pose -----------------------------------------------------------------

UnitDualQuaternion Pose::udq() const {
  try {
    return udq_from_pose(rotation, translation);
  } catch (const Error& e) {
    throw Error(Errc::InvalidPose, e.what());
  }
}

Pose Pose::from_udq(const UnitDualQuaternion& q) {
  const auto [r, t] = udq_to_pose(q);
  return {r, t};
}

Eigen::Matrix3d rotation_matrix(const Quaternion& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),  //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Quaternion quaternion_from_rotation(const Eigen::Matrix3d& r) {
  const double tr = r.trace();
  Quaternion q;
  if (tr >= r(0, 0) && tr >= r(1, 1) && tr >= r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);  // 4w
    q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
  } else if (r(0, 0) >= r(1, 1) && r(0, 0) >= r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));  // 4x
    q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
  } else if (r(1, 1) >= r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));  // 4y
    q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));  // 4z
    q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
  }
  q = q / q.norm();
  return q.w < 0 ? -q : q;
}

Eigen::Matrix4d Pose::matrix() const {
  const Quaternion q = rotation / rotation.norm();
  const Eigen::Matrix3d r = rotation_matrix(q);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = r * Eigen::Vector3d(translation.x, translation.y, translation.z);
  return m;
}

Pose Pose::from_matrix(const Eigen::Matrix4d& m) {
  if (std::abs(m(3, 0)) > kMatrixTol || std::abs(m(3, 1)) > kMatrixTol || std::abs(m(3, 2)) > kMatrixTol ||
      std::abs(m(3, 3) - 1.0) > kMatrixTol) {
    throw Error(Errc::InvalidPose, "bottom row must be (0, 0, 0, 1)");
  }
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  const double orth = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(orth <= kMatrixTol) || r.determinant() <= 0) {
    throw Error(Errc::InvalidPose, "rotation block is not a proper orthonormal matrix");
  }
  const Eigen::Vector3d pb = r.transpose() * m.topRightCorner<3, 1>();
  return {quaternion_from_rotation(r), Quaternion::imaginary(pb.x(), pb.y(), pb.z())};
}

// ---- dataset --------------------------------------------------------------

const char* to_string(HandEyeModel m) { return m == HandEyeModel::AXXB ? "axxb" : "axyb"; }

void HandEyeDataset::validate() const {
  if (A.size() != B.size()) {
    throw Error(Errc::InvalidArgument, "A and B must have the same length (" + std::to_string(A.size()) + " vs " +
                                           std::to_string(B.size()) + ")");
  }
  for (const auto* list : {&A, &B}) {
    for (const Pose& p : *list) (void)p.udq();
  }
  if (X) (void)X->udq();
  if (Y) (void)Y->udq();
  if (model == HandEyeModel::AXXB && Y) throw Error(Errc::InvalidArgument, "an AX=XB dataset has no Y");
}

UnitDualQuaternion measurement_noise(Rng& rng, double noise_rot, double noise_trans) {
  const double angle = noise_rot * rng.normal();
  const Quaternion axis = rng.unit_axis();
  const Quaternion t = Quaternion::imaginary(noise_trans * rng.normal(), noise_trans * rng.normal(),
                                             noise_trans * rng.normal());
  return udq_from_pose(exp_axis_angle(angle, axis), t);
}

Json to_json(const Pose& p) {
  Json j;
  j["q"] = to_json(p.rotation);
  j["t"] = json_vec3(p.translation);
  return j;
}

Pose pose_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("q") || !j.contains("t")) throw ParseError(0, "pose needs \"q\" and \"t\"");
  const Json& t = j["t"];
  if (!t.is_array() || t.size() != 3 || !t[0].is_number() || !t[1].is_number() || !t[2].is_number()) {
    throw ParseError(0, "pose \"t\" must be an array of 3 numbers");
  }
  return {quaternion_from_json(j["q"]), Quaternion::imaginary(t[0].get<double>(), t[1].get<double>(), t[2].get<double>())};
}

Json to_json(const HandEyeDataset& d) {
  Json j;
  j["model"] = to_string(d.model);
  Json a = Json::array(), b = Json::array();
  for (const Pose& p : d.A) a.push_back(to_json(p));
  for (const Pose& p : d.B) b.push_back(to_json(p));
  j["A"] = std::move(a);
  j["B"] = std::move(b);
  if (d.X || d.Y) {
    Json gt = Json::object();
    if (d.X) gt["X"] = to_json(*d.X);
    if (d.Y) gt["Y"] = to_json(*d.Y);
    j["ground_truth"] = std::move(gt);
  }
  if (d.generator) {
    j["generator"] = {{"seed", d.generator->seed},
                      {"motions", d.generator->motions},
                      {"noise_rot", d.generator->noise_rot},
                      {"noise_trans", d.generator->noise_trans}};
  }
  return j;
}

HandEyeDataset handeye_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError(0, "dataset must be a JSON object");
  HandEyeDataset d;
  if (!j.contains("model") || !j["model"].is_string()) throw ParseError(0, "missing \"model\"");
  const std::string model = j["model"].get<std::string>();
  if (model == "axxb") {
    d.model = HandEyeModel::AXXB;
  } else if (model == "axyb") {
    d.model = HandEyeModel::AXYB;
  } else {
    throw ParseError(0, "unknown model \"" + model + "\"");
  }
  for (const char* key : {"A", "B"}) {
    if (!j.contains(key) || !j[key].is_array()) throw ParseError(0, std::string("missing pose list \"") + key + "\"");
    auto& out = key[0] == 'A' ? d.A : d.B;
    for (const Json& p : j[key]) out.push_back(pose_from_json(p));
  }
  if (j.contains("ground_truth")) {
    const Json& gt = j["ground_truth"];
    if (!gt.is_object()) throw ParseError(0, "\"ground_truth\" must be an object");
    if (gt.contains("X")) d.X = pose_from_json(gt["X"]);
    if (gt.contains("Y")) d.Y = pose_from_json(gt["Y"]);
  }
  if (j.contains("generator")) {
    const Json& g = j["generator"];
    try {
      d.generator = GeneratorInfo{g.at("seed").get<std::uint64_t>(), g.at("motions").get<int>(),
                                  g.at("noise_rot").get<double>(), g.at("noise_trans").get<double>()};
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(0, std::string("bad \"generator\": ") + e.what());
    }
  }
  d.validate();
  return d;
}

// ---- problems -------------------------------------------------------------

std::vector<MotionPair> relative_motions(const HandEyeDataset& d) {
  if (d.model != HandEyeModel::AXXB) throw Error(Errc::InvalidArgument, "relative motions need an AX=XB dataset");
  if (d.A.size() != d.B.size()) throw Error(Errc::InvalidArgument, "A and B must have the same length");
  std::vector<MotionPair> out;
  for (std::size_t i = 0; i + 1 < d.A.size(); ++i) {
    const UnitDualQuaternion a = d.A[i + 1].udq() * d.A[i].udq().conj();
    const UnitDualQuaternion b = d.B[i + 1].udq().conj() * d.B[i].udq();
    out.emplace_back(canonical(a), canonical(b));
  }
  return out;
}

double axis_spread(const std::vector<UnitDualQuaternion>& motions) {
  double best = 0.0;
  for (std::size_t i = 0; i < motions.size(); ++i) {
    for (std::size_t k = i + 1; k < motions.size(); ++k) {
      best = std::max(best, line_angle(motions[i].rotation(), motions[k].rotation()));
    }
  }
  return best;
}

EqdqoProblem build_axxb(const HandEyeDataset& d, std::vector<std::string>* warnings) {
  const auto motions = relative_motions(d);
  if (motions.size() < 2) {
    throw Error(Errc::TooFewMotions, "AX=XB needs at least 2 relative motions, got " + std::to_string(motions.size()));
  }
  spread_warning(first_of(motions), warnings);
  const Map x = Map::variable(1, 0);
  std::optional<DualFunction> f;
  for (const auto& [a, b] : motions) {
    DualFunction term = magnitude(Map::constant(1, a.value()) * x - x * Map::constant(1, b.value()));
    f = f ? *f + term : term;
  }
  return EqdqoProblem::make(*f, {unit_constraint(1, 0)});
}

EqdqoProblem build_axyb(const HandEyeDataset& d, std::vector<std::string>* warnings,
                        const std::optional<UnitDualQuaternion>& known_y) {
  if (d.model != HandEyeModel::AXYB) throw Error(Errc::InvalidArgument, "build_axyb needs an AX=YB dataset");
  if (d.A.size() != d.B.size()) throw Error(Errc::InvalidArgument, "A and B must have the same length");
  if (d.A.size() < 3) {
    throw Error(Errc::TooFewMotions, "AX=YB needs at least 3 pose pairs, got " + std::to_string(d.A.size()));
  }
  std::vector<UnitDualQuaternion> a_side;
  for (const Pose& p : d.A) a_side.push_back(canonical(p.udq()));
  spread_warning(a_side, warnings);

  const std::size_t n = known_y ? 1 : 2;
  const Map x = Map::variable(n, 0);
  const Map y = known_y ? Map::constant(n, known_y->value()) : Map::variable(n, 1);
  std::optional<DualFunction> f;
  for (std::size_t i = 0; i < d.A.size(); ++i) {
    const DualQuaternion a = a_side[i].value();
    const DualQuaternion b = canonical(d.B[i].udq()).value();
    DualFunction term = magnitude(Map::constant(n, a) * x - y * Map::constant(n, b));
    f = f ? *f + term : term;
  }
  std::vector<DualFunction> h{unit_constraint(n, 0)};
  if (!known_y) h.push_back(unit_constraint(n, 1));
  return EqdqoProblem::make(*f, std::move(h));
}

HandEyeDataset axxb_reduction(const HandEyeDataset& d) {
  if (d.model != HandEyeModel::AXYB) throw Error(Errc::InvalidArgument, "reduction needs an AX=YB dataset");
  HandEyeDataset out;
  out.model = HandEyeModel::AXXB;
  for (const Pose& p : d.A) out.A.push_back(Pose::from_udq(p.udq().conj()));
  out.B = d.B;
  out.X = d.X;
  return out;
}

// ---- generator ------------------------------------------------------------

HandEyeDataset generate_synthetic(HandEyeModel model, int n, double noise_rot, double noise_trans,
                                  std::uint64_t seed) {
  const int min_n = model == HandEyeModel::AXXB ? 2 : 3;
  if (n < min_n) throw Error(Errc::InvalidArgument, "too few motions for the model");
  if (!(noise_rot >= 0) || !(noise_trans >= 0)) throw Error(Errc::InvalidArgument, "noise levels must be >= 0");

  Rng rng(seed);
  HandEyeDataset d;
  d.model = model;
  d.generator = GeneratorInfo{seed, n, noise_rot, noise_trans};
  const Pose X = random_pose(rng, 0.5);
  const UnitDualQuaternion x = X.udq();
  d.X = X;

  if (model == HandEyeModel::AXXB) {
    // B_i = G A_i^-1 X gives A^(i) X = X B^(i) for any G.
    const UnitDualQuaternion g = random_pose(rng, 1.0).udq();
    std::vector<UnitDualQuaternion> a{random_pose(rng, 1.0).udq()};
    Quaternion first_axis;
    for (int i = 0; i < n; ++i) {
      // Relative angle in [0.4, 2.5] keeps w away from 0 so the canonical sign
      // of a^(i) and of x* a^(i) x agree.
      const double angle = rng.uniform(0.4, 2.5);
      Quaternion axis = rng.unit_axis();
      if (i == 0) first_axis = axis;
      while (i == 1 && line_angle(first_axis, axis) < kMinAxisSpread) axis = rng.unit_axis();
      const Quaternion t = Quaternion::imaginary(rng.normal(), rng.normal(), rng.normal());
      a.push_back(udq_from_pose(exp_axis_angle(angle, axis), t) * a.back());
    }
    for (const UnitDualQuaternion& ai : a) {
      d.A.push_back(Pose::from_udq(ai));
      d.B.push_back(Pose::from_udq(g * ai.conj() * x * measurement_noise(rng, noise_rot, noise_trans)));
    }
  } else {
    // B_i = Y^-1 A_i X. Rejection keeps the rotation part of y* a_i x away
    // from w = 0 so canonicalized measurements share the sign of the truth.
    const Pose Y = random_pose(rng, 0.5);
    const UnitDualQuaternion y = Y.udq();
    d.Y = Y;
    Quaternion first_axis;
    for (int i = 0; i < n; ++i) {
      UnitDualQuaternion ai, bi;
      for (;;) {
        ai = canonical(random_pose(rng, 1.0).udq());
        bi = y.conj() * ai * x;
        const bool spread_ok = i != 1 || line_angle(first_axis, ai.rotation()) >= kMinAxisSpread;
        if (ai.rotation().w >= 0.05 && bi.rotation().w >= 0.05 && spread_ok) break;
      }
      if (i == 0) first_axis = ai.rotation();
      d.A.push_back(Pose::from_udq(ai));
      d.B.push_back(Pose::from_udq(bi * measurement_noise(rng, noise_rot, noise_trans)));
    }
  }
  return d;
}

// ---- evaluation -----------------------------------------------------------

PoseError pose_error(const Pose& truth, const UnitDualQuaternion& estimate) {
  const UnitDualQuaternion t = truth.udq();
  PoseError e;
  e.rotation = rotation_angle(t.rotation().conj() * estimate.rotation());
  e.translation = (t.translation() - estimate.translation()).norm();
  return e;
}

HandEyeErrors evaluate_solution(const HandEyeDataset& d, const UnitDualQuaternion& x,
                                const std::optional<UnitDualQuaternion>& y) {
  if (!d.X) throw Error(Errc::NoGroundTruth, "dataset has no ground-truth X");
  HandEyeErrors out;
  out.x = pose_error(*d.X, x);
  if (d.model == HandEyeModel::AXYB) {
    if (!d.Y) throw Error(Errc::NoGroundTruth, "dataset has no ground-truth Y");
    if (!y) throw Error(Errc::InvalidArgument, "an AX=YB evaluation needs an estimate of Y");
    out.y = pose_error(*d.Y, *y);
  }
  return out;
}

HandEyeResult solve_handeye(const HandEyeDataset& d, const SolverConfig& cfg) {
  HandEyeResult r;
  const EqdqoProblem P =
      d.model == HandEyeModel::AXXB ? build_axxb(d, &r.warnings) : build_axyb(d, &r.warnings);
  r.report = solve_eqdqo(P, cfg);
  r.x = canonical(UnitDualQuaternion(r.report.solution[0]));
  if (d.model == HandEyeModel::AXYB) r.y = canonical(UnitDualQuaternion(r.report.solution[1]));
  const bool has_truth = d.X && (d.model == HandEyeModel::AXXB || d.Y);
  if (has_truth) r.errors = evaluate_solution(d, r.x, r.y);
  return r;
}

Json to_json(const HandEyeResult& r) {
  Json j = to_json(r.report);
  j["X"] = to_json(Pose::from_udq(r.x));
  if (r.y) j["Y"] = to_json(Pose::from_udq(*r.y));
  if (r.errors) {
    j["rotation_error"] = r.errors->x.rotation;
    j["translation_error"] = r.errors->x.translation;
    if (r.errors->y) j["errors_y"] = pose_error_json(*r.errors->y);
  }
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace dqopt
