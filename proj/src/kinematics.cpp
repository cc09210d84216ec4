#include "chunkrt/kinematics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "chunkrt/config.hpp"
#include "chunkrt/errors.hpp"

namespace chunkrt {
namespace {

Pose joint_motion(const JointDesc& j, double q) {
  if (j.type == JointType::prismatic) return {j.axis * q, Rotation()};
  return {Vec3::Zero(), so3_exp(j.axis * q)};
}

BodySegment segment_from_string(const ConfigDoc& doc, const std::string& s, int line) {
  if (s == "base") return BodySegment::base;
  if (s == "torso") return BodySegment::torso;
  if (s == "arm_left") return BodySegment::arm_left;
  if (s == "arm_right") return BodySegment::arm_right;
  if (s == "head") return BodySegment::head;
  doc.fail(line, "unknown segment '" + s + "'");
}

Vec3 vec3_entry(const ConfigDoc& doc, const ConfigDoc::Section& s, const std::string& key,
                const Vec3& fallback) {
  auto v = doc.get_doubles(s, key);
  if (!v) return fallback;
  if (v->size() != 3) doc.fail(s.find(key)->line, "'" + key + "' needs three numbers");
  return Vec3((*v)[0], (*v)[1], (*v)[2]);
}

void check_dims(const ChainModel& model, const JointState& q) {
  if (static_cast<std::size_t>(q.size()) != model.dof())
    throw InvalidInput("joint state has " + std::to_string(q.size()) + " entries, model has " +
                       std::to_string(model.dof()));
}

}  // namespace

std::string to_string(BodySegment seg) {
  switch (seg) {
    case BodySegment::base: return "base";
    case BodySegment::torso: return "torso";
    case BodySegment::arm_left: return "arm_left";
    case BodySegment::arm_right: return "arm_right";
    case BodySegment::head: return "head";
  }
  return "unknown";
}

ChainModel::ChainModel(std::string name, std::vector<JointDesc> joints,
                       std::vector<EndEffectorDesc> ees)
    : name_(std::move(name)), joints_(std::move(joints)), ees_(std::move(ees)) {
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const auto& j = joints_[i];
    if (std::abs(j.axis.norm() - 1.0) > 1e-9) throw InvalidInput("joint '" + j.name + "' axis is not unit length");
    if (j.parent >= static_cast<int>(i)) throw InvalidInput("joint '" + j.name + "' must follow its parent");
  }
  for (const auto& e : ees_)
    if (e.parent < 0 || e.parent >= static_cast<int>(joints_.size()))
      throw InvalidInput("end-effector parent out of range");
}

ChainModel ChainModel::from_config(const ConfigDoc& doc) {
  std::string name = "model";
  if (const auto* m = doc.section("model")) name = doc.get_string(*m, "name", name);

  std::vector<JointDesc> joints;
  std::map<std::string, int> index;
  for (const auto* s : doc.sections_named("joint")) {
    if (s->label.empty()) doc.fail(s->line, "joint section needs a name: [joint NAME]");
    if (index.count(s->label)) doc.fail(s->line, "duplicate joint '" + s->label + "'");
    JointDesc j;
    j.name = s->label;
    const std::string type = doc.require_string(*s, "type");
    if (type == "revolute") j.type = JointType::revolute;
    else if (type == "prismatic") j.type = JointType::prismatic;
    else doc.fail(s->find("type")->line, "unknown joint type '" + type + "'");
    j.axis = vec3_entry(doc, *s, "axis", Vec3::UnitZ());
    if (std::abs(j.axis.norm() - 1.0) > 1e-9) doc.fail(s->find("axis")->line, "axis must be a unit vector");
    j.origin.p = vec3_entry(doc, *s, "origin", Vec3::Zero());
    j.origin.r = so3_exp(vec3_entry(doc, *s, "rotation", Vec3::Zero()));
    const std::string parent = doc.get_string(*s, "parent", "none");
    if (parent != "none") {
      auto it = index.find(parent);
      if (it == index.end()) doc.fail(s->find("parent")->line, "unknown or later parent '" + parent + "'");
      j.parent = it->second;
    }
    j.segment = segment_from_string(doc, doc.require_string(*s, "segment"), s->line);
    index[j.name] = static_cast<int>(joints.size());
    joints.push_back(j);
  }
  if (joints.empty()) doc.fail(1, "model has no joints");

  std::vector<EndEffectorDesc> ees;
  for (const auto* s : doc.sections_named("end_effector")) {
    EndEffectorDesc e;
    if (s->label == "left") e.arm = Arm::left;
    else if (s->label == "right") e.arm = Arm::right;
    else doc.fail(s->line, "end_effector must be 'left' or 'right'");
    const std::string parent = doc.require_string(*s, "parent");
    auto it = index.find(parent);
    if (it == index.end()) doc.fail(s->find("parent")->line, "unknown parent '" + parent + "'");
    e.parent = it->second;
    e.tool.p = vec3_entry(doc, *s, "origin", Vec3::Zero());
    e.tool.r = so3_exp(vec3_entry(doc, *s, "rotation", Vec3::Zero()));
    ees.push_back(e);
  }
  if (ees.empty()) doc.fail(1, "model defines no end_effector");
  return ChainModel(name, std::move(joints), std::move(ees));
}

ChainModel ChainModel::load(const std::string& path) { return from_config(ConfigDoc::load(path)); }

ChainModel ChainModel::planar(const std::vector<double>& link_lengths) {
  if (link_lengths.empty()) throw InvalidInput("planar chain needs at least one link");
  std::vector<JointDesc> joints;
  for (std::size_t i = 0; i < link_lengths.size(); ++i) {
    JointDesc j;
    j.name = "link_" + std::to_string(i + 1);
    j.axis = Vec3::UnitZ();
    j.parent = static_cast<int>(i) - 1;
    j.origin.p = i == 0 ? Vec3::Zero() : Vec3(link_lengths[i - 1], 0, 0);
    j.segment = BodySegment::arm_left;
    joints.push_back(j);
  }
  EndEffectorDesc ee;
  ee.parent = static_cast<int>(joints.size()) - 1;
  ee.tool.p = Vec3(link_lengths.back(), 0, 0);
  return ChainModel("planar_" + std::to_string(link_lengths.size()), std::move(joints), {ee});
}

bool ChainModel::has_end_effector(Arm arm) const {
  return std::any_of(ees_.begin(), ees_.end(), [arm](const auto& e) { return e.arm == arm; });
}

const EndEffectorDesc& ChainModel::end_effector(Arm arm) const {
  for (const auto& e : ees_)
    if (e.arm == arm) return e;
  throw InvalidInput("model has no such end-effector");
}

std::vector<std::size_t> ChainModel::path_to(Arm arm) const {
  std::vector<std::size_t> path;
  for (int j = end_effector(arm).parent; j >= 0; j = joints_[j].parent) path.push_back(static_cast<std::size_t>(j));
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<std::size_t> ChainModel::joints_in(BodySegment seg) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < joints_.size(); ++i)
    if (joints_[i].segment == seg) out.push_back(i);
  return out;
}

std::vector<Pose> joint_frames(const ChainModel& model, const JointState& q, Arm ee) {
  check_dims(model, q);
  std::vector<Pose> frames;
  Pose t;
  for (std::size_t j : model.path_to(ee)) {
    const auto& jd = model.joints()[j];
    t = compose(t, jd.origin);
    frames.push_back(t);
    t = compose(t, joint_motion(jd, q[static_cast<Eigen::Index>(j)]));
  }
  return frames;
}

Pose fk(const ChainModel& model, const JointState& q, Arm ee) {
  check_dims(model, q);
  Pose t;
  for (std::size_t j : model.path_to(ee)) {
    const auto& jd = model.joints()[j];
    t = compose(compose(t, jd.origin), joint_motion(jd, q[static_cast<Eigen::Index>(j)]));
  }
  return compose(t, model.end_effector(ee).tool);
}

Jacobian numeric_jacobian(const ChainModel& model, const JointState& q, Arm ee) {
  check_dims(model, q);
  constexpr double h = 1e-6;
  Jacobian jac = Jacobian::Zero(6, static_cast<Eigen::Index>(model.dof()));
  for (std::size_t j : model.path_to(ee)) {
    const auto col = static_cast<Eigen::Index>(j);
    JointState qp = q, qm = q;
    qp[col] += h;
    qm[col] -= h;
    const Pose a = fk(model, qp, ee);
    const Pose b = fk(model, qm, ee);
    jac.block<3, 1>(0, col) = (a.p - b.p) / (2 * h);
    jac.block<3, 1>(3, col) = so3_log(a.r * b.r.transpose()) / (2 * h);
  }
  return jac;
}

Eigen::Matrix<double, 6, 1> pose_error(const Pose& current, const Pose& target) {
  Eigen::Matrix<double, 6, 1> e;
  e << target.p - current.p, so3_log(target.r * current.r.transpose());
  return e;
}

JointState dls_ik_step(const ChainModel& model, const JointState& q, Arm ee, const Pose& target,
                       double damping) {
  if (!(damping > 0.0)) throw InvalidInput("damping must be positive");
  const Eigen::Matrix<double, 6, 1> err = pose_error(fk(model, q, ee), target);
  const Jacobian jac = numeric_jacobian(model, q, ee);
  const Eigen::Matrix<double, 6, 6> jjt =
      jac * jac.transpose() + damping * damping * Eigen::Matrix<double, 6, 6>::Identity();
  return q + jac.transpose() * jjt.ldlt().solve(err);
}

ErrorPropagationResult error_propagation_experiment(const ChainModel& model,
                                                    const std::vector<JointState>& reference,
                                                    double sigma,
                                                    const std::vector<std::size_t>& scope,
                                                    std::size_t trials, std::uint64_t seed, Arm ee,
                                                    Exec exec) {
  if (sigma < 0.0) throw InvalidInput("sigma must be non-negative");
  if (trials < 1) throw InvalidInput("need at least one trial");
  if (reference.empty()) throw InvalidInput("reference trajectory is empty");
  for (const auto& q : reference) check_dims(model, q);
  for (std::size_t j : scope)
    if (j >= model.dof()) throw InvalidInput("scope joint index out of range");

  ErrorPropagationResult out;
  out.per_trial_mean_sq.assign(trials, 0.0);
  if (scope.empty() || sigma == 0.0) return out;

  std::vector<Pose> nominal;
  nominal.reserve(reference.size());
  for (const auto& q : reference) nominal.push_back(fk(model, q, ee));

  Eigen::VectorXd mask = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dof()));
  for (std::size_t j : scope) mask[static_cast<Eigen::Index>(j)] = 1.0;

  auto run_trial = [&](std::size_t trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, sigma);
    double acc = 0.0;
    for (std::size_t k = 0; k < reference.size(); ++k) {
      JointState eps(reference[k].size());
      for (Eigen::Index j = 0; j < eps.size(); ++j) eps[j] = normal(rng);
      const Pose noisy = fk(model, reference[k] + eps.cwiseProduct(mask), ee);
      acc += (noisy.p - nominal[k].p).squaredNorm();
    }
    out.per_trial_mean_sq[trial] = acc / static_cast<double>(reference.size());
  };

  const auto n = static_cast<long>(trials);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (long t = 0; t < n; ++t) run_trial(static_cast<std::size_t>(t));
  } else {
    for (long t = 0; t < n; ++t) run_trial(static_cast<std::size_t>(t));
  }

  double total = 0.0;
  for (double v : out.per_trial_mean_sq) total += v;
  out.rms_position_error = std::sqrt(total / static_cast<double>(trials));
  return out;
}

}  // namespace chunkrt
