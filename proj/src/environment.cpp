#include "boxreach/environment.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Geometry>

#include "boxreach/errors.hpp"

namespace boxreach {

namespace {

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

}  // namespace

Scene build_scene(SceneSpec spec) {
  try {
    spec.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("manipulator", e.what());
  }
  require(spec.safety_offset >= 0.0 && std::isfinite(spec.safety_offset), "safety_offset",
          "must be finite and >= 0");
  require(spec.e_p_max > 0.0, "allowable_errors.position", "must be > 0");
  require(spec.e_o_max > 0.0, "allowable_errors.orientation", "must be > 0");
  require(spec.dq_max > 0.0, "dq_max", "must be > 0");
  require(spec.max_steps >= 1, "max_steps", "must be >= 1");
  require(std::isfinite(spec.zeta), "zeta", "must be finite");
  require((spec.target_region.min.array() <= spec.target_region.max.array()).all(),
          "target_region", "min must not exceed max");
  for (std::size_t i = 0; i < spec.boxes.size(); ++i) {
    const Aabb& b = spec.boxes[i];
    const std::string path = "boxes[" + std::to_string(i) + "]";
    require(b.min.allFinite() && b.max.allFinite(), path, "bounds must be finite");
    require((b.min.array() <= b.max.array()).all(), path, "min must not exceed max");
    if (b.frame) {
      const Mat3& r = b.frame->rotation;
      require((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9 &&
                  std::abs(r.determinant() - 1.0) < 1e-9,
              path + ".frame", "rotation must be orthonormal with det +1");
    }
  }
  if (spec.home.size() == 0) spec.home = JointConfig::Zero(spec.model.dof());
  require(spec.home.size() == spec.model.dof(), "home", "length must equal DoF");
  require(spec.model.within_limits(spec.home), "home", "outside joint limits");

  Scene scene;
  scene.model = std::move(spec.model);
  scene.raw_boxes = std::move(spec.boxes);
  scene.safety_offset = spec.safety_offset;
  const double margin = scene.model.link_radius + scene.safety_offset;
  scene.expanded_boxes.reserve(scene.raw_boxes.size());
  for (const Aabb& b : scene.raw_boxes) scene.expanded_boxes.push_back(expand_box(b, margin));
  scene.target_region = spec.target_region;
  scene.e_p_max = spec.e_p_max;
  scene.e_o_max = spec.e_o_max;
  scene.zeta = spec.zeta;
  scene.max_steps = spec.max_steps;
  scene.dq_max = spec.dq_max;
  scene.position_scale = spec.position_scale > 0.0 ? spec.position_scale
                                                   : 2.0 * scene.model.total_link_length();
  scene.orientation_scale =
      spec.orientation_scale > 0.0 ? spec.orientation_scale : 3.0 * std::numbers::pi;
  scene.home = std::move(spec.home);
  return scene;
}

double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double out = std::fmod(angle, two_pi);
  if (out <= -std::numbers::pi) out += two_pi;
  if (out > std::numbers::pi) out -= two_pi;
  return out;
}

Vec3 euler_zyx(const Mat3& r) {
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  return {wrap_angle(yaw), wrap_angle(pitch), wrap_angle(roll)};
}

Mat3 rotation_from_euler_zyx(const Vec3& ypr) {
  return (Eigen::AngleAxisd(ypr[0], Vec3::UnitZ()) * Eigen::AngleAxisd(ypr[1], Vec3::UnitY()) *
          Eigen::AngleAxisd(ypr[2], Vec3::UnitX()))
      .toRotationMatrix();
}

Eigen::VectorXd StateVector::flatten() const {
  Eigen::VectorXd out(flat_size(static_cast<int>(q.size())));
  out << q, tcp_position, tcp_euler, goal_position, goal_euler, dp, d_orient,
      at_goal ? 1.0 : 0.0;
  return out;
}

namespace {

StateVector observe_at(const Scene& scene, const JointConfig& q, const RigidTransform& tcp,
                       const GoalPose& goal) {
  StateVector s;
  s.q = q;
  s.tcp_position = tcp.translation;
  s.tcp_euler = euler_zyx(tcp.rotation);
  s.goal_position = goal.position;
  s.goal_euler = euler_zyx(goal.rotation);
  s.dp = (goal.position - tcp.translation) / scene.position_scale;
  s.d_orient = euler_zyx(tcp.rotation.transpose() * goal.rotation) / scene.orientation_scale;
  s.at_goal = s.position_error() <= scene.e_p_max && s.orientation_error() <= scene.e_o_max;
  return s;
}

}  // namespace

StateVector observe(const Scene& scene, const JointConfig& q, const GoalPose& goal) {
  return observe_at(scene, q, tcp_pose(scene.model, q), goal);
}

double total_overlap(const Scene& scene, const JointConfig& q) {
  double total = 0.0;
  for (const Segment& seg : link_segments(scene.model, q)) {
    for (const Aabb& box : scene.expanded_boxes) total += overlap_length(seg, box);
  }
  return total;
}

double uoar_reward(const Scene& scene, const JointConfig& q) {
  double overlap = 0.0;
  double length = 0.0;
  for (const Segment& seg : link_segments(scene.model, q)) {
    length += seg.length();
    for (const Aabb& box : scene.expanded_boxes) overlap += overlap_length(seg, box);
  }
  if (length <= 0.0 || overlap <= 0.0) return 0.0;
  return std::max(-overlap / length, -1.0);
}

double aux_pose_bonus(const Scene& scene, double e_p, double e_o) {
  return 0.25 * (e_p < 2.0 * scene.e_p_max ? 1.0 : 0.0) +
         0.25 * (e_o < 2.0 * scene.e_o_max ? 1.0 : 0.0);
}

double pose_reward_from_errors(const Scene& scene, double e_p, double e_o) {
  const double goal_bonus = (e_p <= scene.e_p_max && e_o <= scene.e_o_max) ? 1.0 : 0.0;
  return -(e_p + e_o) + aux_pose_bonus(scene, e_p, e_o) + goal_bonus;
}

double pose_reward(const Scene& scene, const JointConfig& q, const GoalPose& goal) {
  const StateVector s = observe(scene, q, goal);
  return pose_reward_from_errors(scene, s.position_error(), s.orientation_error());
}

double reward(const Scene& scene, const JointConfig& q, const GoalPose& goal) {
  return pose_reward(scene, q, goal) + scene.zeta * uoar_reward(scene, q);
}

StepResult step(const Scene& scene, const JointConfig& q, const Eigen::VectorXd& dq,
                const GoalPose& goal, int step_index) {
  if (q.size() != scene.dof() || dq.size() != scene.dof()) {
    throw std::invalid_argument("step: configuration/action size does not match DoF");
  }
  StepResult out;
  out.q = scene.model.clamp(q + dq.cwiseMax(-scene.dq_max).cwiseMin(scene.dq_max));
  out.state = observe(scene, out.q, goal);
  out.reward =
      pose_reward_from_errors(scene, out.state.position_error(), out.state.orientation_error()) +
      scene.zeta * uoar_reward(scene, out.q);
  out.done = step_index + 1 >= scene.max_steps;
  return out;
}

GoalPose sample_goal(const Scene& scene, Rng& rng) {
  GoalPose goal;
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = scene.target_region.min[axis];
    const double hi = scene.target_region.max[axis];
    goal.position[axis] = lo == hi ? lo : uniform(rng, lo, hi);
  }
  goal.rotation = scene.target_region.rotation;
  return goal;
}

TrajectoryCheck verify_trajectory(const Scene& scene, const std::vector<JointConfig>& traj) {
  TrajectoryCheck out;
  out.overlap.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (traj[i].size() != scene.dof()) {
      throw std::invalid_argument("verify_trajectory: configuration " + std::to_string(i) +
                                  " does not match DoF");
    }
    double worst = total_overlap(scene, traj[i]);
    if (i > 0) {
      const Eigen::VectorXd delta = traj[i] - traj[i - 1];
      const int substeps =
          std::max(1, static_cast<int>(std::ceil(delta.cwiseAbs().maxCoeff() / scene.dq_max)));
      for (int k = 1; k < substeps; ++k) {
        const JointConfig mid = traj[i - 1] + delta * (static_cast<double>(k) / substeps);
        worst = std::max(worst, total_overlap(scene, mid));
      }
    }
    if (worst > 0.0) out.collision_free = false;
    out.overlap.push_back(worst);
  }
  return out;
}

double min_clearance(const Scene& scene, const std::vector<JointConfig>& traj) {
  double best = std::numeric_limits<double>::infinity();
  for (const JointConfig& q : traj) {
    for (const Segment& seg : link_segments(scene.model, q)) {
      for (const Aabb& box : scene.raw_boxes) best = std::min(best, segment_box_distance(seg, box));
    }
  }
  return best;
}

double tcp_path_length(const Scene& scene, const std::vector<JointConfig>& traj) {
  double total = 0.0;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    total += (tcp_pose(scene.model, traj[i]).translation -
              tcp_pose(scene.model, traj[i - 1]).translation)
                 .norm();
  }
  return total;
}

void write_trajectory_csv(std::ostream& out, const std::vector<JointConfig>& traj) {
  const Eigen::Index dof = traj.empty() ? 0 : traj.front().size();
  for (Eigen::Index j = 0; j < dof; ++j) out << (j ? "," : "") << "q" << j;
  out << "\n";
  const auto old_precision = out.precision(17);
  for (const JointConfig& q : traj) {
    for (Eigen::Index j = 0; j < q.size(); ++j) out << (j ? "," : "") << q[j];
    out << "\n";
  }
  out.precision(old_precision);
}

std::vector<JointConfig> read_trajectory_csv(std::istream& in) {
  std::vector<JointConfig> traj;
  std::string line;
  if (!std::getline(in, line)) return traj;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
    traj.push_back(Eigen::Map<const Eigen::VectorXd>(values.data(), values.size()));
  }
  return traj;
}

}  // namespace boxreach
