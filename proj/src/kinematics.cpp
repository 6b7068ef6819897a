#include "boxreach/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Geometry>

namespace boxreach {

double ManipulatorModel::total_link_length() const {
  double sum = 0.0;
  for (const DhRow& row : dh) sum += std::abs(row.a) + std::abs(row.d);
  if (tool) sum += std::abs(tool->a) + std::abs(tool->d);
  return sum;
}

void ManipulatorModel::validate() const {
  if (dh.empty()) throw std::invalid_argument("manipulator: dh table is empty");
  if (joint_limits.size() != dh.size()) {
    throw std::invalid_argument("manipulator: joint_limits size must equal DoF");
  }
  if (!std::isfinite(link_radius) || link_radius < 0.0) {
    throw std::invalid_argument("manipulator: link_radius must be finite and >= 0");
  }
  for (std::size_t i = 0; i < joint_limits.size(); ++i) {
    if (!(joint_limits[i].min < joint_limits[i].max)) {
      throw std::invalid_argument("manipulator: joint_limits[" + std::to_string(i) +
                                  "] requires min < max");
    }
  }
  for (const DhRow& row : dh) {
    if (!std::isfinite(row.a) || !std::isfinite(row.alpha) || !std::isfinite(row.d) ||
        !std::isfinite(row.q_home)) {
      throw std::invalid_argument("manipulator: dh entries must be finite");
    }
  }
  if (segment_map.empty()) throw std::invalid_argument("manipulator: segment_map is empty");
  for (const auto& [from, to] : segment_map) {
    if (from < 0 || to >= frame_count() || from >= to) {
      throw std::invalid_argument("manipulator: segment_map entry (" + std::to_string(from) +
                                  ", " + std::to_string(to) + ") is invalid");
    }
  }
}

JointConfig ManipulatorModel::clamp(const JointConfig& q) const {
  JointConfig out = q;
  for (int i = 0; i < dof(); ++i) {
    out[i] = std::clamp(q[i], joint_limits[i].min, joint_limits[i].max);
  }
  return out;
}

bool ManipulatorModel::within_limits(const JointConfig& q, double slack) const {
  if (q.size() != dof()) return false;
  for (int i = 0; i < dof(); ++i) {
    if (q[i] < joint_limits[i].min - slack || q[i] > joint_limits[i].max + slack) return false;
  }
  return true;
}

RigidTransform dh_transform(const DhRow& row, double q) {
  const double theta = q + row.q_home;
  const Mat3 rot_alpha = Eigen::AngleAxisd(row.alpha, Vec3::UnitX()).toRotationMatrix();
  const Mat3 rot_theta = Eigen::AngleAxisd(theta, Vec3::UnitZ()).toRotationMatrix();
  // Rot_x(alpha) * Trans_x(a) * Rot_z(theta) * Trans_z(d)
  RigidTransform out;
  out.rotation = rot_alpha * rot_theta;
  out.translation = rot_alpha * (Vec3(row.a, 0.0, 0.0) + rot_theta * Vec3(0.0, 0.0, row.d));
  return out;
}

namespace {

void check_dof(const ManipulatorModel& model, const JointConfig& q) {
  if (q.size() != model.dof()) {
    throw std::invalid_argument("joint configuration has " + std::to_string(q.size()) +
                                " entries, model DoF is " + std::to_string(model.dof()));
  }
}

}  // namespace

std::vector<RigidTransform> forward_kinematics(const ManipulatorModel& model,
                                               const JointConfig& q) {
  check_dof(model, q);
  std::vector<RigidTransform> frames;
  frames.reserve(model.dh.size());
  RigidTransform current;
  for (int i = 0; i < model.dof(); ++i) {
    current = current * dh_transform(model.dh[i], q[i]);
    frames.push_back(current);
  }
  return frames;
}

std::vector<RigidTransform> all_frames(const ManipulatorModel& model, const JointConfig& q) {
  std::vector<RigidTransform> frames;
  frames.reserve(model.frame_count());
  frames.emplace_back();
  for (const RigidTransform& f : forward_kinematics(model, q)) frames.push_back(f);
  if (model.tool) frames.push_back(frames.back() * dh_transform(*model.tool, 0.0));
  return frames;
}

std::vector<Segment> link_segments(const ManipulatorModel& model, const JointConfig& q) {
  const std::vector<RigidTransform> frames = all_frames(model, q);
  std::vector<Segment> out;
  out.reserve(model.segment_map.size());
  for (const auto& [from, to] : model.segment_map) {
    out.push_back({frames[from].translation, frames[to].translation});
  }
  return out;
}

RigidTransform tcp_pose(const ManipulatorModel& model, const JointConfig& q) {
  return all_frames(model, q).back();
}

std::vector<std::pair<int, int>> default_segment_map(const ManipulatorModel& model) {
  JointConfig zero = JointConfig::Zero(model.dof());
  const auto frames = all_frames(model, zero);
  std::vector<std::pair<int, int>> map;
  int from = 0;
  for (int to = 1; to < static_cast<int>(frames.size()); ++to) {
    if ((frames[to].translation - frames[from].translation).norm() > 1e-12) {
      map.emplace_back(from, to);
      from = to;
    }
  }
  return map;
}

ManipulatorModel planar_arm(const std::vector<double>& link_lengths, double link_radius,
                            double joint_limit) {
  if (link_lengths.empty()) throw std::invalid_argument("planar_arm: no links");
  ManipulatorModel model;
  model.dh.push_back(DhRow{});
  for (std::size_t i = 0; i + 1 < link_lengths.size(); ++i) {
    model.dh.push_back(DhRow{link_lengths[i], 0.0, 0.0, 0.0});
  }
  model.tool = DhRow{link_lengths.back(), 0.0, 0.0, 0.0};
  model.link_radius = link_radius;
  model.joint_limits.assign(link_lengths.size(), JointLimit{-joint_limit, joint_limit});
  model.segment_map = default_segment_map(model);
  model.validate();
  return model;
}

}  // namespace boxreach
