#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "boxreach/geometry.hpp"

namespace boxreach {

using JointConfig = Eigen::VectorXd;

/// One row of a DH table. The joint variable enters as q + q_home.
struct DhRow {
  double a = 0.0;
  double alpha = 0.0;
  double d = 0.0;
  double q_home = 0.0;
};

struct JointLimit {
  double min = 0.0;
  double max = 0.0;
};

/// Serial arm description.
///
/// Frame indices used by `segment_map`: 0 is the base, i in [1, DoF] is the
/// frame after joint i, and DoF + 1 is the tool frame when `tool` is set.
/// The tool row is a fixed transform evaluated at zero joint angle; it carries
/// the length of the last link in the Rot(alpha) Trans(a) Rot(q) Trans(d)
/// ordering, where a row's `a` and `alpha` precede its own joint.
struct ManipulatorModel {
  std::vector<DhRow> dh;
  std::optional<DhRow> tool;
  double link_radius = 0.0;
  std::vector<JointLimit> joint_limits;
  std::vector<std::pair<int, int>> segment_map;

  int dof() const { return static_cast<int>(dh.size()); }
  int frame_count() const { return dof() + 1 + (tool ? 1 : 0); }

  /// Sum of |a| + |d| over all rows including the tool; an upper bound on reach.
  double total_link_length() const;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  JointConfig clamp(const JointConfig& q) const;
  bool within_limits(const JointConfig& q, double slack = 0.0) const;
};

RigidTransform dh_transform(const DhRow& row, double q);

/// Cumulative joint frames T_1^0 ... T_DoF^0 (tool excluded).
std::vector<RigidTransform> forward_kinematics(const ManipulatorModel& model,
                                               const JointConfig& q);

/// Base, joint frames and tool frame (when present), indexed as in
/// ManipulatorModel::segment_map.
std::vector<RigidTransform> all_frames(const ManipulatorModel& model, const JointConfig& q);

std::vector<Segment> link_segments(const ManipulatorModel& model, const JointConfig& q);

/// Pose of the tool center point: the tool frame if present, otherwise the
/// last joint frame.
RigidTransform tcp_pose(const ManipulatorModel& model, const JointConfig& q);

/// Consecutive segments over all frames, skipping coincident frame pairs at
/// the zero configuration.
std::vector<std::pair<int, int>> default_segment_map(const ManipulatorModel& model);

/// Planar arms moving in the world x-y plane. The last length goes into the
/// tool row so the tip follows the usual closed form.
ManipulatorModel planar_arm(const std::vector<double>& link_lengths, double link_radius,
                            double joint_limit);

}  // namespace boxreach
