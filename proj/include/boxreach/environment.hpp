#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "boxreach/geometry.hpp"
#include "boxreach/kinematics.hpp"
#include "boxreach/random.hpp"

namespace boxreach {

struct GoalPose {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
};

/// Axis-aligned region of goal positions sharing one orientation.
struct TargetRegion {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
};

/// Everything needed to build a Scene. Loaded from JSON by load_scene().
struct SceneSpec {
  ManipulatorModel model;
  std::vector<Aabb> boxes;
  double safety_offset = 0.05;
  TargetRegion target_region;
  double e_p_max = 0.01;
  double e_o_max = 0.02;
  double zeta = 1.0;
  int max_steps = 300;
  double dq_max = 0.05;
  /// Non-positive values select the defaults: 2 * total link length and 3*pi.
  double position_scale = 0.0;
  double orientation_scale = 0.0;
  JointConfig home;
};

/// Immutable task space. Obstacles are stored both raw and expanded by the
/// link radius plus the safety offset.
struct Scene {
  ManipulatorModel model;
  std::vector<Aabb> raw_boxes;
  std::vector<Aabb> expanded_boxes;
  double safety_offset = 0.0;
  TargetRegion target_region;
  double e_p_max = 0.0;
  double e_o_max = 0.0;
  double zeta = 1.0;
  int max_steps = 0;
  double dq_max = 0.0;
  double position_scale = 1.0;
  double orientation_scale = 1.0;
  JointConfig home;

  int dof() const { return model.dof(); }
};

/// Validates the scene description and precomputes expanded boxes. Throws ConfigError.
Scene build_scene(SceneSpec spec);

/// Intrinsic Z-Y-X angles (yaw, pitch, roll) with R = Rz * Ry * Rx.
Vec3 euler_zyx(const Mat3& rotation);
Mat3 rotation_from_euler_zyx(const Vec3& yaw_pitch_roll);
double wrap_angle(double angle);

struct StateVector {
  JointConfig q;
  Vec3 tcp_position;
  Vec3 tcp_euler;
  Vec3 goal_position;
  Vec3 goal_euler;
  Vec3 dp;        // (p_G - p_T) / position scale
  Vec3 d_orient;  // Euler angles of R_T^T R_G / orientation scale
  bool at_goal = false;

  double position_error() const { return dp.norm(); }
  double orientation_error() const { return d_orient.lpNorm<1>(); }

  Eigen::VectorXd flatten() const;
  static int flat_size(int dof) { return dof + 19; }
};

StateVector observe(const Scene& scene, const JointConfig& q, const GoalPose& goal);

/// Negative normalized overlap of all link segments with the expanded boxes,
/// clamped to [-1, 0].
double uoar_reward(const Scene& scene, const JointConfig& q);

/// Banded bonus near the goal: 0.25 per error inside twice its tolerance.
double aux_pose_bonus(const Scene& scene, double e_p, double e_o);
double pose_reward_from_errors(const Scene& scene, double e_p, double e_o);
double pose_reward(const Scene& scene, const JointConfig& q, const GoalPose& goal);

/// Combined reward r_pose + zeta * r_uoar at configuration q.
double reward(const Scene& scene, const JointConfig& q, const GoalPose& goal);

struct StepResult {
  JointConfig q;
  StateVector state;
  double reward = 0.0;
  bool done = false;
};

/// Applies the joint increment `dq` (radians, clipped to +-dq_max), clamps to
/// joint limits and scores the resulting configuration. `step_index` is the
/// zero-based index of this step within its episode.
StepResult step(const Scene& scene, const JointConfig& q, const Eigen::VectorXd& dq,
                const GoalPose& goal, int step_index);

GoalPose sample_goal(const Scene& scene, Rng& rng);

struct TrajectoryCheck {
  bool collision_free = true;
  /// Entry i is the largest total overlap seen at config i or on the
  /// interpolated sub-steps leading into it.
  std::vector<double> overlap;
};

/// Checks every configuration and linear sub-steps between neighbours so no
/// joint moves more than dq_max between checks.
TrajectoryCheck verify_trajectory(const Scene& scene, const std::vector<JointConfig>& trajectory);

/// Total overlap of all segments with the expanded boxes at q.
double total_overlap(const Scene& scene, const JointConfig& q);

/// Smallest segment-to-raw-box distance over the trajectory, in meters.
double min_clearance(const Scene& scene, const std::vector<JointConfig>& trajectory);

/// Sum of TCP displacements between consecutive configurations.
double tcp_path_length(const Scene& scene, const std::vector<JointConfig>& trajectory);

/// One row per configuration, columns q0..q{n-1} in radians.
void write_trajectory_csv(std::ostream& out, const std::vector<JointConfig>& trajectory);
std::vector<JointConfig> read_trajectory_csv(std::istream& in);

}  // namespace boxreach
