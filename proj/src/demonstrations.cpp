#include "boxreach/demonstrations.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "boxreach/errors.hpp"

namespace boxreach {

namespace {

Vec3 rotation_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

Eigen::Matrix<double, 6, 1> pose_error(const Scene& scene, const GoalPose& goal,
                                       const JointConfig& q) {
  const RigidTransform tcp = tcp_pose(scene.model, q);
  Eigen::Matrix<double, 6, 1> e;
  e.head<3>() = goal.position - tcp.translation;
  e.tail<3>() = rotation_log(goal.rotation * tcp.rotation.transpose());
  return e;
}

}  // namespace

std::optional<JointConfig> solve_pose(const Scene& scene, const GoalPose& goal,
                                      const JointConfig& seed, int iterations) {
  const int dof = scene.dof();
  JointConfig q = scene.model.clamp(seed);
  constexpr double kStep = 1e-6;
  constexpr double kDamping = 1e-2;
  for (int it = 0; it < iterations; ++it) {
    const auto e = pose_error(scene, goal, q);
    const StateVector s = observe(scene, q, goal);
    if (s.position_error() <= 0.5 * scene.e_p_max && s.orientation_error() <= 0.5 * scene.e_o_max) {
      return q;
    }
    Eigen::MatrixXd jac(6, dof);
    const RigidTransform base = tcp_pose(scene.model, q);
    for (int j = 0; j < dof; ++j) {
      JointConfig qp = q;
      qp[j] += kStep;
      const RigidTransform moved = tcp_pose(scene.model, qp);
      jac.block<3, 1>(0, j) = (moved.translation - base.translation) / kStep;
      jac.block<3, 1>(3, j) = rotation_log(moved.rotation * base.rotation.transpose()) / kStep;
    }
    const Eigen::MatrixXd lhs =
        jac.transpose() * jac + kDamping * Eigen::MatrixXd::Identity(dof, dof);
    Eigen::VectorXd dq = lhs.ldlt().solve(jac.transpose() * e);
    const double biggest = dq.cwiseAbs().maxCoeff();
    if (biggest > 0.3) dq *= 0.3 / biggest;
    q = scene.model.clamp(q + dq);
  }
  return std::nullopt;
}

std::optional<std::vector<JointConfig>> timed_path(const std::vector<JointConfig>& waypoints,
                                                   int length, double dq_max) {
  if (waypoints.empty() || length < 2) return std::nullopt;
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    cumulative.push_back(cumulative.back() +
                         (waypoints[i] - waypoints[i - 1]).cwiseAbs().maxCoeff());
  }
  const double total = cumulative.back();
  const double speed = 0.8 * dq_max;
  const int arrive = std::max(1, static_cast<int>(std::ceil(total / speed)));
  if (arrive > length - 1) return std::nullopt;
  std::vector<JointConfig> out;
  out.reserve(length);
  for (int i = 0; i < length; ++i) {
    const double s = total * std::min(1.0, static_cast<double>(i) / arrive);
    std::size_t leg = 1;
    while (leg + 1 < waypoints.size() && cumulative[leg] < s) ++leg;
    if (waypoints.size() == 1) {
      out.push_back(waypoints.front());
      continue;
    }
    const double span = cumulative[leg] - cumulative[leg - 1];
    const double frac = span > 0.0 ? std::clamp((s - cumulative[leg - 1]) / span, 0.0, 1.0) : 1.0;
    out.push_back(waypoints[leg - 1] + (waypoints[leg] - waypoints[leg - 1]) * frac);
  }
  return out;
}

std::vector<Demonstration> scripted_demonstrations(const Scene& scene, const DemoConfig& config,
                                                   Rng& rng) {
  std::vector<Demonstration> demos;
  const TargetRegion& region = scene.target_region;
  auto random_config = [&] {
    JointConfig q(scene.dof());
    for (int j = 0; j < scene.dof(); ++j) {
      q[j] = uniform(rng, scene.model.joint_limits[j].min, scene.model.joint_limits[j].max);
    }
    return q;
  };
  for (int gx = 0; gx < config.grid; ++gx) {
    for (int gy = 0; gy < config.grid; ++gy) {
      GoalPose goal;
      goal.rotation = region.rotation;
      const Vec3 cell_frac((gx + uniform(rng, 0.25, 0.75)) / config.grid,
                           (gy + uniform(rng, 0.25, 0.75)) / config.grid, 0.5);
      goal.position = region.min + (region.max - region.min).cwiseProduct(cell_frac);

      std::optional<Demonstration> found;
      for (int r = 0; r < config.restarts && !found; ++r) {
        const JointConfig seed = r == 0 ? scene.home : random_config();
        const auto q_goal = solve_pose(scene, goal, seed);
        if (!q_goal || total_overlap(scene, *q_goal) > 0.0) continue;
        std::vector<std::vector<JointConfig>> routes{{scene.home, *q_goal}};
        for (int v = 0; v < config.via_attempts; ++v) {
          routes.push_back({scene.home, random_config(), *q_goal});
        }
        for (const auto& route : routes) {
          auto path = timed_path(route, config.length, scene.dq_max);
          if (!path || !verify_trajectory(scene, *path).collision_free) continue;
          found = Demonstration{std::move(*path), goal};
          break;
        }
      }
      if (found) demos.push_back(std::move(*found));
    }
  }
  return demos;
}

nlohmann::json to_json(const std::vector<Demonstration>& demos) {
  nlohmann::json list = nlohmann::json::array();
  for (const Demonstration& d : demos) {
    nlohmann::json configs = nlohmann::json::array();
    for (const JointConfig& q : d.configs) configs.push_back(std::vector<double>(q.begin(), q.end()));
    list.push_back({{"configs", configs},
                    {"goal", {{"position", {d.goal.position.x(), d.goal.position.y(), d.goal.position.z()}},
                              {"euler_zyx", {euler_zyx(d.goal.rotation)[0], euler_zyx(d.goal.rotation)[1],
                                             euler_zyx(d.goal.rotation)[2]}}}}});
  }
  return {{"format", "boxreach-demonstrations"}, {"version", 1}, {"demonstrations", list}};
}

std::vector<Demonstration> demonstrations_from_json(const nlohmann::json& j) {
  try {
    std::vector<Demonstration> demos;
    for (const auto& item : j.at("demonstrations")) {
      Demonstration d;
      for (const auto& row : item.at("configs")) {
        const auto v = row.get<std::vector<double>>();
        d.configs.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()));
      }
      const auto p = item.at("goal").at("position").get<std::vector<double>>();
      const auto e = item.at("goal").at("euler_zyx").get<std::vector<double>>();
      if (p.size() != 3 || e.size() != 3) throw ConfigError("demonstrations.goal", "need 3 values");
      d.goal.position = Vec3(p[0], p[1], p[2]);
      d.goal.rotation = rotation_from_euler_zyx(Vec3(e[0], e[1], e[2]));
      demos.push_back(std::move(d));
    }
    return demos;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("demonstrations", e.what());
  }
}

}  // namespace boxreach
