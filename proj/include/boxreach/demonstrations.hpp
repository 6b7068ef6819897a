#pragma once

#include <optional>
#include <vector>

#include "boxreach/environment.hpp"
#include "boxreach/random.hpp"
#include "json.hpp"

namespace boxreach {

struct Demonstration {
  std::vector<JointConfig> configs;
  GoalPose goal;
};

/// Damped least-squares pose solve used only for scripting demonstrations.
/// Returns a configuration within joint limits whose TCP satisfies the
/// scene's allowable errors (at half tolerance), or nullopt.
std::optional<JointConfig> solve_pose(const Scene& scene, const GoalPose& goal,
                                      const JointConfig& seed, int iterations = 300);

struct DemoConfig {
  int grid = 5;        // sub-areas per horizontal axis of the target region
  int length = 80;     // configurations per demonstration
  int restarts = 40;   // pose-solve seeds per sub-area
  int via_attempts = 200;
};

/// One demonstration per sub-area of the target region: a piecewise-linear
/// joint path from the home configuration (optionally through one via
/// configuration) that is verified collision-free, then held at the goal.
/// Sub-areas without a feasible path are skipped.
std::vector<Demonstration> scripted_demonstrations(const Scene& scene, const DemoConfig& config,
                                                   Rng& rng);

/// Time-parameterizes a piecewise-linear path over `length` configurations,
/// moving at 0.8 * dq_max (infinity norm) and then holding the last waypoint.
/// Returns nullopt when the path does not fit.
std::optional<std::vector<JointConfig>> timed_path(const std::vector<JointConfig>& waypoints,
                                                   int length, double dq_max);

nlohmann::json to_json(const std::vector<Demonstration>& demos);
std::vector<Demonstration> demonstrations_from_json(const nlohmann::json& j);

}  // namespace boxreach
