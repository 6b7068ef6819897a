#pragma once

#include <filesystem>

#include "boxreach/environment.hpp"
#include "boxreach/kinematics.hpp"
#include "json.hpp"

namespace boxreach {

/// Manipulator description:
///   {"dh": [{"a", "alpha", "d", "q_home"}...], "tool": {...} (optional),
///    "link_radius": r, "joint_limits": [[min, max]...],
///    "segment_map": [[from, to]...] (optional; consecutive frames by default)}
ManipulatorModel manipulator_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ManipulatorModel& model);

/// Scene description; "manipulator" is either an inline object or a path
/// relative to `base_dir`. See README for the full schema.
SceneSpec scene_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

Scene load_scene(const std::filesystem::path& path);

}  // namespace boxreach
