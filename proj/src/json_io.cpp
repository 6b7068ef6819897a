#include "boxreach/json_io.hpp"

#include <fstream>

#include "boxreach/errors.hpp"

namespace boxreach {

namespace {

using nlohmann::json;

const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + "." + key, "missing");
  return j.at(key);
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

double number_or(const json& j, const char* key, double fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  return number(j.at(key), path + "." + key);
}

Vec3 vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(path, "expected [x, y, z]");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]"), number(j[2], path + "[2]")};
}

DhRow dh_row(const json& j, const std::string& path) {
  DhRow row;
  row.a = number_or(j, "a", 0.0, path);
  row.alpha = number_or(j, "alpha", 0.0, path);
  row.d = number_or(j, "d", 0.0, path);
  row.q_home = number_or(j, "q_home", 0.0, path);
  return row;
}

Mat3 rotation_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(path, "expected a 3x3 array");
  Mat3 r;
  for (int i = 0; i < 3; ++i) r.row(i) = vec3(j[i], path + "[" + std::to_string(i) + "]");
  return r;
}

}  // namespace

ManipulatorModel manipulator_from_json(const json& j) {
  const std::string root = "manipulator";
  ManipulatorModel m;
  const json& dh = field(j, "dh", root);
  if (!dh.is_array() || dh.empty()) throw ConfigError(root + ".dh", "expected a non-empty array");
  for (std::size_t i = 0; i < dh.size(); ++i) {
    m.dh.push_back(dh_row(dh[i], root + ".dh[" + std::to_string(i) + "]"));
  }
  if (j.contains("tool")) m.tool = dh_row(j.at("tool"), root + ".tool");
  m.link_radius = number(field(j, "link_radius", root), root + ".link_radius");
  const json& limits = field(j, "joint_limits", root);
  for (std::size_t i = 0; i < limits.size(); ++i) {
    const std::string path = root + ".joint_limits[" + std::to_string(i) + "]";
    if (!limits[i].is_array() || limits[i].size() != 2) throw ConfigError(path, "expected [min, max]");
    m.joint_limits.push_back({number(limits[i][0], path), number(limits[i][1], path)});
  }
  if (j.contains("segment_map")) {
    for (const auto& pair : j.at("segment_map")) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
          !pair[1].is_number_integer()) {
        throw ConfigError(root + ".segment_map", "expected [from, to] pairs");
      }
      m.segment_map.emplace_back(pair[0].get<int>(), pair[1].get<int>());
    }
  } else {
    m.segment_map = default_segment_map(m);
  }
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(root, e.what());
  }
  return m;
}

json to_json(const ManipulatorModel& m) {
  auto row = [](const DhRow& r) {
    return json{{"a", r.a}, {"alpha", r.alpha}, {"d", r.d}, {"q_home", r.q_home}};
  };
  json out;
  out["dh"] = json::array();
  for (const DhRow& r : m.dh) out["dh"].push_back(row(r));
  if (m.tool) out["tool"] = row(*m.tool);
  out["link_radius"] = m.link_radius;
  out["joint_limits"] = json::array();
  for (const JointLimit& l : m.joint_limits) out["joint_limits"].push_back({l.min, l.max});
  out["segment_map"] = json::array();
  for (const auto& [a, b] : m.segment_map) out["segment_map"].push_back({a, b});
  return out;
}

SceneSpec scene_spec_from_json(const json& j, const std::filesystem::path& base_dir) {
  SceneSpec spec;
  const json& manip = field(j, "manipulator", "scene");
  if (manip.is_string()) {
    spec.model = manipulator_from_json(read_json_file(base_dir / manip.get<std::string>()));
  } else {
    spec.model = manipulator_from_json(manip);
  }
  if (j.contains("boxes")) {
    const json& boxes = j.at("boxes");
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const std::string path = "boxes[" + std::to_string(i) + "]";
      Aabb box;
      box.min = vec3(field(boxes[i], "min", path), path + ".min");
      box.max = vec3(field(boxes[i], "max", path), path + ".max");
      if (boxes[i].contains("frame")) {
        const json& f = boxes[i].at("frame");
        RigidTransform t;
        t.rotation = rotation_matrix(field(f, "rotation", path + ".frame"), path + ".frame.rotation");
        t.translation = vec3(field(f, "translation", path + ".frame"), path + ".frame.translation");
        box.frame = t;
      }
      spec.boxes.push_back(box);
    }
  }
  spec.safety_offset = number_or(j, "safety_offset", spec.safety_offset, "scene");
  const json& region = field(j, "target_region", "scene");
  spec.target_region.min = vec3(field(region, "min", "target_region"), "target_region.min");
  spec.target_region.max = vec3(field(region, "max", "target_region"), "target_region.max");
  if (region.contains("orientation_zyx")) {
    spec.target_region.rotation =
        rotation_from_euler_zyx(vec3(region.at("orientation_zyx"), "target_region.orientation_zyx"));
  }
  if (j.contains("allowable_errors")) {
    const json& e = j.at("allowable_errors");
    spec.e_p_max = number_or(e, "position", spec.e_p_max, "allowable_errors");
    spec.e_o_max = number_or(e, "orientation", spec.e_o_max, "allowable_errors");
  }
  spec.zeta = number_or(j, "zeta", spec.zeta, "scene");
  if (j.contains("max_steps")) spec.max_steps = static_cast<int>(number(j.at("max_steps"), "max_steps"));
  spec.dq_max = number_or(j, "dq_max", spec.dq_max, "scene");
  if (j.contains("norm_scales")) {
    spec.position_scale = number_or(j.at("norm_scales"), "position", 0.0, "norm_scales");
    spec.orientation_scale = number_or(j.at("norm_scales"), "orientation", 0.0, "norm_scales");
  }
  if (j.contains("home")) {
    const json& home = j.at("home");
    if (!home.is_array()) throw ConfigError("home", "expected an array");
    spec.home.resize(static_cast<Eigen::Index>(home.size()));
    for (std::size_t i = 0; i < home.size(); ++i) {
      spec.home[static_cast<Eigen::Index>(i)] = number(home[i], "home[" + std::to_string(i) + "]");
    }
  }
  return spec;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

Scene load_scene(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  return build_scene(scene_spec_from_json(j, path.parent_path()));
}

}  // namespace boxreach
