#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "csnicp/error.hpp"
#include "csnicp/metrics.hpp"
#include "csnicp/registration.hpp"
#include "csnicp/synth.hpp"
#include "csnicp/transform.hpp"

// JSON forms of transforms, reports and synthetic specs. Doubles are written
// in shortest round-trip form (at most 17 significant digits).

namespace csnicp {

inline nlohmann::json to_json(const RigidTransform& t) {
  nlohmann::json r = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) r.push_back({t.rotation(i, 0), t.rotation(i, 1), t.rotation(i, 2)});
  return {{"R", r}, {"T", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

inline RigidTransform transform_from_json(const nlohmann::json& j) {
  RigidTransform t;
  try {
    for (int i = 0; i < 3; ++i) {
      for (int c = 0; c < 3; ++c) t.rotation(i, c) = j.at("R").at(i).at(c).get<double>();
      t.translation[i] = j.at("T").at(i).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("transform: ") + e.what());
  }
  return t;
}

inline nlohmann::json to_json(const RegistrationReport& r) {
  nlohmann::json transforms = nlohmann::json::array();
  for (const auto& t : r.final_transforms) transforms.push_back(to_json(t));
  nlohmann::json sizes = nlohmann::json::array();
  for (const auto& m : r.partition_members) sizes.push_back(m.size());
  return {{"algorithm", r.algorithm},
          {"initial_rmse", r.initial_rmse},
          {"per_iteration_rmse", r.per_iteration_rmse},
          {"final_rmse", r.final_rmse},
          {"final_transforms", transforms},
          {"partition_sizes", sizes},
          {"accepted_pairs", r.accepted_pairs},
          {"rejected_pairs", r.rejected_pairs},
          {"converged", r.converged},
          {"iterations_used", r.iterations_used}};
}

inline nlohmann::json to_json(const OverlapReport& o) {
  return {{"iou", o.iou}, {"dice", o.dice}, {"d_mr", o.d_mr}, {"d_ct", o.d_ct}, {"rmse", o.rmse}};
}

namespace detail {

inline Point3 vec3(const nlohmann::json& j, const char* key, const Point3& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw InvalidInputError(std::string(key) + ": expected a 3-element array");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

inline nlohmann::json json_vec3(const Point3& p) { return {p.x(), p.y(), p.z()}; }

}  // namespace detail

/// Keys: shape ("ellipsoid" | "two_lobe_pelvis"), point_count, seed,
/// semi_axes, lobe_offset, bridge_half_extents. Missing keys take defaults.
inline PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  try {
    const auto shape = j.value("shape", std::string("ellipsoid"));
    PhantomSpec s;
    if (shape == "two_lobe_pelvis") s = two_lobe_spec(s.point_count, 0);
    else if (shape != "ellipsoid") throw InvalidInputError("phantom: unknown shape '" + shape + "'");
    s.point_count = j.value("point_count", s.point_count);
    s.seed = j.value("seed", s.seed);
    s.semi_axes = detail::vec3(j, "semi_axes", s.semi_axes);
    s.lobe_offset = detail::vec3(j, "lobe_offset", s.lobe_offset);
    s.bridge_half_extents = detail::vec3(j, "bridge_half_extents", s.bridge_half_extents);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("phantom spec: ") + e.what());
  }
}

inline nlohmann::json to_json(const PhantomSpec& s) {
  return {{"shape", s.shape == PhantomShape::Ellipsoid ? "ellipsoid" : "two_lobe_pelvis"},
          {"point_count", s.point_count},
          {"seed", s.seed},
          {"semi_axes", detail::json_vec3(s.semi_axes)},
          {"lobe_offset", detail::json_vec3(s.lobe_offset)},
          {"bridge_half_extents", detail::json_vec3(s.bridge_half_extents)}};
}

/// Keys: rotation_axis, rotation_angle (radians), translation, noise_sigma,
/// keep_fraction, seed, subsample ("random" | "slab").
inline PerturbationSpec perturbation_spec_from_json(const nlohmann::json& j) {
  try {
    PerturbationSpec s;
    s.rotation_axis = detail::vec3(j, "rotation_axis", s.rotation_axis);
    s.rotation_angle = j.value("rotation_angle", s.rotation_angle);
    s.translation = detail::vec3(j, "translation", s.translation);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.keep_fraction = j.value("keep_fraction", s.keep_fraction);
    s.seed = j.value("seed", s.seed);
    const auto mode = j.value("subsample", std::string("random"));
    if (mode == "random") s.subsample = Subsample::Random;
    else if (mode == "slab") s.subsample = Subsample::Slab;
    else throw InvalidInputError("perturbation: unknown subsample mode '" + mode + "'");
    if (j.contains("slab_direction")) s.slab_direction = detail::vec3(j, "slab_direction", Point3::UnitZ());
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("perturbation spec: ") + e.what());
  }
}

inline nlohmann::json to_json(const PerturbationSpec& s) {
  nlohmann::json j = {{"rotation_axis", detail::json_vec3(s.rotation_axis)},
          {"rotation_angle", s.rotation_angle},
          {"translation", detail::json_vec3(s.translation)},
          {"noise_sigma", s.noise_sigma},
          {"keep_fraction", s.keep_fraction},
          {"seed", s.seed},
          {"subsample", s.subsample == Subsample::Random ? "random" : "slab"}};
  if (s.slab_direction) j["slab_direction"] = detail::json_vec3(*s.slab_direction);
  return j;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace csnicp
