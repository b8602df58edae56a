#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cortical/camgeo/camera.hpp"
#include "cortical/numcore/tensor.hpp"

namespace cortical::supervise {

using camgeo::CameraModel;
using camgeo::Vec2;
using camgeo::Vec3;

struct Box {
  Vec3 lo;
  Vec3 hi;
  Vec3 color = Vec3(0.5, 0.5, 0.5);
};

struct Sphere {
  Vec3 center;
  double radius = 0.0;
  Vec3 color = Vec3(0.5, 0.5, 0.5);
};

struct SceneSpec {
  std::vector<Box> boxes;
  std::vector<Sphere> spheres;
  std::vector<CameraModel> cameras;
  // Hit confidences are drawn from [1 - noise, 1]; 0 gives exactly 1.
  double confidence_noise = 0.0;
};

// Per-view foundation-model output: depth and confidence are H x W f64.
struct ViewData {
  Tensor depth;
  Tensor confidence;
  CameraModel camera;
};

struct RayHit {
  double depth = 0.0;  // z-depth in the camera frame
  Vec3 point = Vec3::Zero();
  Vec3 color = Vec3::Zero();
};

// Nearest surface along the viewing ray through pixel uv. Pinhole rays
// start at the camera center; orthographic rays are full lines along the
// view axis.
std::optional<RayHit> raycast(const SceneSpec& scene, const CameraModel& camera, const Vec2& uv);

// Analytic depth/confidence maps for every camera in the scene: depth 0 and
// confidence 0 on background. Throws FormatError for a scene without
// geometry or cameras.
std::vector<ViewData> synth_scene_oracle(std::uint64_t seed, const SceneSpec& scene);

}  // namespace cortical::supervise
