#include "cortical/camgeo/pointmap.hpp"

#include <cmath>
#include <limits>

namespace cortical::camgeo {
namespace {

const Vec3 kNaN3 = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());

template <typename Fn>
PointMap transform(const PointMap& pm, Frame from, Frame to, Fn&& fn) {
  if (pm.frame != from) throw FrameError("point map is in the wrong frame");
  PointMap out = pm;
  out.frame = to;
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    if (out.valid[i]) out.points[i] = fn(pm.points[i]);
  }
  return out;
}

}  // namespace

std::size_t PointMap::valid_count() const {
  std::size_t n = 0;
  for (bool v : valid) n += v ? 1 : 0;
  return n;
}

PointMap unproject(const Tensor& depth, const CameraModel& camera) {
  const auto res = camera.resolution();
  if (depth.shape() != Shape{res.height, res.width}) {
    throw ShapeError("depth map " + shape_str(depth.shape()) + " does not match camera resolution");
  }
  PointMap pm;
  pm.height = res.height;
  pm.width = res.width;
  pm.frame = Frame::camera;
  pm.points.assign(res.height * res.width, kNaN3);
  pm.valid.assign(res.height * res.width, false);
  const bool pinhole = camera.kind() == CameraKind::pinhole;
  for (std::size_t r = 0; r < res.height; ++r) {
    for (std::size_t c = 0; c < res.width; ++c) {
      const std::size_t i = r * res.width + c;
      const double d = depth.get(i);
      const bool ok = std::isfinite(d) && (pinhole ? d > 0.0 : d != 0.0);
      if (!ok) continue;
      pm.points[i] = camera.unproject_camera({static_cast<double>(c), static_cast<double>(r)}, d);
      pm.valid[i] = true;
    }
  }
  return pm;
}

PointMap to_world(const PointMap& pm, const CameraModel& camera) {
  return transform(pm, Frame::camera, Frame::world, [&](const Vec3& p) { return camera.to_world(p); });
}

PointMap to_camera(const PointMap& pm, const CameraModel& camera) {
  return transform(pm, Frame::world, Frame::camera, [&](const Vec3& p) { return camera.to_camera(p); });
}

}  // namespace cortical::camgeo
