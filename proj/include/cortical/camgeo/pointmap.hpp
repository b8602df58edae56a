#pragma once

#include <vector>

#include "cortical/camgeo/camera.hpp"
#include "cortical/numcore/tensor.hpp"

namespace cortical::camgeo {

enum class Frame { camera, world };

// H x W grid of 3D points. Invalid pixels hold NaN coordinates.
struct PointMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Vec3> points;
  std::vector<bool> valid;
  Frame frame = Frame::camera;

  const Vec3& at(std::size_t row, std::size_t col) const { return points[row * width + col]; }
  bool valid_at(std::size_t row, std::size_t col) const { return valid[row * width + col]; }
  std::size_t valid_count() const;
};

// depth: H x W tensor. Zero, NaN, negative (pinhole) and infinite depths
// mark invalid pixels; orthographic cameras accept negative depths.
// Throws ShapeError when the depth shape differs from the camera resolution.
PointMap unproject(const Tensor& depth, const CameraModel& camera);

// Throws FrameError unless pm is in the camera frame.
PointMap to_world(const PointMap& pm, const CameraModel& camera);
// Throws FrameError unless pm is in the world frame.
PointMap to_camera(const PointMap& pm, const CameraModel& camera);

}  // namespace cortical::camgeo
