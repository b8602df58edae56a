#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cortical/error.hpp"

namespace cortical::camgeo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

enum class CameraKind { pinhole, orthographic };

// Pinhole: fx, fy, cx, cy in pixels. Orthographic: fx, fy hold the
// pixels-per-world-unit scales sx, sy.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

struct Resolution {
  std::size_t height = 0;
  std::size_t width = 0;
};

// Pixel convention: uv = (column, row), pixel centers at integer values,
// (0, 0) is the top-left pixel center. The image covers the closed
// rectangle [-0.5, W - 0.5] x [-0.5, H - 0.5].
//
// Depth is z-depth along the camera's +z axis. Orthographic depth is signed
// and may be negative.
class CameraModel {
 public:
  // Throws FrameError for a non-rigid pose (rotation checked to 1e-6) and
  // DomainError for non-positive focal/scale values or an empty resolution.
  CameraModel(CameraKind kind, Intrinsics intrinsics, const Mat4& world_to_camera,
              Resolution resolution);

  static CameraModel pinhole(double fx, double fy, double cx, double cy, const Mat4& pose,
                             Resolution res) {
    return {CameraKind::pinhole, {fx, fy, cx, cy}, pose, res};
  }
  static CameraModel orthographic(double sx, double sy, double cx, double cy,
                                  const Mat4& pose, Resolution res) {
    return {CameraKind::orthographic, {sx, sy, cx, cy}, pose, res};
  }

  CameraKind kind() const { return kind_; }
  const Intrinsics& intrinsics() const { return intrinsics_; }
  const Mat4& pose() const { return pose_; }
  Mat3 rotation() const { return pose_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return pose_.topRightCorner<3, 1>(); }
  Resolution resolution() const { return resolution_; }
  // Camera center in world coordinates.
  Vec3 center() const;

  Vec3 to_camera(const Vec3& world) const;
  Vec3 to_world(const Vec3& camera) const;

  // Camera-frame point at pixel uv with depth d.
  Vec3 unproject_camera(const Vec2& uv, double depth) const;

  bool in_image(const Vec2& uv) const;

 private:
  CameraKind kind_;
  Intrinsics intrinsics_;
  Mat4 pose_;
  Resolution resolution_;
};

struct Projection {
  Vec2 uv = Vec2::Zero();
  double depth = 0.0;
  bool behind = false;  // pinhole only: z <= 0 in the camera frame
};

Projection project(const Vec3& world, const CameraModel& camera);
Vec3 unproject_point(const Vec2& uv, double depth, const CameraModel& camera);

// Pixel (row, col) whose cell [k - 0.5, k + 0.5) contains uv, with the far
// image edge assigned to the last pixel; false when off-image.
bool pixel_of(const Vec2& uv, const CameraModel& camera, std::size_t& row, std::size_t& col);

// Rigid transform helpers.
bool is_rigid(const Mat4& m, double tol = 1e-6);
Mat4 rigid_inverse(const Mat4& m);
Mat4 make_pose(const Mat3& rotation, const Vec3& translation);
// Rotation about a unit axis by `radians`.
Mat3 axis_angle(const Vec3& axis, double radians);
// World-to-camera pose for a camera at `eye` looking at `target`. Camera
// axes: +z forward, +x right, +y down in the image; `up` fixes the roll.
Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

// Camera file: {"kind", "intrinsics": {fx, fy, cx, cy}, "pose": [16 row-major],
// "resolution": [H, W]}. Orthographic files use sx, sy in place of fx, fy.
std::string camera_to_json(const CameraModel& camera);
CameraModel camera_from_json(const std::string& text);
void write_camera(const std::filesystem::path& path, const CameraModel& camera);
CameraModel read_camera(const std::filesystem::path& path);

}  // namespace cortical::camgeo
