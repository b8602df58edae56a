#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cortical/camgeo/camera.hpp"
#include "cortical/numcore/rng.hpp"
#include "cortical/numcore/tensor.hpp"

namespace cortical::render {

using camgeo::CameraModel;
using camgeo::Mat4;
using camgeo::Vec2;
using camgeo::Vec3;

struct ColoredCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;  // RGB in [0, 1]

  std::size_t size() const { return points.size(); }
  void append(const Vec3& p, const Vec3& rgb);
  // Throws FormatError on non-finite points or a length mismatch; clamps colors.
  void validate();
};

// Stored as a K x 6 tensor (x, y, z, r, g, b).
void write_cloud(const std::filesystem::path& stem, const ColoredCloud& cloud);
ColoredCloud read_cloud(const std::filesystem::path& stem);

// Channel layout of ViewBundle::image.
inline constexpr std::size_t kChannels = 7;
inline constexpr std::size_t kRgb = 0;
inline constexpr std::size_t kDepth = 3;
inline constexpr std::size_t kXyz = 4;

struct ViewBundle {
  Tensor image;  // 7 x H x W f64: RGB, depth, world xyz; zeros where invalid
  CameraModel camera;
  std::vector<bool> valid;

  std::size_t height() const { return camera.resolution().height; }
  std::size_t width() const { return camera.resolution().width; }
};

// Splats each point onto every pixel whose center lies within
// splat_radius_px of its projection (and always onto the pixel containing
// it). A pixel keeps the point with strictly smallest depth; earlier points
// win ties. Pinhole points with z <= 0 are skipped.
ViewBundle render_view(const ColoredCloud& cloud, const CameraModel& camera, double splat_radius_px = 1.0);

struct Bounds {
  Vec3 lo;
  Vec3 hi;
  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return 0.5 * (lo + hi); }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

// Orthographic top, front and right cameras. Each image axis is aligned with
// a workspace axis and the bounds fill the image exactly. Throws
// FormatError for degenerate bounds.
std::vector<CameraModel> make_static_cameras(const Bounds& bounds, std::size_t resolution);

struct JitterConfig {
  double scale = 0.0;            // 0 disables jitter
  double max_offset = 0.02;      // world units, per axis, times scale
  double max_tilt_deg = 5.0;     // optical-axis tilt, times scale
};

// wrist_pose maps the wrist frame to the world; its +z axis is the optical
// axis. Returns a pinhole camera with fx = fy = (W/2) / tan(fov/2) and the
// principal point at the image center. Throws FrameError for a non-rigid
// pose.
CameraModel make_dynamic_camera(const Mat4& wrist_pose, double fov_deg, std::size_t resolution,
                                const JitterConfig& jitter, Rng& rng);

struct Trajectory {
  std::vector<Mat4> wrist_poses;
  std::vector<Vec3> ee_positions;
};

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory(const std::filesystem::path& path);

struct EgoConfig {
  double fov_deg = 90.0;
  std::size_t resolution = 64;
  JitterConfig jitter;
  double splat_radius_px = 1.0;
  // Gripper marker rendered at the end-effector; radius 0 disables it.
  double marker_radius = 0.02;
  Vec3 marker_color = Vec3(1.0, 0.9, 0.1);
  std::uint64_t seed = 0;
};

struct EgoSequence {
  std::vector<ViewBundle> frames;
  std::vector<Vec2> labels;
  std::vector<Vec3> ee_world;
  std::vector<bool> visible;
};

// Points on a sphere used as the rendered gripper marker.
ColoredCloud marker_cloud(const Vec3& center, double radius, const Vec3& color);

EgoSequence render_ego_sequence(const Trajectory& traj, const ColoredCloud& cloud, const EgoConfig& cfg);

// Isotropic Gaussian over pixel centers around `label`, normalized to sum 1.
// Computed relative to the nearest pixel, so the argmax is the pixel
// containing the label and tiny sigmas give a one-hot map. Throws
// FormatError when the label is off-image and DomainError for sigma <= 0.
Tensor saliency_target(const Vec2& label, std::size_t height, std::size_t width, double sigma_px);

// Dataset layout: DIR/episode_{e}/frame_{t}.{bin,json} (7-channel f32) and
// DIR/episode_{e}/labels.json.
void write_ego_episode(const std::filesystem::path& dir, std::size_t episode, const EgoSequence& seq);
EgoSequence read_ego_episode(const std::filesystem::path& dir, std::size_t episode);
std::size_t count_ego_episodes(const std::filesystem::path& dir);

}  // namespace cortical::render
