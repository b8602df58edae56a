#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "cortical/camgeo/pointmap.hpp"
#include "cortical/supervise/scene.hpp"

namespace cortical::supervise {

struct SupervisionConfig {
  std::size_t M = 300;
  double nms_radius = 0.02;
  double covis_depth_eps = 0.01;
  // Relative to the first view's maximum confidence.
  double min_confidence = 0.1;

  void validate() const;
};

// M keypoints observed in N views. tracks[i * N + j] is the pixel of
// keypoint i in view j. Confidences are non-increasing.
struct ConsistentKeypointBundle {
  std::vector<Vec3> world_points;
  std::vector<Vec2> tracks;
  std::vector<double> confidences;
  std::size_t view_count = 0;
  // Candidates removed by the occlusion re-check during tracking.
  std::size_t dropped = 0;

  std::size_t size() const { return world_points.size(); }
  const Vec2& track(std::size_t i, std::size_t j) const { return tracks[i * view_count + j]; }
};

// Mask over view 0 pixels: valid, and for every other view j the world
// point lands inside image j with |projected depth - depth_j at that pixel|
// <= eps. With one view, every valid pixel is co-visible.
std::vector<bool> covisible_mask(std::span<const camgeo::PointMap> pointmaps_world,
                                 std::span<const CameraModel> cameras, double eps);

// Greedy 3D NMS: visit points by non-increasing confidence (lower index
// first on ties) and keep a point iff it is farther than `radius` from all
// kept points; stop after M.
std::vector<std::size_t> nms_select(std::span<const Vec3> points, std::span<const double> confidences,
                                    double radius, std::size_t M);

// Projects each point into every view and keeps it only if it re-passes the
// occlusion test against that view's depth map.
ConsistentKeypointBundle track_keypoints(std::span<const Vec3> points, std::span<const double> confidences,
                                         std::span<const CameraModel> cameras,
                                         std::span<const Tensor> depths, double eps);

// Full pipeline: unproject, co-visibility on view 0, confidence filter, NMS,
// tracking.
ConsistentKeypointBundle generate_bundle(const std::vector<ViewData>& views, const SupervisionConfig& cfg);

// File: u64 little-endian header length, JSON header {M, N, dropped,
// layout}, then f64 buffers world_points (M x 3), tracks (M x N x 2),
// confidences (M).
void write_bundle(const std::filesystem::path& path, const ConsistentKeypointBundle& bundle);
ConsistentKeypointBundle read_bundle(const std::filesystem::path& path);

}  // namespace cortical::supervise
