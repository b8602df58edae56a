#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "cortical/policy/params.hpp"
#include "cortical/render/render.hpp"

namespace cortical::policy {

using camgeo::CameraModel;
using camgeo::Vec2;
using camgeo::Vec3;
using render::Bounds;

struct ViewPrediction {
  Var feature_map;  // C x h x w (F_j)
  Var heatmap;      // H x W distribution (H_j)
};

// Bilinear resize to h x w followed by renormalization to sum 1.
Var heatmap_to_feature_resolution(Var heatmap, std::size_t height, std::size_t width);

// [phi(F1*H1) .. phi(F4*H4); psi(F1) .. psi(F4)] with phi = spatial sum and
// psi = spatial max, heatmaps resized to each feature resolution. Length 8C.
// Throws ShapeError unless given 4 predictions with equal C.
Var build_global_feature(std::span<const ViewPrediction> preds);

// Uniform grid of n^3 cell centers; linear index (ix * n + iy) * n + iz.
struct WorkspaceGrid {
  Bounds bounds;
  std::size_t n = 32;

  std::size_t size() const { return n * n * n; }
  Vec3 cell_size() const { return bounds.extent() / double(n); }
  Vec3 point(std::size_t ix, std::size_t iy, std::size_t iz) const;
  Vec3 point(std::size_t index) const;
  std::array<std::size_t, 3> cell_of(const Vec3& p) const;  // clamped to the grid
  std::size_t index(const std::array<std::size_t, 3>& cell) const { return (cell[0] * n + cell[1]) * n + cell[2]; }
};

// Bilinear lookup at pixel-center coordinates, with coordinates clamped to
// [0, W-1] x [0, H-1].
double heatmap_lookup(const Tensor& heatmap, const Vec2& uv);

struct TranslationDecode {
  Vec3 point;
  std::size_t index = 0;
  double score = 0.0;
};

// Exhaustive scan: score(g) = sum_j H_j(project(g, camera_j)) over views
// where g lands on the image (and in front of pinhole cameras). Ties go to
// the lowest linear index. Throws DecodeError if no grid point lands on any
// view.
TranslationDecode decode_translation(std::span<const Tensor> heatmaps, std::span<const CameraModel> cameras,
                                     const WorkspaceGrid& grid);

// (row, col) of the first maximal pixel.
std::array<std::size_t, 2> heatmap_argmax(const Tensor& heatmap);

// Feature vector (C) pooled from fm at the pixel of an H x W heatmap, with
// the pixel mapped to feature-map pixel-center coordinates.
Var pool_local(Var fm, std::size_t row, std::size_t col, std::size_t height, std::size_t width);

struct DecoderConfig {
  std::size_t channels = 32;
  std::size_t hidden = 128;
  std::size_t rotation_bins = 72;
};

void init_action_decoder(ParameterStore& store, Rng& rng, const DecoderConfig& cfg);

struct ActionHeads {
  Var rotation;   // 3 x R
  Var gripper;    // 2 (index 1 = open)
  Var collision;  // 2 (index 1 = allowed)
};

// global: 8C; locals: 4 vectors of C.
ActionHeads decode_action(const Bound& p, const DecoderConfig& cfg, Var global, std::span<const Var> locals);

struct ActionSample {
  Vec3 translation = Vec3::Zero();
  std::array<std::size_t, 3> cell{};
  std::array<std::size_t, 3> rotation_bins{};
  bool gripper_open = false;
  bool collision_allowed = false;
};

// Throws FormatError when the translation is outside the grid bounds or a
// bin is >= rotation_bins.
ActionSample make_action_sample(const Vec3& translation, std::array<std::size_t, 3> rotation_bins,
                                bool gripper_open, bool collision_allowed, const WorkspaceGrid& grid,
                                std::size_t rotation_bins_count);

struct RefinedViews {
  std::vector<render::ViewBundle> views;
  Bounds bounds;
  bool clipped = false;
};

// Re-renders the three static views over a cube of side `zoom` centered on
// the coarse point, keeping only cloud points inside the cube. A cube
// reaching outside the workspace is clipped to it (clipped = true).
RefinedViews refine_stage(const Vec3& coarse, const render::ColoredCloud& cloud, const Bounds& workspace,
                          double zoom, std::size_t resolution, double splat_radius_px);

}  // namespace cortical::policy
