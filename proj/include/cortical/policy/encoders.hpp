#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cortical/policy/params.hpp"
#include "cortical/render/render.hpp"

namespace cortical::policy {

struct StaticEncoderConfig {
  std::size_t resolution = 64;
  std::size_t channels = 32;      // C
  std::size_t stem_channels = 16;
  std::size_t skip_channels = 8;
  std::size_t tasks = 2;

  // Two stride-2 stages.
  std::size_t feature_resolution() const { return resolution / 4; }
};

void init_static_encoder(ParameterStore& store, Rng& rng, const StaticEncoderConfig& cfg);

struct StaticOutput {
  Var features;       // B x C x h x w (F_j)
  Var keypoint_maps;  // B x C x h x w, output of the appended 3x3 refinement conv
  Var heat_logits;    // B x H x W
  Var heatmaps;       // B x H x W, softmax over each map (H_j)
};

// Stacks views into a B x 7 x H x W tensor. Throws ShapeError when the
// views do not share a resolution.
Tensor stack_views(std::span<const render::ViewBundle> views, DType dtype = DType::f64);

// views: B x 7 x H x W; one task id per batch item. Items never mix.
StaticOutput static_encode(const Bound& p, const StaticEncoderConfig& cfg, Var views,
                           std::span<const std::size_t> tasks);

struct DynamicEncoderConfig {
  std::size_t resolution = 64;  // egocentric frame side
  std::size_t patch = 8;
  std::size_t width = 64;       // D
  std::size_t saliency_resolution = 32;
  std::size_t slices = 2;       // temporal slices of the raw saliency
  std::size_t local_channels = 8;

  std::size_t grid() const { return resolution / patch; }  // P
  // P = 16, D = 768, 224 px frames and 128 x 128 raw saliency.
  static DynamicEncoderConfig full_scale();
  void validate() const;
};

void init_dynamic_encoder(ParameterStore& store, Rng& rng, const DynamicEncoderConfig& cfg);

struct DynamicFeatures {
  Var f_sa;          // (P*P) x D
  Var f_glc;         // (P*P) x D
  Var raw_saliency;  // 1 x T x h x w, each slice sums to 1
  Var saliency;      // 1 x 1 x H x W, sums to 1
};

// frame: 7 x R x R. The compressed saliency is produced at
// target_resolution (the static-view resolution).
DynamicFeatures dynamic_encode(const Bound& p, const DynamicEncoderConfig& cfg, Var frame,
                               std::size_t target_resolution);

// F = LP([f_sa, f_glc]) with parameters "lp.w" (2D x C) and "lp.b".
// Throws ShapeError when the token grids differ.
Var project_dynamic(const Bound& p, Var f_sa, Var f_glc);
void init_projection(ParameterStore& store, Rng& rng, std::size_t width, std::size_t channels);

// raw: 1 x T x h x w. Resizes every slice bilinearly to H x W, mixes the
// slices with a temporal convolution whose kernel is softmax(temporal_logits),
// and renormalizes to sum 1. Returns 1 x 1 x H x W.
Var compress_saliency(Var raw, std::size_t height, std::size_t width, Var temporal_logits);

}  // namespace cortical::policy
