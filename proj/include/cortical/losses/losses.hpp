#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cortical/camgeo/camera.hpp"
#include "cortical/numcore/ops.hpp"
#include "cortical/supervise/keypoints.hpp"

namespace cortical::losses {

using camgeo::Vec2;
using camgeo::Vec3;

struct LossConfig {
  double tau = 0.01;
  double zeta = 0.1;
  double lambda = 1.0;
  bool normalize_features = true;

  // Throws ConfigError.
  void validate() const;
};

// Per-view M x C keypoint features plus the 3D positions used to build the
// negative sets.
struct KeypointFeatures {
  std::vector<Var> per_view;
  std::vector<Vec3> positions;

  std::size_t views() const { return per_view.size(); }
  std::size_t size() const { return positions.size(); }
};

// fm: C x H x W; uv in pixel-center coordinates of fm.
Var bilinear_sample(Var fm, const Vec2& uv);

// Wraps raw M x C feature rows, L2-normalizing them when requested.
KeypointFeatures make_keypoint_features(std::vector<Var> raw, std::vector<Vec3> positions, bool normalize);

// Samples every keypoint track from its view's feature map. Track pixels are
// in image coordinates of an image_height x image_width view and are
// rescaled to each map's resolution, then clamped to its sample domain.
KeypointFeatures sample_keypoint_features(std::span<const Var> feature_maps,
                                          const supervise::ConsistentKeypointBundle& bundle,
                                          std::size_t image_height, std::size_t image_width, bool normalize);

// Indices j != i with |p_i - p_j| > zeta, ascending.
std::vector<std::size_t> negative_set(std::size_t i, std::span<const Vec3> positions, double zeta);
// M x M 0/1 mask; row i marks negative_set(i).
Tensor negative_mask(std::span<const Vec3> positions, double zeta);

// Mean over queries i of (1 + G(D_ii)) / (1 + G(D_ii) + sum_{j in N(i)} G(D_ij))
// with D_ij = f_j^q . f_i^p - f_i^q . f_i^p and G(x) = sigmoid(x / tau).
// Throws FormatError for an empty bundle or a bad view index.
Var smooth_ap(const KeypointFeatures& kf, std::size_t p, std::size_t q, const LossConfig& cfg);

// 1 - (1/N) sum_p smooth_ap(p -> p+1 mod N). Throws FormatError when N < 2.
Var cgc_loss(const KeypointFeatures& kf, const LossConfig& cfg);

struct ActionLogits {
  std::vector<Var> translation;  // one H x W logit map per supervised view
  Var rotation;                  // 3 x R
  Var gripper;                   // 2
  Var collision;                 // 2
};

struct ActionTargets {
  std::vector<std::size_t> translation_pixels;  // flat pixel index per view
  std::array<std::size_t, 3> rotation_bins{};
  bool gripper_open = false;
  bool collision_allowed = false;
};

// Sum of softmax cross-entropies over every component. Throws FormatError
// for out-of-range targets or a view count mismatch.
Var action_loss(const ActionLogits& logits, const ActionTargets& target);

// sum target * (log target - log max(pred, 1e-12)). Both must sum to 1
// within 1e-5 (FormatError otherwise).
Var kl_saliency(Var pred, const Tensor& target);

// action + lambda * cgc; lambda == 0 returns action unchanged. Throws
// NumericalError when either term is non-finite.
Var total_loss(Var action, Var cgc, const LossConfig& cfg);

// {"name", "value", "grad_norm"} on one line.
std::string loss_report_json(const std::string& name, double value, double grad_norm);

}  // namespace cortical::losses
