#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cortical/losses/losses.hpp"
#include "cortical/policy/encoders.hpp"
#include "cortical/policy/heads.hpp"
#include "cortical/supervise/keypoints.hpp"

namespace cortical::policy {

struct PolicyConfig {
  StaticEncoderConfig static_encoder;
  DynamicEncoderConfig dynamic_encoder;
  DecoderConfig decoder;
  losses::LossConfig loss;
  std::size_t grid = 32;
  DType compute = DType::f32;
  // Ablations. Without the dual stream the dynamic feature map is zero and
  // its heatmap uniform; without the dynamic heatmap only H4 is uniform.
  // Either way translation decoding uses the static views alone.
  bool dual_stream = true;
  bool dynamic_heatmap = true;

  bool uses_dynamic_heatmap() const { return dual_stream && dynamic_heatmap; }
  void validate() const;
};

// Static encoder, dynamic feature projection and action decoder. The dynamic encoder
// is initialized separately because it is pretrained and then frozen.
void init_policy(ParameterStore& store, Rng& rng, const PolicyConfig& cfg);

struct PolicySample {
  std::vector<render::ViewBundle> static_views;  // top, front, right
  render::ViewBundle dynamic_view;
  std::shared_ptr<const render::ColoredCloud> cloud;  // for the zoomed second stage
  std::size_t task = 0;
  ActionSample action;
  supervise::ConsistentKeypointBundle bundle;
  // Frozen dynamic-stream outputs (see cache_dynamic).
  Tensor f_sa;
  Tensor f_glc;
  Tensor saliency;  // static-resolution H x W
};

// Runs the frozen dynamic encoder once per sample and stores its outputs.
void cache_dynamic(std::vector<PolicySample>& samples, const ParameterStore& store, const PolicyConfig& cfg);

// Flat pixel of the translation target in each static view.
std::vector<std::size_t> translation_pixels(const PolicySample& sample);

struct SampleForward {
  losses::ActionLogits logits;
  std::vector<Tensor> heatmaps;  // 3 static + dynamic saliency, f64
  std::vector<Var> keypoint_maps;
  Var action_loss;
  Var cgc_loss;  // invalid when not requested or fewer than 2 keypoints
};

// One tape pass over a batch. cgc is computed when with_cgc is set.
std::vector<SampleForward> policy_forward(const Bound& p, const PolicyConfig& cfg,
                                          std::span<const PolicySample* const> batch, bool with_cgc);

struct StepMetrics {
  std::size_t step = 0;
  double loss_action = 0.0;
  double loss_cgc = 0.0;
  double loss_total = 0.0;
  double lr = 0.0;
};

std::string metrics_json(const StepMetrics& m);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch = 8;
  double lr = 2e-3;
  std::size_t warmup = 20;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainReport {
  std::vector<StepMetrics> steps;
  std::string dynamic_hash_before;
  std::string dynamic_hash_after;
};

// Minimizes L_action + lambda * L_cgc with AdamW over the static encoder,
// projection and decoder. Dynamic parameters are never updated. A
// non-finite loss restores the last good parameters and throws
// NumericalError.
TrainReport train_policy(ParameterStore& store, const PolicyConfig& cfg, const std::vector<PolicySample>& train,
                         const TrainConfig& tcfg);

struct EvalMetrics {
  std::size_t samples = 0;
  double translation_accuracy = 0.0;  // decoded cell within one cell per axis
  double rotation_accuracy = 0.0;     // all three bins exact
  double gripper_accuracy = 0.0;
  double collision_accuracy = 0.0;
  double mean_translation_error = 0.0;
  // Cyclic view pairs (p, q = p + 1). matched_cosine averages f_i^q . f_i^p;
  // cosine_alignment averages the cgc margin -D_ij, i.e. the matched cosine
  // minus the mean cosine to the negative set of i.
  double matched_cosine = 0.0;
  double cosine_alignment = 0.0;
  double cgc_loss = 0.0;
};

// With two_stage, the coarse point seeds a zoomed re-render of side
// `zoom` and the translation is decoded again from those views.
EvalMetrics evaluate_policy(const ParameterStore& store, const PolicyConfig& cfg,
                            const std::vector<PolicySample>& samples, const Bounds& workspace,
                            bool two_stage = false, double zoom = 0.4);

struct PretrainConfig {
  std::size_t epochs = 15;
  std::size_t batch = 8;
  double lr = 2e-3;
  double sigma_px = 1.5;
  std::uint64_t seed = 0;
  DType compute = DType::f32;
  std::function<void(std::size_t epoch, double mean_loss)> on_epoch;
};

struct PretrainReport {
  std::vector<double> epoch_loss;  // mean KL over each epoch's steps
  std::vector<double> step_loss;
};

// Minimizes kl_saliency(compressed saliency, saliency_target(label)) over
// every visible frame.
PretrainReport pretrain_position(ParameterStore& store, const DynamicEncoderConfig& cfg,
                                 const std::vector<render::EgoSequence>& data, const PretrainConfig& pcfg);

// Fraction of visible frames whose saliency argmax lies within tol_px of
// the label.
double saliency_hit_rate(const ParameterStore& store, const DynamicEncoderConfig& cfg,
                         const std::vector<render::EgoSequence>& data, double tol_px);

}  // namespace cortical::policy
