#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "cortical/pipeline/synthetic.hpp"
#include "cortical/policy/training.hpp"

namespace cortical::pipeline {

// Every knob of the synth -> supervise -> render -> pretrain -> train ->
// eval chain. Defaults are the acceptance-run settings.
struct PipelineConfig {
  std::uint64_t seed = 0;
  Bounds workspace{Vec3(-0.4, -0.4, -0.05), Vec3(0.4, 0.4, 0.75)};

  struct Synth {
    std::size_t episodes = 200;
    double holdout_fraction = 0.2;  // trailing episodes held out for eval
    std::size_t ego_sequences = 50;
    std::size_t ego_heldout = 10;
    std::size_t ego_steps = 12;
    std::size_t distractors = 2;
    double point_spacing = 0.008;
    std::size_t rotation_bins = 72;
  } synth;

  struct Render {
    std::size_t static_resolution = 64;
    std::size_t ego_resolution = 64;
    double fov_deg = 90.0;
    double jitter = 1.0;  // scale of the wrist-camera jitter, 0 = rigid
    double splat_radius_px = 1.0;
  } render;

  supervise::SupervisionConfig supervision{300, 0.02, 0.02, 0.1};
  losses::LossConfig loss;

  struct Encoders {
    std::size_t static_channels = 32;
    std::size_t stem_channels = 16;
    std::size_t skip_channels = 8;
    std::size_t patch = 8;
    std::size_t width = 64;
    std::size_t saliency_resolution = 32;
    std::size_t slices = 2;
    std::size_t local_channels = 8;
    std::size_t decoder_hidden = 128;
  } encoders;

  struct Ablation {
    bool dual_stream = true;
    bool pretrain = true;
    bool dynamic_heatmap = true;
  } ablation;

  struct Pretrain {
    std::size_t epochs = 15;
    std::size_t batch = 8;
    double lr = 2e-3;
    double sigma_px = 1.5;
  } pretrain;

  struct Train {
    std::size_t epochs = 4;
    std::size_t batch = 8;
    double lr = 2e-3;
    std::size_t warmup = 20;
    double weight_decay = 1e-4;
  } train;

  // Extra pre-rendered copies per training episode, each with a random
  // z-rotation and horizontal shift of the whole scene.
  struct Augment {
    std::size_t copies = 0;
    double max_rotation_deg = 45.0;
    double max_translation = 0.125;
  } augment;

  struct Eval {
    std::size_t grid = 32;
    bool two_stage = false;
    double zoom = 0.4;
  } eval;

  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys raise ConfigError.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);

  // Hash of the canonical JSON of the sections a stage reads. Key order in
  // the source file does not matter.
  std::string stage_hash(const std::string& stage) const;

  SynthConfig synth_config() const;
  SampleConfig sample_config() const;
  policy::PolicyConfig policy_config() const;
  render::EgoConfig ego_config(std::uint64_t seed) const;
  std::size_t train_episode_count() const;
};

// Independent stream of seeds derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace cortical::pipeline
