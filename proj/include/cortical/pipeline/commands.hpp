#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cortical/pipeline/config.hpp"

namespace cortical::pipeline {

inline constexpr const char* kVersion = "0.1.0";

// Stage directories under the run root, in pipeline order.
inline const std::vector<std::string> kStages{"synth", "supervise", "render", "pretrain", "train", "eval"};

struct CommandOptions {
  std::filesystem::path root;  // --out
  bool cached = false;
  std::function<void(const std::string&)> log;
};

struct CommandResult {
  bool cached = false;
  nlohmann::json summary;  // also stored in the manifest
};

// Each command writes <root>/<stage>/ plus <root>/<stage>/manifest.json
// {command, version, config_hash, config, inputs, outputs_hash, summary}.
// Missing or stale upstream stages raise PipelineError naming the stage.
// With cached, a stage whose manifest matches the current config, inputs and
// files is left untouched.
CommandResult cmd_synth(const PipelineConfig& cfg, const CommandOptions& opt);
CommandResult cmd_supervise(const PipelineConfig& cfg, const CommandOptions& opt);
CommandResult cmd_render(const PipelineConfig& cfg, const CommandOptions& opt);
CommandResult cmd_pretrain(const PipelineConfig& cfg, const CommandOptions& opt);
CommandResult cmd_train(const PipelineConfig& cfg, const CommandOptions& opt);
CommandResult cmd_eval(const PipelineConfig& cfg, const CommandOptions& opt);

// Hash over the relative paths and contents of every file under dir except
// manifest.json.
std::string directory_hash(const std::filesystem::path& dir);

// Episode files: episode.json plus one cloud per keyframe. Cells are
// recomputed from the translation on read with the given grid.
void write_episode(const std::filesystem::path& dir, const DemoEpisode& ep);
DemoEpisode read_episode(const std::filesystem::path& dir, const policy::WorkspaceGrid& grid,
                         std::size_t rotation_bins);

// View files: <stem>_image (f32), <stem>_valid and <stem>_camera.json.
void write_view(const std::filesystem::path& stem, const render::ViewBundle& view);
render::ViewBundle read_view(const std::filesystem::path& stem);

// Assembles policy samples for episodes [begin, end) from the synth,
// supervise and render stages.
std::vector<policy::PolicySample> load_samples(const PipelineConfig& cfg, const std::filesystem::path& root,
                                               std::size_t begin, std::size_t end);

}  // namespace cortical::pipeline
