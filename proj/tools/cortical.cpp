#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"

#include "cortical/error.hpp"
#include "cortical/pipeline/commands.hpp"

using namespace cortical;
using namespace cortical::pipeline;

namespace {

enum Exit { kOk = 0, kConfig = 2, kPipeline = 3, kNumerical = 4 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = "run";
  std::optional<std::size_t> m, grid, episodes;
  std::optional<double> zeta, tau, lambda, nms_radius, fov, jitter;
  bool two_stage = false, cached = false;
  bool single_stream = false, no_pretrain = false, no_dynamic_heatmap = false;
};

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : PipelineConfig::load(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.m) cfg.supervision.M = *o.m;
  if (o.zeta) cfg.loss.zeta = *o.zeta;
  if (o.tau) cfg.loss.tau = *o.tau;
  if (o.lambda) cfg.loss.lambda = *o.lambda;
  if (o.nms_radius) cfg.supervision.nms_radius = *o.nms_radius;
  if (o.fov) cfg.render.fov_deg = *o.fov;
  if (o.jitter) cfg.render.jitter = *o.jitter;
  if (o.grid) cfg.eval.grid = *o.grid;
  if (o.episodes) cfg.synth.episodes = *o.episodes;
  if (o.two_stage) cfg.eval.two_stage = true;
  if (o.single_stream) cfg.ablation.dual_stream = false;
  if (o.no_pretrain) cfg.ablation.pretrain = false;
  if (o.no_dynamic_heatmap) cfg.ablation.dynamic_heatmap = false;
  cfg.validate();
  return cfg;
}

int run(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "pipeline error: " << e.what() << "\n";
    return kPipeline;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-stream manipulation policy pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--seed", o.seed, "Run seed");
  app.add_option("--config", o.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "Run root directory")->capture_default_str();
  app.add_option("--m", o.m, "Keypoints per view");
  app.add_option("--zeta", o.zeta, "Negative-set exclusion radius (world units)");
  app.add_option("--tau", o.tau, "SmoothAP temperature");
  app.add_option("--lambda", o.lambda, "Weight of the consistency loss");
  app.add_option("--nms-radius", o.nms_radius, "Keypoint NMS radius (world units)");
  app.add_option("--fov", o.fov, "Wrist camera field of view (degrees)");
  app.add_option("--jitter", o.jitter, "Wrist camera jitter scale, 0 = rigid");
  app.add_option("--grid", o.grid, "Translation grid cells per axis");
  app.add_option("--episodes", o.episodes, "Synthetic episode count");
  app.add_flag("--two-stage", o.two_stage, "Zoomed second decoding stage");
  app.add_flag("--cached", o.cached, "Skip stages whose manifest matches");
  app.add_flag("--single-stream", o.single_stream, "Ablation: drop the dynamic stream");
  app.add_flag("--no-pretrain", o.no_pretrain, "Ablation: skip position pretraining");
  app.add_flag("--no-dynamic-heatmap", o.no_dynamic_heatmap, "Ablation: uniform dynamic heatmap");

  using Cmd = CommandResult (*)(const PipelineConfig&, const CommandOptions&);
  const std::map<std::string, std::pair<Cmd, std::string>> commands{
      {"synth", {cmd_synth, "Generate synthetic pick-place episodes and ego trajectories"}},
      {"supervise", {cmd_supervise, "Build consistent keypoint bundles from the static views"}},
      {"render", {cmd_render, "Render static, dynamic and egocentric views"}},
      {"pretrain", {cmd_pretrain, "Pretrain the dynamic encoder on end-effector saliency"}},
      {"train", {cmd_train, "Train the policy with the action and consistency losses"}},
      {"eval", {cmd_eval, "Evaluate the trained policy on held-out episodes"}},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) subs[name] = app.add_subcommand(name, entry.second);
  CLI::App* all = app.add_subcommand("run", "Run every stage in order");
  CLI::App* show = app.add_subcommand("config", "Print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  return run([&] {
    const PipelineConfig cfg = resolve(o);
    if (show->parsed()) {
      std::cout << cfg.to_json().dump(2) << "\n";
      return;
    }
    CommandOptions opt;
    opt.root = o.out;
    opt.cached = o.cached;
    opt.log = [](const std::string& msg) { std::cerr << msg << "\n"; };
    auto exec = [&](const std::string& name) {
      const CommandResult r = commands.at(name).first(cfg, opt);
      std::cout << nlohmann::json{{"command", name}, {"cached", r.cached}, {"summary", r.summary}}.dump() << "\n";
    };
    if (all->parsed()) {
      for (const auto& stage : kStages) exec(stage);
      return;
    }
    for (const auto& [name, sub] : subs)
      if (sub->parsed()) exec(name);
  });
}
