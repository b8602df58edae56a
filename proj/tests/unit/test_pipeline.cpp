#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "cortical/error.hpp"
#include "cortical/numcore/io.hpp"
#include "cortical/pipeline/commands.hpp"

using namespace cortical;
using namespace cortical::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("cortical_test_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig tiny_config() {
  PipelineConfig c;
  c.seed = 11;
  c.synth.episodes = 4;
  c.synth.holdout_fraction = 0.25;
  c.synth.ego_sequences = 2;
  c.synth.ego_heldout = 1;
  c.synth.ego_steps = 3;
  c.pretrain.epochs = 2;
  c.train.epochs = 1;
  c.train.batch = 3;
  return c;
}

// Reverses the key order of every object in j.
std::string reversed_dump(const json& j) {
  if (!j.is_object()) return j.dump();
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  std::string s = "{";
  for (auto k = keys.rbegin(); k != keys.rend(); ++k) {
    if (s.size() > 1) s += ",";
    s += json(*k).dump() + ":" + reversed_dump(j.at(*k));
  }
  return s + "}";
}

}  // namespace

TEST_CASE("config round-trips and hashes independently of key order") {
  PipelineConfig c;
  c.loss.lambda = 0.5;
  c.render.jitter = 0.0;
  c.ablation.pretrain = false;
  const json j = c.to_json();
  const PipelineConfig back = PipelineConfig::from_json(j);
  CHECK(back.to_json() == j);
  const std::string text = reversed_dump(j);
  CHECK(text != j.dump());
  const PipelineConfig reordered = PipelineConfig::from_json(json::parse(text));
  for (const auto& stage : kStages) CHECK(reordered.stage_hash(stage) == c.stage_hash(stage));

  // A partial file keeps the remaining defaults.
  const PipelineConfig partial = PipelineConfig::from_json(json{{"loss", {{"tau", 0.02}}}});
  CHECK(partial.loss.tau == 0.02);
  CHECK(partial.loss.lambda == 1.0);
  CHECK(partial.synth.episodes == 200);

  CHECK_THROWS_AS(PipelineConfig::from_json(json{{"loss", {{"temperature", 1}}}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(json{{"loss", {{"tau", "small"}}}}), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(json{{"synth", {{"episodes", -3}}}}), ConfigError);

  const auto dir = scratch_dir("config");
  write_text(dir / "bad.json", "{not json");
  CHECK_THROWS_AS(PipelineConfig::load(dir / "bad.json"), ConfigError);
}

TEST_CASE("stage hashes track only the sections a stage reads") {
  PipelineConfig a, b;
  b.loss.lambda = 0.0;
  CHECK(a.stage_hash("synth") == b.stage_hash("synth"));
  CHECK(a.stage_hash("render") == b.stage_hash("render"));
  CHECK(a.stage_hash("pretrain") == b.stage_hash("pretrain"));
  CHECK(a.stage_hash("train") != b.stage_hash("train"));
  b = a;
  b.seed = 1;
  for (const auto& stage : kStages) CHECK(a.stage_hash(stage) != b.stage_hash(stage));
  CHECK_THROWS_AS(a.stage_hash("deploy"), ConfigError);
}

TEST_CASE("config validation") {
  PipelineConfig c;
  c.validate();
  auto broken = [](auto edit) {
    PipelineConfig x;
    edit(x);
    return x;
  };
  CHECK_THROWS_AS(broken([](PipelineConfig& x) { x.loss.tau = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](PipelineConfig& x) { x.supervision.M = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](PipelineConfig& x) { x.render.fov_deg = 180; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](PipelineConfig& x) { x.render.static_resolution = 30; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](PipelineConfig& x) { x.synth.holdout_fraction = 0.001; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](PipelineConfig& x) { x.workspace.hi.z() = -1; }).validate(), ConfigError);
  CHECK(c.train_episode_count() == 160);
}

TEST_CASE("synthetic episodes") {
  const SynthConfig sc;
  SUBCASE("deterministic per seed") {
    const DemoEpisode a = make_pick_place_episode(5, sc), b = make_pick_place_episode(5, sc);
    const DemoEpisode c = make_pick_place_episode(6, sc);
    REQUIRE(a.keyframes.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(a.keyframes[k].cloud.points == b.keyframes[k].cloud.points);
      CHECK(a.keyframes[k].action.translation == b.keyframes[k].action.translation);
    }
    CHECK(a.keyframes[0].action.translation != c.keyframes[0].action.translation);
  }
  SUBCASE("actions lie in the workspace and keyframes follow the task order") {
    for (std::uint64_t s = 0; s < 50; ++s) {
      const DemoEpisode ep = make_pick_place_episode(s, sc);
      CHECK(ep.keyframes[0].task == kTaskPick);
      CHECK(ep.keyframes[1].task == kTaskPlace);
      CHECK_FALSE(ep.keyframes[0].action.gripper_open);
      CHECK(ep.keyframes[1].action.gripper_open);
      for (const auto& k : ep.keyframes) {
        CHECK(sc.workspace.contains(k.action.translation));
        // The end-effector hovers above the target, offset 0.125 below the wrist.
        CHECK(k.ee.z() > k.action.translation.z());
        CHECK((k.wrist_pose.topRightCorner<3, 1>() - k.ee - Vec3(0, 0, kWristToEe)).norm() < 1e-12);
        CHECK(camgeo::is_rigid(k.wrist_pose));
      }
    }
  }
  SUBCASE("augmentation moves the scene rigidly") {
    const DemoEpisode ep = make_pick_place_episode(9, sc);
    Rng rng(1);
    const DemoEpisode aug = augment_episode(ep, rng, 45.0, 0.125, sc);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& a = ep.keyframes[k];
      const auto& b = aug.keyframes[k];
      CHECK(sc.workspace.contains(b.action.translation));
      CHECK((a.ee - a.action.translation).norm() ==
            doctest::Approx((b.ee - b.action.translation).norm()).epsilon(1e-12));
      CHECK(b.ee.z() == doctest::Approx(a.ee.z()));
      CHECK(camgeo::is_rigid(b.wrist_pose));
    }
    const Vec3 da = ep.keyframes[1].action.translation - ep.keyframes[0].action.translation;
    const Vec3 db = aug.keyframes[1].action.translation - aug.keyframes[0].action.translation;
    CHECK(da.norm() == doctest::Approx(db.norm()).epsilon(1e-12));
  }
  SUBCASE("ego descent") {
    const EgoData d = make_ego_trajectory(3, 5, sc);
    CHECK(d.trajectory.wrist_poses.size() == 5);
    for (std::size_t t = 1; t < 5; ++t)
      CHECK(d.trajectory.ee_positions[t].z() < d.trajectory.ee_positions[t - 1].z());
  }
}

TEST_CASE("episode and view files round-trip") {
  const auto dir = scratch_dir("files");
  const SynthConfig sc;
  const policy::WorkspaceGrid grid{sc.workspace, 32};
  const DemoEpisode ep = make_pick_place_episode(4, sc);
  write_episode(dir / "ep", ep);
  const DemoEpisode back = read_episode(dir / "ep", grid, 72);
  REQUIRE(back.keyframes.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back.keyframes[k].cloud.points == ep.keyframes[k].cloud.points);
    CHECK(back.keyframes[k].wrist_pose == ep.keyframes[k].wrist_pose);
    CHECK(back.keyframes[k].action.cell == ep.keyframes[k].action.cell);
    CHECK(back.keyframes[k].action.rotation_bins == ep.keyframes[k].action.rotation_bins);
  }
  CHECK_THROWS_AS(read_episode(dir / "nope", grid, 72), PipelineError);

  const auto cams = render::make_static_cameras(sc.workspace, 32);
  const auto view = render::render_view(ep.keyframes[0].cloud, cams[1], 1.0);
  write_view(dir / "front", view);
  const auto vb = read_view(dir / "front");
  CHECK(vb.valid == view.valid);
  CHECK(camgeo::camera_to_json(vb.camera) == camgeo::camera_to_json(view.camera));
  double worst = 0;
  for (std::size_t i = 0; i < view.image.numel(); ++i)
    worst = std::max(worst, std::abs(vb.image.get(i) - view.image.get(i)));
  CHECK(worst < 1e-6);
}

TEST_CASE("commands: reproducibility, manifests, staleness and caching") {
  const PipelineConfig cfg = tiny_config();
  const auto root_a = scratch_dir("run_a"), root_b = scratch_dir("run_b");
  CommandOptions a{root_a, false, nullptr}, b{root_b, false, nullptr};

  CHECK_THROWS_WITH_AS(cmd_supervise(cfg, a), doctest::Contains("missing artifact: synth"), PipelineError);

  cmd_synth(cfg, a);
  cmd_synth(cfg, b);
  CHECK(directory_hash(root_a / "synth") == directory_hash(root_b / "synth"));
  const json manifest = json::parse(read_text(root_a / "synth" / "manifest.json"));
  CHECK(manifest["config_hash"] == cfg.stage_hash("synth"));
  CHECK(manifest["outputs_hash"] == directory_hash(root_a / "synth"));
  CHECK(manifest["summary"]["actions_in_workspace"] == manifest["summary"]["keyframes"]);
  CHECK(PipelineConfig::from_json(manifest["config"]).stage_hash("synth") == cfg.stage_hash("synth"));

  cmd_supervise(cfg, a);
  cmd_render(cfg, a);
  cmd_pretrain(cfg, a);
  const CommandResult tr = cmd_train(cfg, a);
  CHECK(tr.summary["dynamic_frozen"] == true);
  CHECK(tr.summary["samples"] == 6);
  const CommandResult ev = cmd_eval(cfg, a);
  CHECK(ev.summary["samples"] == 2);
  CHECK(fs::exists(root_a / "eval" / "metrics.json"));

  std::ifstream ndjson(root_a / "train" / "metrics.ndjson");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(ndjson, line)) {
    const json m = json::parse(line);
    for (const char* key : {"step", "loss_action", "loss_cgc", "loss_total", "lr"}) CHECK(m.contains(key));
    ++lines;
  }
  CHECK(lines == tr.summary["steps"].get<std::size_t>());

  SUBCASE("cached rerun is a no-op") {
    CommandOptions c = a;
    c.cached = true;
    const auto before = fs::last_write_time(root_a / "train" / "manifest.json");
    const CommandResult again = cmd_train(cfg, c);
    CHECK(again.cached);
    CHECK(again.summary == tr.summary);
    CHECK(fs::last_write_time(root_a / "train" / "manifest.json") == before);
    PipelineConfig other = cfg;
    other.loss.lambda = 0.0;
    CHECK_FALSE(cmd_train(other, c).cached);
  }
  SUBCASE("a changed upstream config is stale") {
    PipelineConfig other = cfg;
    other.render.jitter = 0.0;
    CHECK_THROWS_WITH_AS(cmd_pretrain(other, a), doctest::Contains("stale artifact: render"), PipelineError);
  }
  SUBCASE("modified upstream files are stale") {
    std::ofstream(root_a / "synth" / "extra.txt") << "x";
    CHECK_THROWS_WITH_AS(cmd_render(cfg, a), doctest::Contains("stale artifact: synth"), PipelineError);
  }
}
