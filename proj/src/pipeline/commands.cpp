#include "cortical/pipeline/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>

#include "cortical/error.hpp"
#include "cortical/numcore/io.hpp"
#include "cortical/numcore/parallel.hpp"

namespace cortical::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kViewNames[3] = {"top", "front", "right"};

std::string padded(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

fs::path episode_dir(const fs::path& root, const std::string& stage, std::size_t e) {
  return root / stage / "episodes" / ("episode_" + padded(e));
}

fs::path ego_dir(const fs::path& root, std::size_t s) { return root / "synth" / "ego" / ("seq_" + padded(s)); }

void log(const CommandOptions& opt, const std::string& msg) {
  if (opt.log) opt.log(msg);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
}

json mat_json(const Mat4& m) {
  json a = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
  return a;
}

Mat4 mat_from(const json& a) {
  if (!a.is_array() || a.size() != 16) throw FormatError("expected 16 pose entries");
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = a[r * 4 + c].get<double>();
  return m;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec_from(const json& a) { return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()); }

struct Manifest {
  std::string command;
  std::string config_hash;
  json inputs = json::object();
  std::string outputs_hash;
  json summary;
};

std::optional<Manifest> read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) return std::nullopt;
  const json j = read_json(path);
  try {
    return Manifest{j.at("command"), j.at("config_hash"), j.at("inputs"), j.at("outputs_hash"), j.at("summary")};
  } catch (const json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
}

void write_manifest(const fs::path& dir, const PipelineConfig& cfg, const std::string& stage, const json& inputs,
                    const json& summary) {
  const json j{{"command", stage},
               {"version", kVersion},
               {"config_hash", cfg.stage_hash(stage)},
               {"config", cfg.to_json()},
               {"inputs", inputs},
               {"outputs_hash", directory_hash(dir)},
               {"summary", summary}};
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

// Checks an upstream stage and returns its output hash.
std::string require_stage(const PipelineConfig& cfg, const fs::path& root, const std::string& stage) {
  const auto m = read_manifest(root / stage);
  if (!m) throw PipelineError("missing artifact: " + stage + " (run `cortical " + stage + "` first)");
  if (m->config_hash != cfg.stage_hash(stage))
    throw PipelineError("stale artifact: " + stage + " was produced with a different configuration");
  if (m->outputs_hash != directory_hash(root / stage))
    throw PipelineError("stale artifact: " + stage + " files changed after it was written");
  return m->outputs_hash;
}

json require_inputs(const PipelineConfig& cfg, const fs::path& root, const std::vector<std::string>& stages) {
  json inputs = json::object();
  for (const auto& s : stages) inputs[s] = require_stage(cfg, root, s);
  return inputs;
}

// Returns the summary of a reusable stage, or nullopt.
std::optional<json> cached_summary(const PipelineConfig& cfg, const CommandOptions& opt, const std::string& stage,
                                   const json& inputs) {
  if (!opt.cached) return std::nullopt;
  const auto m = read_manifest(opt.root / stage);
  if (!m || m->config_hash != cfg.stage_hash(stage) || m->inputs != inputs) return std::nullopt;
  if (m->outputs_hash != directory_hash(opt.root / stage)) return std::nullopt;
  log(opt, stage + ": cached");
  return m->summary;
}

fs::path fresh_stage_dir(const CommandOptions& opt, const std::string& stage) {
  const fs::path dir = opt.root / stage;
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

std::vector<render::EgoSequence> load_ego(const fs::path& dir) {
  std::vector<render::EgoSequence> out;
  const std::size_t n = render::count_ego_episodes(dir);
  for (std::size_t i = 0; i < n; ++i) out.push_back(render::read_ego_episode(dir, i));
  return out;
}

policy::ParameterStore fresh_dynamic(const PipelineConfig& cfg) {
  policy::ParameterStore store;
  Rng rng(derive_seed(cfg.seed, 4, 0));
  policy::init_dynamic_encoder(store, rng, cfg.policy_config().dynamic_encoder);
  return store;
}

bool monotone(const std::vector<double>& v, std::size_t n) {
  for (std::size_t i = 1; i < std::min(n, v.size()); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

json eval_json(const policy::EvalMetrics& m) {
  return json{{"samples", m.samples},
              {"translation_accuracy", m.translation_accuracy},
              {"rotation_accuracy", m.rotation_accuracy},
              {"gripper_accuracy", m.gripper_accuracy},
              {"collision_accuracy", m.collision_accuracy},
              {"mean_translation_error", m.mean_translation_error},
              {"matched_cosine", m.matched_cosine},
              {"cosine_alignment", m.cosine_alignment},
              {"cgc_loss", m.cgc_loss}};
}

}  // namespace

std::string directory_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  if (fs::exists(dir)) {
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    acc += fs::relative(f, dir).generic_string();
    acc += ':';
    acc += file_hash(f);
    acc += '\n';
  }
  return fnv1a_hex(acc);
}

void write_episode(const fs::path& dir, const DemoEpisode& ep) {
  fs::create_directories(dir);
  json kfs = json::array();
  for (std::size_t k = 0; k < ep.keyframes.size(); ++k) {
    const DemoKeyframe& f = ep.keyframes[k];
    kfs.push_back({{"task", f.task},
                   {"wrist_pose", mat_json(f.wrist_pose)},
                   {"ee", vec_json(f.ee)},
                   {"translation", vec_json(f.action.translation)},
                   {"rotation_bins", f.action.rotation_bins},
                   {"gripper_open", f.action.gripper_open},
                   {"collision_allowed", f.action.collision_allowed}});
    render::write_cloud(dir / ("cloud_" + std::to_string(k)), f.cloud);
  }
  write_text(dir / "episode.json", json{{"seed", ep.seed}, {"keyframes", kfs}}.dump(1) + "\n");
}

DemoEpisode read_episode(const fs::path& dir, const policy::WorkspaceGrid& grid, std::size_t rotation_bins) {
  if (!fs::exists(dir / "episode.json")) throw PipelineError("missing episode " + dir.string());
  const json j = read_json(dir / "episode.json");
  DemoEpisode ep;
  try {
    ep.seed = j.at("seed").get<std::uint64_t>();
    const json& kfs = j.at("keyframes");
    for (std::size_t k = 0; k < kfs.size(); ++k) {
      const json& f = kfs[k];
      DemoKeyframe kf;
      kf.task = f.at("task").get<std::size_t>();
      kf.wrist_pose = mat_from(f.at("wrist_pose"));
      kf.ee = vec_from(f.at("ee"));
      kf.action = policy::make_action_sample(vec_from(f.at("translation")),
                                             f.at("rotation_bins").get<std::array<std::size_t, 3>>(),
                                             f.at("gripper_open").get<bool>(), f.at("collision_allowed").get<bool>(),
                                             grid, rotation_bins);
      kf.cloud = render::read_cloud(dir / ("cloud_" + std::to_string(k)));
      ep.keyframes.push_back(std::move(kf));
    }
  } catch (const json::exception& ex) {
    throw FormatError(dir.string() + "/episode.json: " + ex.what());
  }
  return ep;
}

void write_view(const fs::path& stem, const render::ViewBundle& view) {
  write_tensor(stem.string() + "_image", view.image.astype(DType::f32));
  Tensor valid = Tensor::zeros({view.height(), view.width()}, DType::f32);
  for (std::size_t i = 0; i < view.valid.size(); ++i) valid.set(i, view.valid[i] ? 1.0 : 0.0);
  write_tensor(stem.string() + "_valid", valid);
  write_text(stem.string() + "_camera.json", camgeo::camera_to_json(view.camera));
}

render::ViewBundle read_view(const fs::path& stem) {
  const fs::path cam_path = stem.string() + "_camera.json";
  if (!fs::exists(cam_path)) throw PipelineError("missing view " + stem.string());
  const camgeo::CameraModel cam = camgeo::camera_from_json(read_text(cam_path));
  Tensor image = read_tensor(stem.string() + "_image").astype(DType::f64);
  const Tensor valid = read_tensor(stem.string() + "_valid");
  const auto r = cam.resolution();
  if (image.shape() != Shape{render::kChannels, r.height, r.width} || valid.numel() != r.height * r.width)
    throw FormatError(stem.string() + ": view shape does not match its camera");
  std::vector<bool> mask(valid.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = valid.get(i) != 0.0;
  return render::ViewBundle{std::move(image), cam, std::move(mask)};
}

std::vector<policy::PolicySample> load_samples(const PipelineConfig& cfg, const fs::path& root, std::size_t begin,
                                               std::size_t end) {
  const policy::WorkspaceGrid grid{cfg.workspace, cfg.eval.grid};
  std::vector<std::optional<policy::PolicySample>> built;
  std::vector<std::pair<std::size_t, std::size_t>> refs;
  std::vector<DemoEpisode> eps;
  for (std::size_t e = begin; e < end; ++e) {
    eps.push_back(read_episode(episode_dir(root, "synth", e), grid, cfg.synth.rotation_bins));
    for (std::size_t k = 0; k < eps.back().keyframes.size(); ++k) refs.emplace_back(e, k);
  }
  built.resize(refs.size());
  parallel_for(refs.size(), [&](std::size_t i) {
    const auto [e, k] = refs[i];
    const DemoKeyframe& kf = eps[e - begin].keyframes[k];
    const fs::path vdir = episode_dir(root, "render", e) / ("kf_" + std::to_string(k));
    std::vector<render::ViewBundle> views;
    for (const char* name : kViewNames) views.push_back(read_view(vdir / name));
    render::ViewBundle dynamic = read_view(vdir / "dynamic");
    auto bundle = supervise::read_bundle(episode_dir(root, "supervise", e) / ("kf_" + std::to_string(k) + ".bundle"));
    built[i].emplace(policy::PolicySample{std::move(views), std::move(dynamic),
                                          std::make_shared<render::ColoredCloud>(kf.cloud), kf.task, kf.action,
                                          std::move(bundle), Tensor(), Tensor(), Tensor()});
  });
  std::vector<policy::PolicySample> out;
  for (auto& b : built) out.push_back(std::move(*b));
  return out;
}

CommandResult cmd_synth(const PipelineConfig& cfg, const CommandOptions& opt) {
  cfg.validate();
  const json inputs = json::object();
  if (auto s = cached_summary(cfg, opt, "synth", inputs)) return {true, *s};
  const fs::path dir = fresh_stage_dir(opt, "synth");
  const SynthConfig sc = cfg.synth_config();
  std::size_t in_bounds = 0, keyframes = 0;
  std::vector<DemoEpisode> eps(cfg.synth.episodes);
  parallel_for(eps.size(), [&](std::size_t e) { eps[e] = make_pick_place_episode(derive_seed(cfg.seed, 1, e), sc); });
  for (std::size_t e = 0; e < eps.size(); ++e) {
    write_episode(episode_dir(opt.root, "synth", e), eps[e]);
    for (const auto& k : eps[e].keyframes) {
      ++keyframes;
      in_bounds += cfg.workspace.contains(k.action.translation);
    }
  }
  const std::size_t seqs = cfg.synth.ego_sequences + cfg.synth.ego_heldout;
  for (std::size_t s = 0; s < seqs; ++s) {
    const EgoData d = make_ego_trajectory(derive_seed(cfg.seed, 2, s), cfg.synth.ego_steps, sc);
    fs::create_directories(ego_dir(opt.root, s));
    render::write_trajectory(ego_dir(opt.root, s) / "trajectory.json", d.trajectory);
    render::write_cloud(ego_dir(opt.root, s) / "cloud", d.cloud);
  }
  const json summary{{"episodes", eps.size()},
                     {"keyframes", keyframes},
                     {"actions_in_workspace", in_bounds},
                     {"ego_sequences", seqs}};
  write_manifest(dir, cfg, "synth", inputs, summary);
  log(opt, "synth: " + std::to_string(eps.size()) + " episodes, " + std::to_string(seqs) + " ego sequences");
  return {false, summary};
}

CommandResult cmd_supervise(const PipelineConfig& cfg, const CommandOptions& opt) {
  cfg.validate();
  const json inputs = require_inputs(cfg, opt.root, {"synth"});
  if (auto s = cached_summary(cfg, opt, "supervise", inputs)) return {true, *s};
  const fs::path dir = fresh_stage_dir(opt, "supervise");
  const policy::WorkspaceGrid grid{cfg.workspace, cfg.eval.grid};
  const auto cams = render::make_static_cameras(cfg.workspace, cfg.render.static_resolution);
  std::vector<std::size_t> sizes(cfg.synth.episodes * 2, 0);
  std::vector<std::size_t> counts(cfg.synth.episodes, 0);
  parallel_for(cfg.synth.episodes, [&](std::size_t e) {
    const DemoEpisode ep = read_episode(episode_dir(opt.root, "synth", e), grid, cfg.synth.rotation_bins);
    fs::create_directories(episode_dir(opt.root, "supervise", e));
    counts[e] = ep.keyframes.size();
    for (std::size_t k = 0; k < ep.keyframes.size(); ++k) {
      std::vector<supervise::ViewData> vd;
      for (const auto& cam : cams) {
        const auto v = render::render_view(ep.keyframes[k].cloud, cam, cfg.render.splat_radius_px);
        const std::size_t plane = v.height() * v.width();
        Tensor depth({v.height(), v.width()}), conf({v.height(), v.width()});
        for (std::size_t p = 0; p < plane; ++p) {
          depth.set(p, v.valid[p] ? v.image.get(render::kDepth * plane + p) : 0.0);
          conf.set(p, v.valid[p] ? 1.0 : 0.0);
        }
        vd.push_back({std::move(depth), std::move(conf), cam});
      }
      const auto bundle = supervise::generate_bundle(vd, cfg.supervision);
      if (k < 2) sizes[e * 2 + k] = bundle.size();
      supervise::write_bundle(episode_dir(opt.root, "supervise", e) / ("kf_" + std::to_string(k) + ".bundle"), bundle);
    }
  });
  std::size_t total = 0, smallest = SIZE_MAX;
  for (std::size_t e = 0; e < cfg.synth.episodes; ++e)
    for (std::size_t k = 0; k < std::min<std::size_t>(counts[e], 2); ++k) {
      total += sizes[e * 2 + k];
      smallest = std::min(smallest, sizes[e * 2 + k]);
    }
  const json summary{{"keypoints_total", total}, {"keypoints_min", smallest == SIZE_MAX ? 0 : smallest}};
  write_manifest(dir, cfg, "supervise", inputs, summary);
  log(opt, "supervise: " + std::to_string(total) + " keypoints");
  return {false, summary};
}

CommandResult cmd_render(const PipelineConfig& cfg, const CommandOptions& opt) {
  cfg.validate();
  const json inputs = require_inputs(cfg, opt.root, {"synth"});
  if (auto s = cached_summary(cfg, opt, "render", inputs)) return {true, *s};
  const fs::path dir = fresh_stage_dir(opt, "render");
  const policy::WorkspaceGrid grid{cfg.workspace, cfg.eval.grid};
  const SampleConfig sc = cfg.sample_config();
  const auto cams = render::make_static_cameras(cfg.workspace, sc.static_resolution);
  parallel_for(cfg.synth.episodes, [&](std::size_t e) {
    const DemoEpisode ep = read_episode(episode_dir(opt.root, "synth", e), grid, cfg.synth.rotation_bins);
    for (std::size_t k = 0; k < ep.keyframes.size(); ++k) {
      const DemoKeyframe& kf = ep.keyframes[k];
      const fs::path vdir = episode_dir(opt.root, "render", e) / ("kf_" + std::to_string(k));
      fs::create_directories(vdir);
      for (std::size_t j = 0; j < 3; ++j)
        write_view(vdir / kViewNames[j], render::render_view(kf.cloud, cams[j], sc.splat_radius_px));
      const render::Trajectory traj{{kf.wrist_pose}, {kf.ee}};
      const auto seq = render::render_ego_sequence(traj, kf.cloud, cfg.ego_config(derive_seed(cfg.seed, 3, e * 16 + k)));
      write_view(vdir / "dynamic", seq.frames[0]);
    }
  });
  const std::size_t seqs = cfg.synth.ego_sequences + cfg.synth.ego_heldout;
  std::size_t visible = 0, frames = 0;
  for (std::size_t s = 0; s < seqs; ++s) {
    const auto traj = render::read_trajectory(ego_dir(opt.root, s) / "trajectory.json");
    const auto cloud = render::read_cloud(ego_dir(opt.root, s) / "cloud");
    const auto seq = render::render_ego_sequence(traj, cloud, cfg.ego_config(derive_seed(cfg.seed, 5, s)));
    const bool train = s < cfg.synth.ego_sequences;
    render::write_ego_episode(dir / "ego" / (train ? "train" : "heldout"), train ? s : s - cfg.synth.ego_sequences,
                              seq);
    for (bool v : seq.visible) visible += v;
    frames += seq.frames.size();
  }
  const json summary{{"episodes", cfg.synth.episodes}, {"ego_frames", frames}, {"ego_visible", visible}};
  write_manifest(dir, cfg, "render", inputs, summary);
  log(opt, "render: " + std::to_string(cfg.synth.episodes) + " episodes, " + std::to_string(frames) + " ego frames");
  return {false, summary};
}

CommandResult cmd_pretrain(const PipelineConfig& cfg, const CommandOptions& opt) {
  cfg.validate();
  const json inputs = require_inputs(cfg, opt.root, {"synth", "render"});
  if (auto s = cached_summary(cfg, opt, "pretrain", inputs)) return {true, *s};
  const fs::path dir = fresh_stage_dir(opt, "pretrain");
  const auto dyn = cfg.policy_config().dynamic_encoder;
  const auto train = load_ego(opt.root / "render" / "ego" / "train");
  const auto heldout = cfg.synth.ego_heldout > 0 ? load_ego(opt.root / "render" / "ego" / "heldout")
                                                 : std::vector<render::EgoSequence>{};
  policy::ParameterStore store = fresh_dynamic(cfg);
  json summary;
  if (cfg.ablation.pretrain) {
    policy::PretrainConfig pc;
    pc.epochs = cfg.pretrain.epochs;
    pc.batch = cfg.pretrain.batch;
    pc.lr = cfg.pretrain.lr;
    pc.sigma_px = cfg.pretrain.sigma_px;
    pc.seed = derive_seed(cfg.seed, 6, 0);
    std::ofstream ndjson(dir / "metrics.ndjson");
    pc.on_epoch = [&](std::size_t epoch, double kl) {
      ndjson << json{{"epoch", epoch}, {"kl", kl}}.dump() << "\n";
      ndjson.flush();
      log(opt, "pretrain: epoch " + std::to_string(epoch) + " kl " + std::to_string(kl));
    };
    const policy::PretrainReport rep = policy::pretrain_position(store, dyn, train, pc);
    summary["epoch_kl"] = rep.epoch_loss;
    summary["kl_monotone_first5"] = monotone(rep.epoch_loss, 5);
  }
  summary["pretrained"] = cfg.ablation.pretrain;
  summary["train_hit_rate_3px"] = policy::saliency_hit_rate(store, dyn, train, 3.0);
  if (!heldout.empty()) summary["heldout_hit_rate_3px"] = policy::saliency_hit_rate(store, dyn, heldout, 3.0);
  store.save(dir / "params");
  write_manifest(dir, cfg, "pretrain", inputs, summary);
  return {false, summary};
}

CommandResult cmd_train(const PipelineConfig& cfg, const CommandOptions& opt) {
  cfg.validate();
  const json inputs = require_inputs(cfg, opt.root, {"synth", "supervise", "render", "pretrain"});
  if (auto s = cached_summary(cfg, opt, "train", inputs)) return {true, *s};
  const fs::path dir = fresh_stage_dir(opt, "train");
  const policy::PolicyConfig pc = cfg.policy_config();
  const std::size_t n_train = cfg.train_episode_count();
  std::vector<policy::PolicySample> samples = load_samples(cfg, opt.root, 0, n_train);
  if (cfg.augment.copies > 0) {
    const policy::WorkspaceGrid grid{cfg.workspace, cfg.eval.grid};
    const SynthConfig sc = cfg.synth_config();
    std::vector<DemoEpisode> aug;
    for (std::size_t e = 0; e < n_train; ++e) {
      const DemoEpisode ep = read_episode(episode_dir(opt.root, "synth", e), grid, cfg.synth.rotation_bins);
      Rng rng(derive_seed(cfg.seed, 7, e));
      for (std::size_t c = 0; c < cfg.augment.copies; ++c) {
        DemoEpisode a = augment_episode(ep, rng, cfg.augment.max_rotation_deg, cfg.augment.max_translation, sc);
        a.seed = derive_seed(cfg.seed, 8, e * 64 + c);
        aug.push_back(std::move(a));
      }
    }
    auto extra = build_policy_samples(aug, sc, cfg.sample_config());
    for (auto& s : extra) samples.push_back(std::move(s));
  }

  policy::ParameterStore store = policy::ParameterStore::load(opt.root / "pretrain" / "params");
  Rng rng(derive_seed(cfg.seed, 9, 0));
  policy::init_policy(store, rng, pc);
  policy::cache_dynamic(samples, store, pc);

  policy::TrainConfig tc;
  tc.epochs = cfg.train.epochs;
  tc.batch = cfg.train.batch;
  tc.lr = cfg.train.lr;
  tc.warmup = cfg.train.warmup;
  tc.weight_decay = cfg.train.weight_decay;
  tc.seed = derive_seed(cfg.seed, 10, 0);
  std::ofstream ndjson(dir / "metrics.ndjson");
  tc.on_step = [&](const policy::StepMetrics& m) {
    ndjson << policy::metrics_json(m) << "\n";
    if ((m.step + 1) % 50 == 0) {
      log(opt, "train: step " + std::to_string(m.step + 1) + " loss " + std::to_string(m.loss_total));
    }
  };
  policy::TrainReport rep;
  try {
    rep = policy::train_policy(store, pc, samples, tc);
  } catch (const NumericalError&) {
    ndjson.flush();
    store.save(dir / "last_good");
    throw;
  }
  ndjson.close();
  store.save(dir / "params");
  const json summary{{"samples", samples.size()},
                     {"steps", rep.steps.size()},
                     {"final_loss_action", rep.steps.empty() ? 0.0 : rep.steps.back().loss_action},
                     {"final_loss_cgc", rep.steps.empty() ? 0.0 : rep.steps.back().loss_cgc},
                     {"dynamic_frozen", rep.dynamic_hash_before == rep.dynamic_hash_after}};
  write_manifest(dir, cfg, "train", inputs, summary);
  return {false, summary};
}

CommandResult cmd_eval(const PipelineConfig& cfg, const CommandOptions& opt) {
  cfg.validate();
  const json inputs = require_inputs(cfg, opt.root, {"synth", "supervise", "render", "train"});
  if (auto s = cached_summary(cfg, opt, "eval", inputs)) return {true, *s};
  const fs::path dir = fresh_stage_dir(opt, "eval");
  const policy::PolicyConfig pc = cfg.policy_config();
  const policy::ParameterStore store = policy::ParameterStore::load(opt.root / "train" / "params");
  auto heldout = load_samples(cfg, opt.root, cfg.train_episode_count(), cfg.synth.episodes);
  policy::cache_dynamic(heldout, store, pc);
  const auto m = policy::evaluate_policy(store, pc, heldout, cfg.workspace, cfg.eval.two_stage, cfg.eval.zoom);
  json summary = eval_json(m);
  summary["two_stage"] = cfg.eval.two_stage;
  write_text(dir / "metrics.json", summary.dump(2) + "\n");
  write_manifest(dir, cfg, "eval", inputs, summary);
  log(opt, "eval: translation " + std::to_string(m.translation_accuracy) + " gripper " +
               std::to_string(m.gripper_accuracy));
  return {false, summary};
}

}  // namespace cortical::pipeline
