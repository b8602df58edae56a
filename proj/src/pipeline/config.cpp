#include "cortical/pipeline/config.hpp"

#include "cortical/error.hpp"
#include "cortical/numcore/io.hpp"

namespace cortical::pipeline {

using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Overlays `user` onto `base` in place, rejecting unknown keys and kind
// changes.
void overlay(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key " + key);
    json& slot = base[it.key()];
    if (slot.is_object()) {
      overlay(slot, it.value(), key);
    } else {
      if (!same_kind(slot, it.value())) throw ConfigError("config key " + key + " has the wrong type");
      slot = it.value();
    }
  }
}

std::size_t count(const json& j) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
  if (j.is_number_integer() && j.get<std::int64_t>() < 0) throw ConfigError("expected a non-negative integer");
  return j.get<std::size_t>();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 finalizer over a combined key.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1) + 0xbf58476d1ce4e5b9ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void PipelineConfig::validate() const {
  if (!(workspace.hi.array() > workspace.lo.array()).all()) throw ConfigError("workspace bounds are empty");
  if (synth.episodes < 2) throw ConfigError("synth.episodes must be at least 2");
  if (!(synth.holdout_fraction > 0.0 && synth.holdout_fraction < 1.0))
    throw ConfigError("synth.holdout_fraction must lie in (0, 1)");
  if (synth.ego_sequences == 0 || synth.ego_steps == 0) throw ConfigError("ego data must be nonempty");
  if (synth.rotation_bins < 2 || synth.rotation_bins % 2 != 0) throw ConfigError("rotation_bins must be even");
  if (!(synth.point_spacing > 0.0)) throw ConfigError("point_spacing must be positive");
  if (render.static_resolution < 8 || render.static_resolution % 4 != 0)
    throw ConfigError("static_resolution must be a multiple of 4, at least 8");
  if (!(render.fov_deg > 0.0 && render.fov_deg < 180.0)) throw ConfigError("fov must lie in (0, 180) degrees");
  if (!(render.jitter >= 0.0)) throw ConfigError("jitter must be non-negative");
  if (!(render.splat_radius_px >= 0.0)) throw ConfigError("splat radius must be non-negative");
  supervision.validate();
  loss.validate();
  if (pretrain.batch == 0 || train.batch == 0) throw ConfigError("batch sizes must be positive");
  if (!(pretrain.lr > 0.0 && train.lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(pretrain.sigma_px > 0.0)) throw ConfigError("pretrain.sigma_px must be positive");
  if (!(augment.max_rotation_deg >= 0.0 && augment.max_translation >= 0.0))
    throw ConfigError("augmentation ranges must be non-negative");
  if (eval.grid < 2) throw ConfigError("eval.grid must be at least 2");
  if (!(eval.zoom > 0.0)) throw ConfigError("eval.zoom must be positive");
  if (train_episode_count() == 0 || train_episode_count() == synth.episodes)
    throw ConfigError("holdout_fraction leaves an empty split");
  policy_config().validate();
}

json PipelineConfig::to_json() const {
  return json{
      {"seed", seed},
      {"workspace", {{"lo", vec_json(workspace.lo)}, {"hi", vec_json(workspace.hi)}}},
      {"synth",
       {{"episodes", synth.episodes},
        {"holdout_fraction", synth.holdout_fraction},
        {"ego_sequences", synth.ego_sequences},
        {"ego_heldout", synth.ego_heldout},
        {"ego_steps", synth.ego_steps},
        {"distractors", synth.distractors},
        {"point_spacing", synth.point_spacing},
        {"rotation_bins", synth.rotation_bins}}},
      {"render",
       {{"static_resolution", render.static_resolution},
        {"ego_resolution", render.ego_resolution},
        {"fov_deg", render.fov_deg},
        {"jitter", render.jitter},
        {"splat_radius_px", render.splat_radius_px}}},
      {"supervision",
       {{"M", supervision.M},
        {"nms_radius", supervision.nms_radius},
        {"covis_depth_eps", supervision.covis_depth_eps},
        {"min_confidence", supervision.min_confidence}}},
      {"loss",
       {{"tau", loss.tau}, {"zeta", loss.zeta}, {"lambda", loss.lambda}, {"normalize_features", loss.normalize_features}}},
      {"encoders",
       {{"static_channels", encoders.static_channels},
        {"stem_channels", encoders.stem_channels},
        {"skip_channels", encoders.skip_channels},
        {"patch", encoders.patch},
        {"width", encoders.width},
        {"saliency_resolution", encoders.saliency_resolution},
        {"slices", encoders.slices},
        {"local_channels", encoders.local_channels},
        {"decoder_hidden", encoders.decoder_hidden}}},
      {"ablation",
       {{"dual_stream", ablation.dual_stream},
        {"pretrain", ablation.pretrain},
        {"dynamic_heatmap", ablation.dynamic_heatmap}}},
      {"pretrain",
       {{"epochs", pretrain.epochs}, {"batch", pretrain.batch}, {"lr", pretrain.lr}, {"sigma_px", pretrain.sigma_px}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch", train.batch},
        {"lr", train.lr},
        {"warmup", train.warmup},
        {"weight_decay", train.weight_decay}}},
      {"augment",
       {{"copies", augment.copies},
        {"max_rotation_deg", augment.max_rotation_deg},
        {"max_translation", augment.max_translation}}},
      {"eval", {{"grid", eval.grid}, {"two_stage", eval.two_stage}, {"zoom", eval.zoom}}},
  };
}

PipelineConfig PipelineConfig::from_json(const json& user) {
  json j = PipelineConfig{}.to_json();
  overlay(j, user, "");
  PipelineConfig c;
  try {
    c.seed = j["seed"].get<std::uint64_t>();
    c.workspace = Bounds{vec_from(j["workspace"]["lo"]), vec_from(j["workspace"]["hi"])};
    const json& s = j["synth"];
    c.synth = {count(s["episodes"]),      s["holdout_fraction"].get<double>(), count(s["ego_sequences"]),
               count(s["ego_heldout"]),   count(s["ego_steps"]),               count(s["distractors"]),
               s["point_spacing"].get<double>(), count(s["rotation_bins"])};
    const json& r = j["render"];
    c.render = {count(r["static_resolution"]), count(r["ego_resolution"]), r["fov_deg"].get<double>(),
                r["jitter"].get<double>(), r["splat_radius_px"].get<double>()};
    const json& sv = j["supervision"];
    c.supervision = {count(sv["M"]), sv["nms_radius"].get<double>(), sv["covis_depth_eps"].get<double>(),
                     sv["min_confidence"].get<double>()};
    const json& l = j["loss"];
    c.loss.tau = l["tau"].get<double>();
    c.loss.zeta = l["zeta"].get<double>();
    c.loss.lambda = l["lambda"].get<double>();
    c.loss.normalize_features = l["normalize_features"].get<bool>();
    const json& e = j["encoders"];
    c.encoders = {count(e["static_channels"]), count(e["stem_channels"]), count(e["skip_channels"]),
                  count(e["patch"]),           count(e["width"]),         count(e["saliency_resolution"]),
                  count(e["slices"]),          count(e["local_channels"]), count(e["decoder_hidden"])};
    const json& a = j["ablation"];
    c.ablation = {a["dual_stream"].get<bool>(), a["pretrain"].get<bool>(), a["dynamic_heatmap"].get<bool>()};
    const json& p = j["pretrain"];
    c.pretrain = {count(p["epochs"]), count(p["batch"]), p["lr"].get<double>(), p["sigma_px"].get<double>()};
    const json& t = j["train"];
    c.train = {count(t["epochs"]), count(t["batch"]), t["lr"].get<double>(), count(t["warmup"]),
               t["weight_decay"].get<double>()};
    const json& g = j["augment"];
    c.augment = {count(g["copies"]), g["max_rotation_deg"].get<double>(), g["max_translation"].get<double>()};
    const json& ev = j["eval"];
    c.eval = {count(ev["grid"]), ev["two_stage"].get<bool>(), ev["zoom"].get<double>()};
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad config value: ") + ex.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& ex) {
    throw ConfigError("cannot parse " + path.string() + ": " + ex.what());
  } catch (const IoError& ex) {
    throw ConfigError(ex.what());
  }
  return from_json(j);
}

std::string PipelineConfig::stage_hash(const std::string& stage) const {
  static const std::map<std::string, std::vector<std::string>> sections{
      {"synth", {"seed", "workspace", "synth"}},
      {"supervise", {"seed", "workspace", "synth", "render", "supervision"}},
      {"render", {"seed", "workspace", "synth", "render"}},
      {"pretrain", {"seed", "workspace", "synth", "render", "encoders", "ablation", "pretrain"}},
      {"train",
       {"seed", "workspace", "synth", "render", "supervision", "loss", "encoders", "ablation", "pretrain", "train",
        "augment", "eval"}},
      {"eval",
       {"seed", "workspace", "synth", "render", "supervision", "loss", "encoders", "ablation", "pretrain", "train",
        "augment", "eval"}},
  };
  const auto it = sections.find(stage);
  if (it == sections.end()) throw ConfigError("unknown stage " + stage);
  const json all = to_json();
  json picked = json::object();
  for (const std::string& key : it->second) picked[key] = all[key];
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  return fnv1a_hex(picked.dump());
}

SynthConfig PipelineConfig::synth_config() const {
  SynthConfig s;
  s.workspace = workspace;
  s.point_spacing = synth.point_spacing;
  s.distractors = synth.distractors;
  s.rotation_bins = synth.rotation_bins;
  s.grid = eval.grid;
  return s;
}

SampleConfig PipelineConfig::sample_config() const {
  SampleConfig s;
  s.static_resolution = render.static_resolution;
  s.ego_resolution = render.ego_resolution;
  s.fov_deg = render.fov_deg;
  s.jitter = render.jitter;
  s.splat_radius_px = render.splat_radius_px;
  s.supervision = supervision;
  return s;
}

policy::PolicyConfig PipelineConfig::policy_config() const {
  policy::PolicyConfig p;
  p.static_encoder.resolution = render.static_resolution;
  p.static_encoder.channels = encoders.static_channels;
  p.static_encoder.stem_channels = encoders.stem_channels;
  p.static_encoder.skip_channels = encoders.skip_channels;
  p.dynamic_encoder.resolution = render.ego_resolution;
  p.dynamic_encoder.patch = encoders.patch;
  p.dynamic_encoder.width = encoders.width;
  p.dynamic_encoder.saliency_resolution = encoders.saliency_resolution;
  p.dynamic_encoder.slices = encoders.slices;
  p.dynamic_encoder.local_channels = encoders.local_channels;
  p.decoder.channels = encoders.static_channels;
  p.decoder.hidden = encoders.decoder_hidden;
  p.decoder.rotation_bins = synth.rotation_bins;
  p.loss = loss;
  p.grid = eval.grid;
  p.dual_stream = ablation.dual_stream;
  p.dynamic_heatmap = ablation.dynamic_heatmap;
  return p;
}

render::EgoConfig PipelineConfig::ego_config(std::uint64_t s) const {
  render::EgoConfig e;
  e.fov_deg = render.fov_deg;
  e.resolution = render.ego_resolution;
  e.jitter.scale = render.jitter;
  e.splat_radius_px = render.splat_radius_px;
  e.seed = s;
  return e;
}

std::size_t PipelineConfig::train_episode_count() const {
  const auto held = std::size_t(std::llround(double(synth.episodes) * synth.holdout_fraction));
  return synth.episodes - std::min(held, synth.episodes);
}

}  // namespace cortical::pipeline
