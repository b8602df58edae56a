#include "cortical/policy/encoders.hpp"

#include "cortical/policy/layers.hpp"

namespace cortical::policy {

void init_static_encoder(ParameterStore& store, Rng& rng, const StaticEncoderConfig& cfg) {
  const std::size_t c = cfg.channels;
  const std::size_t h = cfg.feature_resolution();
  init_conv(store, rng, "static.c1", cfg.stem_channels, render::kChannels, 3);
  init_conv(store, rng, "static.c2", c, cfg.stem_channels, 3);
  init_conv(store, rng, "static.c3", c, c, 3);
  init_attention(store, rng, "static.attn", c);
  init_embedding(store, rng, "static.pos", {h * h, c});
  init_embedding(store, rng, "static.task", {cfg.tasks, c}, 0.5);
  init_conv(store, rng, "static.c4", c, c, 3);
  init_conv(store, rng, "static.refine", c, c, 3);
  init_conv(store, rng, "static.skip", cfg.skip_channels, render::kChannels, 3);
  init_conv(store, rng, "static.head", 1, c + cfg.skip_channels, 3);
}

Tensor stack_views(std::span<const render::ViewBundle> views, DType dtype) {
  if (views.empty()) throw ShapeError("no views to stack");
  const Shape s = views[0].image.shape();
  Tensor out({views.size(), s[0], s[1], s[2]}, dtype);
  const std::size_t n = views[0].image.numel();
  for (std::size_t b = 0; b < views.size(); ++b) {
    if (views[b].image.shape() != s) throw ShapeError("views do not share a resolution");
    const auto src = views[b].image.values();
    for (std::size_t i = 0; i < n; ++i) out.set(b * n + i, src[i]);
  }
  return out;
}

StaticOutput static_encode(const Bound& p, const StaticEncoderConfig& cfg, Var views,
                           std::span<const std::size_t> tasks) {
  const Shape s = views.shape();
  if (s.size() != 4 || s[1] != render::kChannels || s[2] != cfg.resolution || s[3] != cfg.resolution) {
    throw ShapeError("static views must be B x 7 x " + std::to_string(cfg.resolution) + " x " +
                     std::to_string(cfg.resolution) + ", got " + shape_str(s));
  }
  const std::size_t batch = s[0];
  if (tasks.size() != batch) throw ShapeError("need one task id per view");
  const std::size_t c = cfg.channels;
  const std::size_t h = cfg.feature_resolution();

  Var x = ops::relu(conv(p, "static.c1", views, 2));
  x = ops::relu(conv(p, "static.c2", x, 2));
  x = ops::relu(conv(p, "static.c3", x));

  std::vector<Var> items;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t task = tasks[b];
    if (task >= cfg.tasks) throw FormatError("task id out of range");
    Var t = map_to_tokens(ops::reshape(ops::slice(x, 0, b, b + 1), {c, h, h}));
    t = ops::add(ops::add(t, p["static.pos"]), ops::index_select(p["static.task"], 0, std::span(&task, 1)));
    t = attention(p, "static.attn", t);
    items.push_back(ops::reshape(tokens_to_map(t, h, h), {1, c, h, h}));
  }
  x = batch == 1 ? items[0] : ops::concat(items, 0);

  StaticOutput out;
  out.features = ops::relu(conv(p, "static.c4", x));
  out.keypoint_maps = conv(p, "static.refine", out.features);
  Var up = ops::resize_bilinear(out.features, cfg.resolution, cfg.resolution);
  Var skip = ops::relu(conv(p, "static.skip", views));
  Var logits = conv(p, "static.head", ops::concat({up, skip}, 1));
  const std::size_t hw = cfg.resolution * cfg.resolution;
  out.heat_logits = ops::reshape(logits, {batch, cfg.resolution, cfg.resolution});
  out.heatmaps = ops::reshape(ops::softmax(ops::reshape(logits, {batch, hw})),
                              {batch, cfg.resolution, cfg.resolution});
  return out;
}

DynamicEncoderConfig DynamicEncoderConfig::full_scale() {
  DynamicEncoderConfig cfg;
  cfg.resolution = 224;
  cfg.patch = 14;
  cfg.width = 768;
  cfg.saliency_resolution = 128;
  return cfg;
}

void DynamicEncoderConfig::validate() const {
  if (patch == 0 || resolution % patch != 0) throw ConfigError("egocentric resolution must be a multiple of the patch size");
  if (width == 0 || saliency_resolution == 0 || slices == 0) throw ConfigError("dynamic encoder sizes must be positive");
}

void init_dynamic_encoder(ParameterStore& store, Rng& rng, const DynamicEncoderConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.width;
  const std::size_t pp = cfg.grid() * cfg.grid();
  const std::size_t l = cfg.local_channels;
  init_linear(store, rng, "dynamic.patch", render::kChannels * cfg.patch * cfg.patch, d);
  init_embedding(store, rng, "dynamic.pos", {pp, d});
  init_attention(store, rng, "dynamic.sa", d);
  init_linear(store, rng, "dynamic.mlp1", d, d);
  init_linear(store, rng, "dynamic.mlp2", d, d);
  init_linear(store, rng, "dynamic.glc", d, d);
  init_linear(store, rng, "dynamic.tok", 2 * d, l);
  init_conv(store, rng, "dynamic.local", l, render::kChannels, 3);
  init_conv(store, rng, "dynamic.sal1", 16, 2 * l, 3);
  init_conv(store, rng, "dynamic.sal2", cfg.slices, 16, 3);
  store.set("dynamic.temporal", Tensor::zeros({cfg.slices}));
}

namespace {

std::vector<std::size_t> patch_indices(std::size_t res, std::size_t patch) {
  const std::size_t grid = res / patch;
  std::vector<std::size_t> idx;
  idx.reserve(grid * grid * render::kChannels * patch * patch);
  for (std::size_t ty = 0; ty < grid; ++ty)
    for (std::size_t tx = 0; tx < grid; ++tx)
      for (std::size_t c = 0; c < render::kChannels; ++c)
        for (std::size_t dy = 0; dy < patch; ++dy)
          for (std::size_t dx = 0; dx < patch; ++dx)
            idx.push_back(c * res * res + (ty * patch + dy) * res + tx * patch + dx);
  return idx;
}

}  // namespace

DynamicFeatures dynamic_encode(const Bound& p, const DynamicEncoderConfig& cfg, Var frame,
                               std::size_t target_resolution) {
  const std::size_t r = cfg.resolution;
  if (frame.shape() != Shape{render::kChannels, r, r}) {
    throw ShapeError("egocentric frame must be 7 x " + std::to_string(r) + " x " + std::to_string(r));
  }
  const std::size_t grid = cfg.grid();
  const std::size_t pp = grid * grid;
  const std::size_t h = cfg.saliency_resolution;
  const std::size_t l = cfg.local_channels;

  Var patches = ops::gather(frame, patch_indices(r, cfg.patch), {pp, render::kChannels * cfg.patch * cfg.patch});
  Var tokens = ops::add(linear(p, "dynamic.patch", patches), p["dynamic.pos"]);

  DynamicFeatures out;
  Var sa = attention(p, "dynamic.sa", tokens);
  out.f_sa = ops::add(sa, linear(p, "dynamic.mlp2", ops::relu(linear(p, "dynamic.mlp1", sa))));
  Var global = ops::scale(ops::sum_axis(out.f_sa, 0, true), 1.0 / double(pp));
  out.f_glc = ops::relu(linear(p, "dynamic.glc", ops::mul(out.f_sa, global)));

  Var tok = linear(p, "dynamic.tok", ops::concat({out.f_sa, out.f_glc}, 1));
  Var tok_map = ops::resize_bilinear(ops::reshape(tokens_to_map(tok, grid, grid), {1, l, grid, grid}), h, h);
  Var small = ops::resize_bilinear(ops::reshape(frame, {1, render::kChannels, r, r}), h, h);
  Var local = ops::relu(conv(p, "dynamic.local", small));
  Var s = ops::relu(conv(p, "dynamic.sal1", ops::concat({tok_map, local}, 1)));
  Var logits = conv(p, "dynamic.sal2", s);
  out.raw_saliency = ops::reshape(ops::softmax(ops::reshape(logits, {cfg.slices, h * h})), {1, cfg.slices, h, h});
  out.saliency = compress_saliency(out.raw_saliency, target_resolution, target_resolution, p["dynamic.temporal"]);
  return out;
}

Var project_dynamic(const Bound& p, Var f_sa, Var f_glc) {
  if (f_sa.shape().size() != 2 || f_sa.shape() != f_glc.shape()) {
    throw ShapeError("f_sa and f_glc must share token count and width");
  }
  Var lp = p["lp.w"];
  if (lp.shape()[0] != 2 * f_sa.shape()[1]) throw ShapeError("projection expects width " + std::to_string(lp.shape()[0]));
  return linear(p, "lp", ops::concat({f_sa, f_glc}, 1));
}

void init_projection(ParameterStore& store, Rng& rng, std::size_t width, std::size_t channels) {
  init_linear(store, rng, "lp", 2 * width, channels);
}

Var compress_saliency(Var raw, std::size_t height, std::size_t width, Var temporal_logits) {
  const Shape s = raw.shape();
  if (s.size() != 4 || s[0] != 1) throw ShapeError("raw saliency must be 1 x T x h x w");
  const std::size_t t = s[1];
  if (temporal_logits.shape() != Shape{t}) throw ShapeError("temporal kernel must have one weight per slice");
  Var resized = ops::resize_bilinear(raw, height, width);
  Var kernel = ops::reshape(ops::softmax(temporal_logits), {1, 1, t, 1, 1});
  Var mixed = ops::conv3d_temporal(ops::reshape(resized, {1, 1, t, height, width}), kernel);
  Var flat = ops::reshape(mixed, {1, 1, height, width});
  return ops::div(flat, ops::sum(flat));
}

}  // namespace cortical::policy
