#include "cortical/policy/training.hpp"

#include <cmath>

#include "cortical/policy/layers.hpp"
#include "json.hpp"

namespace cortical::policy {

void PolicyConfig::validate() const {
  loss.validate();
  dynamic_encoder.validate();
  if (decoder.channels != static_encoder.channels) throw ConfigError("decoder and static encoder widths differ");
  if (grid == 0) throw ConfigError("grid must be positive");
  if (static_encoder.resolution % 4 != 0) throw ConfigError("static resolution must be a multiple of 4");
}

void init_policy(ParameterStore& store, Rng& rng, const PolicyConfig& cfg) {
  cfg.validate();
  init_static_encoder(store, rng, cfg.static_encoder);
  init_projection(store, rng, cfg.dynamic_encoder.width, cfg.static_encoder.channels);
  init_action_decoder(store, rng, cfg.decoder);
}

namespace {

constexpr const char* kDynamicPrefix = "dynamic.";

std::vector<std::string> trainable_names(const ParameterStore& store) {
  std::vector<std::string> out;
  for (const auto& n : store.names()) {
    if (n.rfind(kDynamicPrefix, 0) != 0) out.push_back(n);
  }
  return out;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Same pose, intrinsics rescaled to a square image of side res.
CameraModel rescale_camera(const CameraModel& cam, std::size_t res) {
  const auto r = cam.resolution();
  if (r.width == res && r.height == res) return cam;
  const auto& in = cam.intrinsics();
  const double sx = double(res) / double(r.width), sy = double(res) / double(r.height);
  return CameraModel(cam.kind(), {in.fx * sx, in.fy * sy, (in.cx + 0.5) * sx - 0.5, (in.cy + 0.5) * sy - 0.5},
                     cam.pose(), {res, res});
}

Var item_map(Var batch, std::size_t b) {
  const Shape s = batch.shape();
  Shape rest(s.begin() + 1, s.end());
  return ops::reshape(ops::slice(batch, 0, b, b + 1), rest);
}

std::size_t argmax(const Tensor& t, std::size_t offset, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (t.get(offset + i) > t.get(offset + best)) best = i;
  }
  return best;
}

}  // namespace

void cache_dynamic(std::vector<PolicySample>& samples, const ParameterStore& store, const PolicyConfig& cfg) {
  const std::size_t res = cfg.static_encoder.resolution;
  for (PolicySample& s : samples) {
    Tape tape;
    Bound p(tape, store, DType::f64, false, kDynamicPrefix);
    const DynamicFeatures df = dynamic_encode(p, cfg.dynamic_encoder, tape.constant(s.dynamic_view.image), res);
    s.f_sa = df.f_sa.value();
    s.f_glc = df.f_glc.value();
    s.saliency = df.saliency.value().reshaped({res, res});
  }
}

std::vector<std::size_t> translation_pixels(const PolicySample& sample) {
  std::vector<std::size_t> out;
  for (const auto& v : sample.static_views) {
    std::size_t r = 0, c = 0;
    const camgeo::Projection p = camgeo::project(sample.action.translation, v.camera);
    if (p.behind || !camgeo::pixel_of(p.uv, v.camera, r, c)) {
      throw FormatError("translation target does not project into a static view");
    }
    out.push_back(r * v.width() + c);
  }
  return out;
}

std::vector<SampleForward> policy_forward(const Bound& p, const PolicyConfig& cfg,
                                          std::span<const PolicySample* const> batch, bool with_cgc) {
  const std::size_t res = cfg.static_encoder.resolution;
  const std::size_t grid = cfg.dynamic_encoder.grid();
  std::vector<render::ViewBundle> views;
  std::vector<std::size_t> tasks;
  for (const PolicySample* s : batch) {
    if (s->static_views.size() != 3) throw ShapeError("a policy sample needs 3 static views");
    for (const auto& v : s->static_views) {
      views.push_back(v);
      tasks.push_back(s->task);
    }
  }
  Tape& tape = p.tape();
  const StaticOutput so =
      static_encode(p, cfg.static_encoder, tape.constant(stack_views(views, p.dtype())), tasks);

  std::vector<SampleForward> out;
  for (std::size_t si = 0; si < batch.size(); ++si) {
    const PolicySample& s = *batch[si];
    if (s.saliency.shape() != Shape{res, res}) throw PipelineError("dynamic outputs are not cached");
    SampleForward f;
    std::vector<ViewPrediction> preds;
    for (std::size_t j = 0; j < 3; ++j) {
      const std::size_t b = si * 3 + j;
      preds.push_back({item_map(so.features, b), item_map(so.heatmaps, b)});
      f.logits.translation.push_back(item_map(so.heat_logits, b));
      f.keypoint_maps.push_back(item_map(so.keypoint_maps, b));
      f.heatmaps.push_back(preds.back().heatmap.value().astype(DType::f64));
    }
    Var f4 = cfg.dual_stream
                 ? tokens_to_map(project_dynamic(p, tape.constant(s.f_sa.astype(p.dtype())),
                                                 tape.constant(s.f_glc.astype(p.dtype()))),
                                 grid, grid)
                 : tape.constant(Tensor::zeros({cfg.static_encoder.channels, grid, grid}, p.dtype()));
    const Tensor h4 = cfg.uses_dynamic_heatmap() ? s.saliency : Tensor::full({res, res}, 1.0 / double(res * res));
    preds.push_back({f4, tape.constant(h4.astype(p.dtype()))});
    f.heatmaps.push_back(h4);

    std::vector<Var> locals;
    for (std::size_t j = 0; j < 4; ++j) {
      const auto [row, col] = heatmap_argmax(f.heatmaps[j]);
      locals.push_back(pool_local(preds[j].feature_map, row, col, res, res));
    }
    const ActionHeads heads = decode_action(p, cfg.decoder, build_global_feature(preds), locals);
    f.logits.rotation = heads.rotation;
    f.logits.gripper = heads.gripper;
    f.logits.collision = heads.collision;

    losses::ActionTargets target;
    target.translation_pixels = translation_pixels(s);
    target.rotation_bins = s.action.rotation_bins;
    target.gripper_open = s.action.gripper_open;
    target.collision_allowed = s.action.collision_allowed;
    f.action_loss = losses::action_loss(f.logits, target);

    if (with_cgc && s.bundle.size() >= 2) {
      const auto kf = losses::sample_keypoint_features(f.keypoint_maps, s.bundle, res, res,
                                                       cfg.loss.normalize_features);
      f.cgc_loss = losses::cgc_loss(kf, cfg.loss);
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::string metrics_json(const StepMetrics& m) {
  return nlohmann::json{{"step", m.step},
                        {"loss_action", m.loss_action},
                        {"loss_cgc", m.loss_cgc},
                        {"loss_total", m.loss_total},
                        {"lr", m.lr}}
      .dump();
}

TrainReport train_policy(ParameterStore& store, const PolicyConfig& cfg, const std::vector<PolicySample>& train,
                         const TrainConfig& tcfg) {
  cfg.validate();
  if (train.empty()) throw PipelineError("no training samples");
  if (tcfg.batch == 0) throw ConfigError("batch must be positive");
  TrainReport report;
  report.dynamic_hash_before = store.hash(kDynamicPrefix);
  AdamWConfig acfg;
  acfg.lr = tcfg.lr;
  acfg.weight_decay = tcfg.weight_decay;
  AdamW opt(store, trainable_names(store), acfg);
  Rng rng(tcfg.seed);
  const std::size_t per_epoch = (train.size() + tcfg.batch - 1) / tcfg.batch;
  const std::size_t total = per_epoch * tcfg.epochs;
  const bool with_cgc = cfg.loss.lambda > 0.0;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch, ++step) {
      std::vector<const PolicySample*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + tcfg.batch); ++k) batch.push_back(&train[order[k]]);
      Tape tape;
      Bound p(tape, store, cfg.compute, true);
      const auto fwd = policy_forward(p, cfg, batch, with_cgc);
      StepMetrics m;
      m.step = step;
      m.lr = schedule_lr(tcfg.lr, step, tcfg.warmup, total);
      std::vector<Var> totals;
      std::size_t cgc_count = 0;
      for (const auto& f : fwd) {
        m.loss_action += f.action_loss.value().item();
        if (f.cgc_loss.valid()) {
          m.loss_cgc += f.cgc_loss.value().item();
          ++cgc_count;
        }
        totals.push_back(f.cgc_loss.valid() ? losses::total_loss(f.action_loss, f.cgc_loss, cfg.loss)
                                            : f.action_loss);
      }
      m.loss_action /= double(fwd.size());
      if (cgc_count > 0) m.loss_cgc /= double(cgc_count);
      Var loss = ops::scale(ops::sum(ops::concat(
                                [&] {
                                  std::vector<Var> flat;
                                  for (Var t : totals) flat.push_back(ops::reshape(t, {1}));
                                  return flat;
                                }(),
                                0)),
                            1.0 / double(fwd.size()));
      m.loss_total = loss.value().item();
      if (!std::isfinite(m.loss_total)) {
        throw NumericalError("non-finite loss at step " + std::to_string(step) + "; parameters left at the last good step");
      }
      tape.backward(loss);
      auto grads = collect_grads(p);
      for (auto it = grads.begin(); it != grads.end();) {
        it = it->first.rfind(kDynamicPrefix, 0) == 0 ? grads.erase(it) : std::next(it);
      }
      if (!std::isfinite(grad_norm(grads))) {
        throw NumericalError("non-finite gradient at step " + std::to_string(step) + "; parameters left at the last good step");
      }
      opt.step(store, grads, m.lr);
      report.steps.push_back(m);
      if (tcfg.on_step) tcfg.on_step(m);
    }
  }
  report.dynamic_hash_after = store.hash(kDynamicPrefix);
  return report;
}

EvalMetrics evaluate_policy(const ParameterStore& store, const PolicyConfig& cfg,
                            const std::vector<PolicySample>& samples, const Bounds& workspace, bool two_stage,
                            double zoom) {
  cfg.validate();
  EvalMetrics m;
  const std::size_t res = cfg.static_encoder.resolution;
  const WorkspaceGrid grid{workspace, cfg.grid};
  std::size_t cos_count = 0, margin_count = 0, cgc_count = 0;
  for (const PolicySample& s : samples) {
    Tape tape;
    Bound p(tape, store, cfg.compute, false);
    const PolicySample* ptr = &s;
    const SampleForward f = policy_forward(p, cfg, std::span(&ptr, 1), true)[0];

    std::vector<CameraModel> cams;
    for (const auto& v : s.static_views) cams.push_back(v.camera);
    cams.push_back(rescale_camera(s.dynamic_view.camera, res));
    const std::size_t used = cfg.uses_dynamic_heatmap() ? 4 : 3;
    TranslationDecode dec = decode_translation(std::span(f.heatmaps).first(used), std::span(cams).first(used), grid);
    if (two_stage) {
      if (!s.cloud) throw PipelineError("two-stage decoding needs the scene cloud");
      const RefinedViews rv = refine_stage(dec.point, *s.cloud, workspace, zoom, res, 1.0);
      const std::vector<std::size_t> tasks(3, s.task);
      const StaticOutput so =
          static_encode(p, cfg.static_encoder, tape.constant(stack_views(rv.views, p.dtype())), tasks);
      std::vector<Tensor> maps;
      std::vector<CameraModel> zcams;
      for (std::size_t j = 0; j < 3; ++j) {
        maps.push_back(item_map(so.heatmaps, j).value().astype(DType::f64));
        zcams.push_back(rv.views[j].camera);
      }
      if (cfg.uses_dynamic_heatmap()) {
        maps.push_back(f.heatmaps[3]);
        zcams.push_back(cams[3]);
      }
      dec = decode_translation(maps, zcams, WorkspaceGrid{rv.bounds, cfg.grid});
    }
    const auto cell = grid.cell_of(dec.point);
    bool ok = true;
    for (int a = 0; a < 3; ++a) {
      ok = ok && std::abs(double(cell[a]) - double(s.action.cell[a])) <= 1.0;
    }
    m.translation_accuracy += ok;
    m.mean_translation_error += (dec.point - s.action.translation).norm();

    const Tensor rot = f.logits.rotation.value();
    const std::size_t bins = rot.dim(1);
    bool rot_ok = true;
    for (std::size_t a = 0; a < 3; ++a) rot_ok = rot_ok && argmax(rot, a * bins, bins) == s.action.rotation_bins[a];
    m.rotation_accuracy += rot_ok;
    m.gripper_accuracy += (argmax(f.logits.gripper.value(), 0, 2) == 1) == s.action.gripper_open;
    m.collision_accuracy += (argmax(f.logits.collision.value(), 0, 2) == 1) == s.action.collision_allowed;

    if (s.bundle.size() >= 1) {
      const auto kf = losses::sample_keypoint_features(f.keypoint_maps, s.bundle, res, res, true);
      const std::size_t n = kf.views();
      const std::size_t mk = s.bundle.size();
      std::vector<std::vector<std::size_t>> negatives(mk);
      for (std::size_t i = 0; i < mk; ++i) negatives[i] = losses::negative_set(i, kf.positions, cfg.loss.zeta);
      double matched = 0.0, margin = 0.0;
      std::size_t margin_terms = 0;
      for (std::size_t v = 0; v < n; ++v) {
        const Tensor a = kf.per_view[v].value().astype(DType::f64);
        const Tensor b = kf.per_view[(v + 1) % n].value().astype(DType::f64);
        const std::size_t cdim = a.dim(1);
        auto dot = [&](std::size_t i, std::size_t j) {
          double d = 0.0;
          for (std::size_t k = 0; k < cdim; ++k) d += a.get(i * cdim + k) * b.get(j * cdim + k);
          return d;
        };
        for (std::size_t i = 0; i < mk; ++i) {
          const double sii = dot(i, i);
          matched += sii;
          if (negatives[i].empty()) continue;
          double neg = 0.0;
          for (std::size_t j : negatives[i]) neg += dot(i, j);
          margin += sii - neg / double(negatives[i].size());
          ++margin_terms;
        }
      }
      m.matched_cosine += matched / double(n * mk);
      ++cos_count;
      if (margin_terms > 0) {
        m.cosine_alignment += margin / double(margin_terms);
        ++margin_count;
      }
    }
    if (f.cgc_loss.valid()) {
      m.cgc_loss += f.cgc_loss.value().item();
      ++cgc_count;
    }
    ++m.samples;
  }
  if (m.samples > 0) {
    const double n = double(m.samples);
    m.translation_accuracy /= n;
    m.rotation_accuracy /= n;
    m.gripper_accuracy /= n;
    m.collision_accuracy /= n;
    m.mean_translation_error /= n;
  }
  if (cos_count > 0) m.matched_cosine /= double(cos_count);
  if (margin_count > 0) m.cosine_alignment /= double(margin_count);
  if (cgc_count > 0) m.cgc_loss /= double(cgc_count);
  return m;
}

namespace {

struct FrameRef {
  std::size_t seq;
  std::size_t t;
};

std::vector<FrameRef> visible_frames(const std::vector<render::EgoSequence>& data) {
  std::vector<FrameRef> out;
  for (std::size_t s = 0; s < data.size(); ++s) {
    for (std::size_t t = 0; t < data[s].frames.size(); ++t) {
      if (data[s].visible[t]) out.push_back({s, t});
    }
  }
  return out;
}

}  // namespace

PretrainReport pretrain_position(ParameterStore& store, const DynamicEncoderConfig& cfg,
                                 const std::vector<render::EgoSequence>& data, const PretrainConfig& pcfg) {
  cfg.validate();
  const auto frames = visible_frames(data);
  if (frames.empty()) throw PipelineError("no visible frames to pretrain on");
  if (pcfg.batch == 0) throw ConfigError("batch must be positive");
  const std::size_t r = cfg.resolution;
  std::vector<Tensor> targets;
  for (const FrameRef& f : frames) targets.push_back(render::saliency_target(data[f.seq].labels[f.t], r, r, pcfg.sigma_px));

  AdamWConfig acfg;
  acfg.lr = pcfg.lr;
  AdamW opt(store, store.names(kDynamicPrefix), acfg);
  Rng rng(pcfg.seed);
  std::vector<std::size_t> order(frames.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t per_epoch = (frames.size() + pcfg.batch - 1) / pcfg.batch;
  const std::size_t total = per_epoch * pcfg.epochs;
  PretrainReport report;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < pcfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += pcfg.batch, ++step) {
      Tape tape;
      Bound p(tape, store, pcfg.compute, true, kDynamicPrefix);
      const std::size_t end = std::min(order.size(), start + pcfg.batch);
      std::vector<Var> kls;
      for (std::size_t k = start; k < end; ++k) {
        const FrameRef& fr = frames[order[k]];
        const Tensor img = data[fr.seq].frames[fr.t].image.astype(pcfg.compute);
        const DynamicFeatures df = dynamic_encode(p, cfg, tape.constant(img), r);
        kls.push_back(ops::reshape(losses::kl_saliency(ops::reshape(df.saliency, {r, r}), targets[order[k]]), {1}));
      }
      Var loss = ops::scale(ops::sum(ops::concat(kls, 0)), 1.0 / double(kls.size()));
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw NumericalError("non-finite pretraining loss at step " + std::to_string(step));
      tape.backward(loss);
      opt.step(store, collect_grads(p), schedule_lr(pcfg.lr, step, std::min<std::size_t>(20, total / 10), total));
      report.step_loss.push_back(value);
      epoch_sum += value;
      ++epoch_steps;
    }
    report.epoch_loss.push_back(epoch_sum / double(epoch_steps));
    if (pcfg.on_epoch) pcfg.on_epoch(epoch, report.epoch_loss.back());
  }
  return report;
}

double saliency_hit_rate(const ParameterStore& store, const DynamicEncoderConfig& cfg,
                         const std::vector<render::EgoSequence>& data, double tol_px) {
  const auto frames = visible_frames(data);
  if (frames.empty()) return 0.0;
  const std::size_t r = cfg.resolution;
  std::size_t hits = 0;
  for (const FrameRef& fr : frames) {
    Tape tape;
    Bound p(tape, store, DType::f64, false, kDynamicPrefix);
    const DynamicFeatures df = dynamic_encode(p, cfg, tape.constant(data[fr.seq].frames[fr.t].image), r);
    const auto [row, col] = heatmap_argmax(df.saliency.value().reshaped({r, r}));
    const Vec2 label = data[fr.seq].labels[fr.t];
    if ((Vec2(double(col), double(row)) - label).norm() <= tol_px) ++hits;
  }
  return double(hits) / double(frames.size());
}

}  // namespace cortical::policy
