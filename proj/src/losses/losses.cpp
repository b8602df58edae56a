#include "cortical/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace cortical::losses {

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(zeta >= 0.0)) throw ConfigError("zeta must be non-negative");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
}

Var bilinear_sample(Var fm, const Vec2& uv) { return ops::bilinear_sample(fm, uv.x(), uv.y()); }

KeypointFeatures make_keypoint_features(std::vector<Var> raw, std::vector<Vec3> positions, bool normalize) {
  for (const Var& v : raw) {
    if (v.shape().size() != 2 || v.shape()[0] != positions.size()) {
      throw ShapeError("keypoint features must be M x C with M = number of positions");
    }
  }
  KeypointFeatures kf;
  kf.positions = std::move(positions);
  for (Var& v : raw) kf.per_view.push_back(normalize ? ops::l2_normalize_rows(v) : v);
  return kf;
}

KeypointFeatures sample_keypoint_features(std::span<const Var> feature_maps,
                                          const supervise::ConsistentKeypointBundle& bundle,
                                          std::size_t image_height, std::size_t image_width, bool normalize) {
  if (feature_maps.size() != bundle.view_count) {
    throw ShapeError("need one feature map per bundle view");
  }
  std::vector<Var> raw;
  for (std::size_t j = 0; j < feature_maps.size(); ++j) {
    const Shape s = feature_maps[j].shape();
    if (s.size() != 3) throw ShapeError("feature map must be C x H x W");
    const double sh = double(s[1]) / double(image_height);
    const double sw = double(s[2]) / double(image_width);
    std::vector<std::array<double, 2>> uv(bundle.size());
    for (std::size_t i = 0; i < bundle.size(); ++i) {
      const Vec2& t = bundle.track(i, j);
      uv[i] = {std::clamp((t.x() + 0.5) * sw - 0.5, 0.0, double(s[2] - 1)),
               std::clamp((t.y() + 0.5) * sh - 0.5, 0.0, double(s[1] - 1))};
    }
    raw.push_back(ops::bilinear_sample_points(feature_maps[j], uv));
  }
  return make_keypoint_features(std::move(raw), bundle.world_points, normalize);
}

std::vector<std::size_t> negative_set(std::size_t i, std::span<const Vec3> positions, double zeta) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    if (j != i && (positions[i] - positions[j]).norm() > zeta) out.push_back(j);
  }
  return out;
}

Tensor negative_mask(std::span<const Vec3> positions, double zeta) {
  const std::size_t m = positions.size();
  Tensor mask = Tensor::zeros({m, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j : negative_set(i, positions, zeta)) mask.set(i * m + j, 1.0);
  }
  return mask;
}

Var smooth_ap(const KeypointFeatures& kf, std::size_t p, std::size_t q, const LossConfig& cfg) {
  const std::size_t m = kf.size();
  if (m == 0) throw FormatError("smooth_ap needs at least one keypoint");
  if (p >= kf.views() || q >= kf.views()) throw FormatError("smooth_ap view index out of range");
  Var fp = kf.per_view[p];
  Var fq = kf.per_view[q];
  // s[i][j] = f_i^p . f_j^q
  Var s = ops::matmul(fp, ops::transpose(fq));
  Var self = ops::reshape(ops::diagonal(s), {m, 1});
  Var g = ops::sigmoid(ops::scale(ops::sub(s, self), 1.0 / cfg.tau));
  Var pos = ops::add_scalar(ops::diagonal(g), 1.0);
  Var mask = ops::constant_like(g, negative_mask(kf.positions, cfg.zeta));
  Var neg = ops::sum_axis(ops::mul(g, mask), 1);
  return ops::mean(ops::div(pos, ops::add(pos, neg)));
}

Var cgc_loss(const KeypointFeatures& kf, const LossConfig& cfg) {
  const std::size_t n = kf.views();
  if (n < 2) throw FormatError("cgc_loss needs at least two views");
  Var total = smooth_ap(kf, 0, 1, cfg);
  for (std::size_t p = 1; p < n; ++p) total = ops::add(total, smooth_ap(kf, p, (p + 1) % n, cfg));
  return ops::add_scalar(ops::scale(total, -1.0 / double(n)), 1.0);
}

namespace {

Var ce(Var logits, std::size_t target, const char* what) {
  const Var flat = ops::reshape(logits, {logits.numel()});
  if (target >= flat.numel()) throw FormatError(std::string(what) + " target out of range");
  return ops::softmax_cross_entropy(flat, target);
}

}  // namespace

Var action_loss(const ActionLogits& logits, const ActionTargets& target) {
  if (logits.translation.size() != target.translation_pixels.size()) {
    throw FormatError("translation logits and targets differ in view count");
  }
  if (logits.rotation.shape().size() != 2 || logits.rotation.shape()[0] != 3) {
    throw ShapeError("rotation logits must be 3 x R");
  }
  Var total = ce(logits.gripper, target.gripper_open ? 1 : 0, "gripper");
  total = ops::add(total, ce(logits.collision, target.collision_allowed ? 1 : 0, "collision"));
  const std::size_t bins = logits.rotation.shape()[1];
  for (std::size_t a = 0; a < 3; ++a) {
    if (target.rotation_bins[a] >= bins) throw FormatError("rotation bin out of range");
    total = ops::add(total, ce(ops::slice(logits.rotation, 0, a, a + 1), target.rotation_bins[a], "rotation"));
  }
  for (std::size_t v = 0; v < logits.translation.size(); ++v) {
    total = ops::add(total, ce(logits.translation[v], target.translation_pixels[v], "translation"));
  }
  return total;
}

Var kl_saliency(Var pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw ShapeError("kl_saliency shapes differ");
  auto check = [](const Tensor& t, const char* what) {
    double s = 0.0;
    for (double x : t.values()) s += x;
    if (!(std::abs(s - 1.0) <= 1e-5)) throw FormatError(std::string(what) + " does not sum to 1");
  };
  check(pred.value(), "prediction");
  check(target, "target");
  double entropy_term = 0.0;
  for (double t : target.values()) {
    if (t < 0.0) throw FormatError("target has negative mass");
    if (t > 0.0) entropy_term += t * std::log(t);
  }
  Var logp = ops::log(ops::clamp(pred, 1e-12, std::numeric_limits<double>::infinity()));
  Var cross = ops::sum(ops::mul(ops::constant_like(pred, target.astype(pred.dtype())), logp));
  return ops::add_scalar(ops::neg(cross), entropy_term);
}

Var total_loss(Var action, Var cgc, const LossConfig& cfg) {
  if (!action.value().all_finite()) throw NumericalError("action loss is not finite");
  if (cfg.lambda == 0.0) return action;
  if (!cgc.valid() || !cgc.value().all_finite()) throw NumericalError("cgc loss is not finite");
  return ops::add(action, ops::scale(cgc, cfg.lambda));
}

std::string loss_report_json(const std::string& name, double value, double grad_norm) {
  return nlohmann::json{{"name", name}, {"value", value}, {"grad_norm", grad_norm}}.dump();
}

}  // namespace cortical::losses
