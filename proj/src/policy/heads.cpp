#include "cortical/policy/heads.hpp"

#include <algorithm>
#include <cmath>

#include "cortical/policy/layers.hpp"

namespace cortical::policy {

Var heatmap_to_feature_resolution(Var heatmap, std::size_t height, std::size_t width) {
  const Shape s = heatmap.shape();
  if (s.size() != 2) throw ShapeError("heatmap must be H x W");
  Var h = heatmap;
  if (s[0] != height || s[1] != width) {
    h = ops::reshape(ops::resize_bilinear(ops::reshape(heatmap, {1, s[0], s[1]}), height, width), {height, width});
  }
  return ops::div(h, ops::sum(h));
}

Var build_global_feature(std::span<const ViewPrediction> preds) {
  if (preds.size() != 4) throw ShapeError("global feature needs 3 static and 1 dynamic prediction");
  const std::size_t c = preds[0].feature_map.shape()[0];
  std::vector<Var> phi, psi;
  for (const ViewPrediction& v : preds) {
    const Shape s = v.feature_map.shape();
    if (s.size() != 3 || s[0] != c) throw ShapeError("feature maps must be C x h x w with a shared C");
    Var h = heatmap_to_feature_resolution(v.heatmap, s[1], s[2]);
    Var flat = ops::reshape(v.feature_map, {c, s[1] * s[2]});
    Var weights = ops::reshape(h, {1, s[1] * s[2]});
    phi.push_back(ops::sum_axis(ops::mul(flat, weights), 1));
    psi.push_back(ops::max_axis(flat, 1));
  }
  std::vector<Var> parts = phi;
  parts.insert(parts.end(), psi.begin(), psi.end());
  return ops::concat(parts, 0);
}

Vec3 WorkspaceGrid::point(std::size_t ix, std::size_t iy, std::size_t iz) const {
  const Vec3 cs = cell_size();
  return bounds.lo + Vec3((double(ix) + 0.5) * cs.x(), (double(iy) + 0.5) * cs.y(), (double(iz) + 0.5) * cs.z());
}

Vec3 WorkspaceGrid::point(std::size_t index) const {
  return point(index / (n * n), (index / n) % n, index % n);
}

std::array<std::size_t, 3> WorkspaceGrid::cell_of(const Vec3& p) const {
  std::array<std::size_t, 3> cell{};
  const Vec3 cs = cell_size();
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((p[a] - bounds.lo[a]) / cs[a]);
    cell[a] = std::size_t(std::clamp(f, 0.0, double(n - 1)));
  }
  return cell;
}

double heatmap_lookup(const Tensor& heatmap, const Vec2& uv) {
  const std::size_t h = heatmap.dim(0), w = heatmap.dim(1);
  const double u = std::clamp(uv.x(), 0.0, double(w - 1));
  const double v = std::clamp(uv.y(), 0.0, double(h - 1));
  const std::size_t c0 = std::min(std::size_t(u), w - 1), r0 = std::min(std::size_t(v), h - 1);
  const std::size_t c1 = std::min(c0 + 1, w - 1), r1 = std::min(r0 + 1, h - 1);
  const double fu = u - double(c0), fv = v - double(r0);
  const auto d = heatmap.data<double>();
  return (1 - fv) * ((1 - fu) * d[r0 * w + c0] + fu * d[r0 * w + c1]) +
         fv * ((1 - fu) * d[r1 * w + c0] + fu * d[r1 * w + c1]);
}

TranslationDecode decode_translation(std::span<const Tensor> heatmaps, std::span<const CameraModel> cameras,
                                     const WorkspaceGrid& grid) {
  if (heatmaps.size() != cameras.size()) throw ShapeError("need one camera per heatmap");
  std::vector<Tensor> maps;
  for (std::size_t j = 0; j < heatmaps.size(); ++j) {
    const auto res = cameras[j].resolution();
    if (heatmaps[j].shape() != Shape{res.height, res.width}) throw ShapeError("heatmap does not match its camera");
    maps.push_back(heatmaps[j].astype(DType::f64));
  }
  TranslationDecode best;
  bool any = false;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Vec3 p = grid.point(g);
    double score = 0.0;
    bool seen = false;
    for (std::size_t j = 0; j < maps.size(); ++j) {
      const camgeo::Projection pr = camgeo::project(p, cameras[j]);
      if (pr.behind || !cameras[j].in_image(pr.uv)) continue;
      seen = true;
      score += heatmap_lookup(maps[j], pr.uv);
    }
    if (!seen) continue;
    if (!any || score > best.score) {
      best = {p, g, score};
      any = true;
    }
  }
  if (!any) throw DecodeError("no grid point projects into any view");
  return best;
}

std::array<std::size_t, 2> heatmap_argmax(const Tensor& heatmap) {
  const std::size_t w = heatmap.dim(1);
  std::size_t arg = 0;
  double best = heatmap.get(0);
  for (std::size_t i = 1; i < heatmap.numel(); ++i) {
    const double x = heatmap.get(i);
    if (x > best) {
      best = x;
      arg = i;
    }
  }
  return {arg / w, arg % w};
}

Var pool_local(Var fm, std::size_t row, std::size_t col, std::size_t height, std::size_t width) {
  const Shape s = fm.shape();
  const double u = std::clamp((double(col) + 0.5) * double(s[2]) / double(width) - 0.5, 0.0, double(s[2] - 1));
  const double v = std::clamp((double(row) + 0.5) * double(s[1]) / double(height) - 0.5, 0.0, double(s[1] - 1));
  return ops::bilinear_sample(fm, u, v);
}

void init_action_decoder(ParameterStore& store, Rng& rng, const DecoderConfig& cfg) {
  init_linear(store, rng, "decoder.hidden", 12 * cfg.channels, cfg.hidden);
  init_linear(store, rng, "decoder.rotation", cfg.hidden, 3 * cfg.rotation_bins);
  init_linear(store, rng, "decoder.gripper", cfg.hidden, 2);
  init_linear(store, rng, "decoder.collision", cfg.hidden, 2);
}

ActionHeads decode_action(const Bound& p, const DecoderConfig& cfg, Var global, std::span<const Var> locals) {
  if (global.shape() != Shape{8 * cfg.channels}) throw ShapeError("global feature must have length 8C");
  if (locals.size() != 4) throw ShapeError("need 4 local features");
  std::vector<Var> parts{global};
  for (const Var& l : locals) {
    if (l.shape() != Shape{cfg.channels}) throw ShapeError("local features must have length C");
    parts.push_back(l);
  }
  Var x = ops::reshape(ops::concat(parts, 0), {1, 12 * cfg.channels});
  Var h = ops::relu(linear(p, "decoder.hidden", x));
  ActionHeads out;
  out.rotation = ops::reshape(linear(p, "decoder.rotation", h), {3, cfg.rotation_bins});
  out.gripper = ops::reshape(linear(p, "decoder.gripper", h), {2});
  out.collision = ops::reshape(linear(p, "decoder.collision", h), {2});
  return out;
}

ActionSample make_action_sample(const Vec3& translation, std::array<std::size_t, 3> rotation_bins,
                                bool gripper_open, bool collision_allowed, const WorkspaceGrid& grid,
                                std::size_t rotation_bins_count) {
  if (!grid.bounds.contains(translation)) throw FormatError("action translation lies outside the workspace");
  for (std::size_t b : rotation_bins) {
    if (b >= rotation_bins_count) throw FormatError("rotation bin out of range");
  }
  return {translation, grid.cell_of(translation), rotation_bins, gripper_open, collision_allowed};
}

RefinedViews refine_stage(const Vec3& coarse, const render::ColoredCloud& cloud, const Bounds& workspace,
                          double zoom, std::size_t resolution, double splat_radius_px) {
  if (!workspace.contains(coarse)) throw FormatError("coarse point lies outside the workspace");
  RefinedViews out;
  const Vec3 half = Vec3::Constant(zoom / 2.0);
  out.bounds = {coarse - half, coarse + half};
  const Vec3 lo = out.bounds.lo.cwiseMax(workspace.lo);
  const Vec3 hi = out.bounds.hi.cwiseMin(workspace.hi);
  out.clipped = lo != out.bounds.lo || hi != out.bounds.hi;
  out.bounds = {lo, hi};
  // Geometry outside the cube would occlude it in the zoomed views.
  render::ColoredCloud crop;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (out.bounds.contains(cloud.points[i])) crop.append(cloud.points[i], cloud.colors[i]);
  }
  for (const CameraModel& cam : render::make_static_cameras(out.bounds, resolution)) {
    out.views.push_back(render::render_view(crop, cam, splat_radius_px));
  }
  return out;
}

}  // namespace cortical::policy
