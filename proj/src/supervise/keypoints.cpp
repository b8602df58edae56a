#include "cortical/supervise/keypoints.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "cortical/numcore/io.hpp"
#include "cortical/numcore/parallel.hpp"
#include "json.hpp"

namespace cortical::supervise {
namespace {

// Occlusion test of a world point against one view, with the view's depth
// supplied by `depth_at(row, col)` (NaN when the pixel is invalid).
template <typename DepthAt>
bool visible(const Vec3& p, const CameraModel& cam, double eps, DepthAt&& depth_at, Vec2* uv = nullptr) {
  const camgeo::Projection proj = camgeo::project(p, cam);
  if (proj.behind) return false;
  std::size_t r = 0, c = 0;
  if (!camgeo::pixel_of(proj.uv, cam, r, c)) return false;
  const double d = depth_at(r, c);
  if (!std::isfinite(d) || std::abs(proj.depth - d) > eps) return false;
  if (uv != nullptr) *uv = proj.uv;
  return true;
}

}  // namespace

void SupervisionConfig::validate() const {
  if (M < 1) throw ConfigError("M must be at least 1");
  if (!(nms_radius > 0.0)) throw ConfigError("nms_radius must be positive");
  if (!(covis_depth_eps > 0.0)) throw ConfigError("covis_depth_eps must be positive");
  if (!(min_confidence >= 0.0)) throw ConfigError("min_confidence must be non-negative");
}

std::vector<bool> covisible_mask(std::span<const camgeo::PointMap> pms, std::span<const CameraModel> cameras,
                                 double eps) {
  if (pms.empty() || pms.size() != cameras.size()) throw ShapeError("covisible_mask: views/cameras mismatch");
  for (const auto& pm : pms) {
    if (pm.frame != camgeo::Frame::world) throw FrameError("covisible_mask needs world-frame point maps");
  }
  const camgeo::PointMap& first = pms[0];
  std::vector<char> mask(first.points.size(), 0);
  // Per-view camera-frame depth, computed once.
  std::vector<std::vector<double>> depth(pms.size());
  for (std::size_t j = 1; j < pms.size(); ++j) {
    depth[j].assign(pms[j].points.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < pms[j].points.size(); ++i) {
      if (pms[j].valid[i]) depth[j][i] = cameras[j].to_camera(pms[j].points[i]).z();
    }
  }
  parallel_for(first.height, [&](std::size_t r) {
    for (std::size_t c = 0; c < first.width; ++c) {
      const std::size_t i = r * first.width + c;
      if (!first.valid[i]) continue;
      bool ok = true;
      for (std::size_t j = 1; j < pms.size() && ok; ++j) {
        const std::size_t w = pms[j].width;
        ok = visible(first.points[i], cameras[j], eps, [&](std::size_t rr, std::size_t cc) { return depth[j][rr * w + cc]; });
      }
      mask[i] = ok ? 1 : 0;
    }
  });
  return {mask.begin(), mask.end()};
}

std::vector<std::size_t> nms_select(std::span<const Vec3> points, std::span<const double> confidences, double radius,
                                    std::size_t M) {
  if (points.size() != confidences.size()) throw ShapeError("nms_select: points/confidences length mismatch");
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidences[a] > confidences[b]; });
  std::vector<std::size_t> kept;
  const double r2 = radius * radius;
  for (std::size_t idx : order) {
    if (kept.size() >= M) break;
    bool far = true;
    for (std::size_t k : kept) {
      if ((points[idx] - points[k]).squaredNorm() <= r2) {
        far = false;
        break;
      }
    }
    if (far) kept.push_back(idx);
  }
  return kept;
}

ConsistentKeypointBundle track_keypoints(std::span<const Vec3> points, std::span<const double> confidences,
                                         std::span<const CameraModel> cameras, std::span<const Tensor> depths,
                                         double eps) {
  if (cameras.size() != depths.size() || cameras.empty()) throw ShapeError("track_keypoints: views mismatch");
  if (points.size() != confidences.size()) throw ShapeError("track_keypoints: confidences mismatch");
  ConsistentKeypointBundle b;
  b.view_count = cameras.size();
  std::vector<Vec2> row(cameras.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < cameras.size() && ok; ++j) {
      const auto d = depths[j].data<double>();
      const std::size_t w = cameras[j].resolution().width;
      ok = visible(points[i], cameras[j], eps, [&](std::size_t r, std::size_t c) {
        const double v = d[r * w + c];
        const bool valid = cameras[j].kind() == camgeo::CameraKind::pinhole ? v > 0.0 : v != 0.0;
        return valid ? v : std::numeric_limits<double>::quiet_NaN();
      }, &row[j]);
    }
    if (!ok) {
      ++b.dropped;
      continue;
    }
    b.world_points.push_back(points[i]);
    b.confidences.push_back(confidences[i]);
    b.tracks.insert(b.tracks.end(), row.begin(), row.end());
  }
  return b;
}

ConsistentKeypointBundle generate_bundle(const std::vector<ViewData>& views, const SupervisionConfig& cfg) {
  cfg.validate();
  if (views.empty()) throw FormatError("no views to supervise");
  std::vector<camgeo::PointMap> pms;
  std::vector<CameraModel> cams;
  std::vector<Tensor> depths;
  for (const ViewData& v : views) {
    pms.push_back(camgeo::to_world(camgeo::unproject(v.depth, v.camera), v.camera));
    cams.push_back(v.camera);
    depths.push_back(v.depth);
  }
  const std::vector<bool> covis = covisible_mask(pms, cams, cfg.covis_depth_eps);
  const auto conf = views[0].confidence.data<double>();
  double max_conf = 0.0;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    if (pms[0].valid[i]) max_conf = std::max(max_conf, conf[i]);
  }
  std::vector<Vec3> candidates;
  std::vector<double> cand_conf;
  for (std::size_t i = 0; i < covis.size(); ++i) {
    if (!covis[i] || conf[i] < cfg.min_confidence * max_conf || conf[i] <= 0.0) continue;
    candidates.push_back(pms[0].points[i]);
    cand_conf.push_back(conf[i]);
  }
  const auto kept = nms_select(candidates, cand_conf, cfg.nms_radius, cfg.M);
  std::vector<Vec3> pts;
  std::vector<double> pc;
  for (std::size_t k : kept) {
    pts.push_back(candidates[k]);
    pc.push_back(cand_conf[k]);
  }
  return track_keypoints(pts, pc, cams, depths, cfg.covis_depth_eps);
}

void write_bundle(const std::filesystem::path& path, const ConsistentKeypointBundle& b) {
  nlohmann::json header;
  header["M"] = b.size();
  header["N"] = b.view_count;
  header["dropped"] = b.dropped;
  header["layout"] = {"world_points:f64[M,3]", "tracks:f64[M,N,2]", "confidences:f64[M]"};
  const std::string h = header.dump();
  std::vector<double> buf;
  for (const Vec3& p : b.world_points) buf.insert(buf.end(), {p.x(), p.y(), p.z()});
  for (const Vec2& t : b.tracks) buf.insert(buf.end(), {t.x(), t.y()});
  buf.insert(buf.end(), b.confidences.begin(), b.confidences.end());
  std::string out(8, '\0');
  const std::uint64_t n = h.size();
  std::memcpy(out.data(), &n, 8);
  out += h;
  out.append(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(double));
  write_text(path, out);
}

ConsistentKeypointBundle read_bundle(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FormatError("missing bundle " + path.string());
  const std::string raw = read_text(path);
  if (raw.size() < 8) throw FormatError("bundle too short");
  std::uint64_t n = 0;
  std::memcpy(&n, raw.data(), 8);
  if (8 + n > raw.size()) throw FormatError("bundle header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(raw.substr(8, n));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bundle header: ") + e.what());
  }
  ConsistentKeypointBundle b;
  const std::size_t M = header.at("M").get<std::size_t>();
  b.view_count = header.at("N").get<std::size_t>();
  b.dropped = header.value("dropped", std::size_t{0});
  const std::size_t count = M * 3 + M * b.view_count * 2 + M;
  if (raw.size() != 8 + n + count * sizeof(double)) throw FormatError("bundle payload size mismatch");
  std::vector<double> buf(count);
  std::memcpy(buf.data(), raw.data() + 8 + n, count * sizeof(double));
  std::size_t at = 0;
  for (std::size_t i = 0; i < M; ++i, at += 3) b.world_points.emplace_back(buf[at], buf[at + 1], buf[at + 2]);
  for (std::size_t i = 0; i < M * b.view_count; ++i, at += 2) b.tracks.emplace_back(buf[at], buf[at + 1]);
  b.confidences.assign(buf.begin() + static_cast<std::ptrdiff_t>(at), buf.end());
  return b;
}

}  // namespace cortical::supervise
