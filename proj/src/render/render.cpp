#include "cortical/render/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cortical/numcore/io.hpp"
#include "cortical/numcore/parallel.hpp"
#include "json.hpp"

namespace cortical::render {
namespace fs = std::filesystem;
using camgeo::CameraKind;
using camgeo::Mat3;
using json = nlohmann::json;

void ColoredCloud::append(const Vec3& p, const Vec3& rgb) {
  points.push_back(p);
  colors.push_back(rgb);
}

void ColoredCloud::validate() {
  if (points.size() != colors.size()) throw FormatError("cloud has mismatched point/color counts");
  for (const Vec3& p : points) {
    if (!p.allFinite()) throw FormatError("cloud contains a non-finite point");
  }
  for (Vec3& c : colors) {
    if (!c.allFinite()) throw FormatError("cloud contains a non-finite color");
    c = c.cwiseMax(0.0).cwiseMin(1.0);
  }
}

void write_cloud(const fs::path& stem, const ColoredCloud& cloud) {
  Tensor t = Tensor::zeros({cloud.size(), 6});
  auto d = t.data<double>();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      d[i * 6 + k] = cloud.points[i][k];
      d[i * 6 + 3 + k] = cloud.colors[i][k];
    }
  }
  write_tensor(stem, t, "cloud");
}

ColoredCloud read_cloud(const fs::path& stem) {
  const Tensor t = read_tensor(stem).astype(DType::f64);
  if (t.rank() != 2 || t.dim(1) != 6) throw FormatError(stem.string() + ": cloud must be K x 6");
  ColoredCloud cloud;
  const auto d = t.data<double>();
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    cloud.append(Vec3(d[i * 6], d[i * 6 + 1], d[i * 6 + 2]), Vec3(d[i * 6 + 3], d[i * 6 + 4], d[i * 6 + 5]));
  }
  cloud.validate();
  return cloud;
}

ViewBundle render_view(const ColoredCloud& cloud, const CameraModel& camera, double splat_radius_px) {
  const std::size_t h = camera.resolution().height;
  const std::size_t w = camera.resolution().width;
  const std::size_t plane = h * w;
  ViewBundle out{Tensor::zeros({kChannels, h, w}), camera, std::vector<bool>(plane, false)};
  std::vector<double> zbuf(plane, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> winner(plane, 0);
  const double r2 = splat_radius_px * splat_radius_px;

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const camgeo::Projection p = camgeo::project(cloud.points[i], camera);
    if (p.behind) continue;
    const double u = p.uv.x();
    const double v = p.uv.y();
    std::size_t row0 = 0, col0 = 0;
    const bool inside = camgeo::pixel_of(p.uv, camera, row0, col0);
    const double c_lo = std::max(0.0, std::ceil(u - splat_radius_px));
    const double c_hi = std::min(double(w) - 1.0, std::floor(u + splat_radius_px));
    const double r_lo = std::max(0.0, std::ceil(v - splat_radius_px));
    const double r_hi = std::min(double(h) - 1.0, std::floor(v + splat_radius_px));
    auto splat = [&](std::size_t r, std::size_t c) {
      const std::size_t k = r * w + c;
      if (p.depth < zbuf[k]) {
        zbuf[k] = p.depth;
        winner[k] = i;
      }
    };
    bool hit_center = false;
    for (double rr = r_lo; rr <= r_hi; rr += 1.0) {
      for (double cc = c_lo; cc <= c_hi; cc += 1.0) {
        const double du = cc - u;
        const double dv = rr - v;
        if (du * du + dv * dv > r2) continue;
        const auto r = static_cast<std::size_t>(rr);
        const auto c = static_cast<std::size_t>(cc);
        hit_center |= inside && r == row0 && c == col0;
        splat(r, c);
      }
    }
    if (inside && !hit_center) splat(row0, col0);
  }

  auto img = out.image.data<double>();
  for (std::size_t k = 0; k < plane; ++k) {
    if (!std::isfinite(zbuf[k])) continue;
    out.valid[k] = true;
    const std::size_t i = winner[k];
    for (std::size_t ch = 0; ch < 3; ++ch) {
      img[(kRgb + ch) * plane + k] = cloud.colors[i][ch];
      img[(kXyz + ch) * plane + k] = cloud.points[i][ch];
    }
    img[kDepth * plane + k] = zbuf[k];
  }
  return out;
}

std::vector<CameraModel> make_static_cameras(const Bounds& bounds, std::size_t resolution) {
  const Vec3 ext = bounds.extent();
  if (!ext.allFinite() || (ext.array() <= 0.0).any()) {
    throw FormatError("workspace bounds are degenerate");
  }
  if (resolution == 0) throw FormatError("static camera resolution must be positive");
  struct Axes {
    Vec3 x, y, z;
    int u_axis, v_axis;
  };
  // Image rows follow camera +y, which points down in each image.
  const Axes views[3] = {
      {Vec3(1, 0, 0), Vec3(0, -1, 0), Vec3(0, 0, -1), 0, 1},  // top
      {Vec3(1, 0, 0), Vec3(0, 0, -1), Vec3(0, 1, 0), 0, 2},   // front
      {Vec3(0, 1, 0), Vec3(0, 0, -1), Vec3(-1, 0, 0), 1, 2},  // right
  };
  const double res = double(resolution);
  const double c = (res - 1.0) / 2.0;
  const Vec3 center = bounds.center();
  std::vector<CameraModel> cams;
  for (const Axes& a : views) {
    Mat3 rot;
    rot.row(0) = a.x.transpose();
    rot.row(1) = a.y.transpose();
    rot.row(2) = a.z.transpose();
    const Vec3 eye = center - a.z * ext.norm();
    const Mat4 pose = camgeo::make_pose(rot, -(rot * eye));
    cams.push_back(CameraModel::orthographic(res / ext[a.u_axis], res / ext[a.v_axis], c, c, pose,
                                             {resolution, resolution}));
  }
  return cams;
}

CameraModel make_dynamic_camera(const Mat4& wrist_pose, double fov_deg, std::size_t resolution,
                                const JitterConfig& jitter, Rng& rng) {
  if (!camgeo::is_rigid(wrist_pose)) throw FrameError("wrist pose is not a rigid transform");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw DomainError("fov must lie in (0, 180) degrees");
  Mat4 cam_to_world = wrist_pose;
  if (jitter.scale > 0.0) {
    const double off = jitter.max_offset * jitter.scale;
    const Vec3 offset(rng.uniform(-off, off), rng.uniform(-off, off), rng.uniform(-off, off));
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double tilt = rng.uniform(-1.0, 1.0) * jitter.max_tilt_deg * jitter.scale * M_PI / 180.0;
    const Mat3 r = camgeo::axis_angle(Vec3(std::cos(phi), std::sin(phi), 0.0), tilt);
    cam_to_world = wrist_pose * camgeo::make_pose(r, offset);
  }
  const double half = double(resolution) / 2.0;
  const double f = half / std::tan(fov_deg * M_PI / 360.0);
  const double c = (double(resolution) - 1.0) / 2.0;
  return CameraModel::pinhole(f, f, c, c, camgeo::rigid_inverse(cam_to_world), {resolution, resolution});
}

namespace {

json mat_json(const Mat4& m) {
  json a = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
  return a;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Mat4 json_mat(const json& a) {
  if (!a.is_array() || a.size() != 16) throw FormatError("expected 16 pose values");
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = a.at(r * 4 + c).get<double>();
  return m;
}

Vec3 json_vec(const json& a) {
  if (!a.is_array() || a.size() != 3) throw FormatError("expected 3 coordinates");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

json parse_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

void write_trajectory(const fs::path& path, const Trajectory& traj) {
  json poses = json::array(), ee = json::array();
  for (const Mat4& m : traj.wrist_poses) poses.push_back(mat_json(m));
  for (const Vec3& p : traj.ee_positions) ee.push_back(vec_json(p));
  write_text(path, json{{"wrist_poses", poses}, {"ee", ee}}.dump(1));
}

Trajectory read_trajectory(const fs::path& path) {
  const json j = parse_json(path);
  Trajectory traj;
  try {
    for (const json& m : j.at("wrist_poses")) traj.wrist_poses.push_back(json_mat(m));
    for (const json& p : j.at("ee")) traj.ee_positions.push_back(json_vec(p));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (traj.wrist_poses.size() != traj.ee_positions.size() || traj.wrist_poses.empty()) {
    throw FormatError(path.string() + ": trajectory needs matching, nonempty pose and ee lists");
  }
  return traj;
}

ColoredCloud marker_cloud(const Vec3& center, double radius, const Vec3& color) {
  ColoredCloud cloud;
  if (radius <= 0.0) return cloud;
  // Fibonacci sphere.
  constexpr std::size_t n = 800;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (double(i) + 0.5) / double(n);
    const double rho = std::sqrt(1.0 - z * z);
    const double a = golden * double(i);
    cloud.append(center + radius * Vec3(rho * std::cos(a), rho * std::sin(a), z), color);
  }
  return cloud;
}

EgoSequence render_ego_sequence(const Trajectory& traj, const ColoredCloud& cloud, const EgoConfig& cfg) {
  const std::size_t steps = traj.wrist_poses.size();
  if (steps == 0 || traj.ee_positions.size() != steps) {
    throw FormatError("trajectory needs matching, nonempty pose and ee lists");
  }
  // Cameras are drawn sequentially so jitter does not depend on scheduling.
  Rng rng(cfg.seed);
  std::vector<CameraModel> cams;
  cams.reserve(steps);
  for (const Mat4& pose : traj.wrist_poses) {
    cams.push_back(make_dynamic_camera(pose, cfg.fov_deg, cfg.resolution, cfg.jitter, rng));
  }

  EgoSequence seq;
  seq.ee_world = traj.ee_positions;
  seq.labels.resize(steps);
  seq.visible.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const camgeo::Projection p = camgeo::project(traj.ee_positions[t], cams[t]);
    seq.labels[t] = p.uv;
    seq.visible[t] = !p.behind && cams[t].in_image(p.uv);
  }

  std::vector<std::optional<ViewBundle>> frames(steps);
  parallel_for(steps, [&](std::size_t t) {
    ColoredCloud scene = cloud;
    const ColoredCloud marker = marker_cloud(traj.ee_positions[t], cfg.marker_radius, cfg.marker_color);
    scene.points.insert(scene.points.end(), marker.points.begin(), marker.points.end());
    scene.colors.insert(scene.colors.end(), marker.colors.begin(), marker.colors.end());
    frames[t] = render_view(scene, cams[t], cfg.splat_radius_px);
  });
  for (auto& f : frames) seq.frames.push_back(std::move(*f));
  return seq;
}

Tensor saliency_target(const Vec2& label, std::size_t height, std::size_t width, double sigma_px) {
  if (!(sigma_px > 0.0)) throw DomainError("saliency sigma must be positive");
  const double u = label.x(), v = label.y();
  if (!(u >= -0.5 && u <= double(width) - 0.5 && v >= -0.5 && v <= double(height) - 0.5)) {
    throw FormatError("saliency label lies outside the image");
  }
  const double pc = std::min(std::floor(u + 0.5), double(width) - 1.0);
  const double pr = std::min(std::floor(v + 0.5), double(height) - 1.0);
  const double d2min = (pc - u) * (pc - u) + (pr - v) * (pr - v);
  const double inv = 1.0 / (2.0 * sigma_px * sigma_px);
  Tensor out = Tensor::zeros({height, width});
  auto d = out.data<double>();
  double total = 0.0;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double du = double(c) - u, dv = double(r) - v;
      const double e = std::exp(-(du * du + dv * dv - d2min) * inv);
      d[r * width + c] = e;
      total += e;
    }
  }
  for (double& x : d) x /= total;
  return out;
}

void write_ego_episode(const fs::path& dir, std::size_t episode, const EgoSequence& seq) {
  const fs::path edir = dir / ("episode_" + std::to_string(episode));
  fs::create_directories(edir);
  json labels = json::array(), ee = json::array(), visible = json::array(), cams = json::array();
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    write_tensor(edir / ("frame_" + std::to_string(t)), seq.frames[t].image.astype(DType::f32), "frame");
    labels.push_back(json::array({seq.labels[t].x(), seq.labels[t].y()}));
    ee.push_back(vec_json(seq.ee_world[t]));
    visible.push_back(bool(seq.visible[t]));
    cams.push_back(json::parse(camgeo::camera_to_json(seq.frames[t].camera)));
  }
  write_text(edir / "labels.json",
             json{{"labels", labels}, {"ee_world", ee}, {"visible", visible}, {"cameras", cams}}.dump(1));
}

EgoSequence read_ego_episode(const fs::path& dir, std::size_t episode) {
  const fs::path edir = dir / ("episode_" + std::to_string(episode));
  if (!fs::exists(edir / "labels.json")) throw FormatError(edir.string() + ": missing labels.json");
  const json j = parse_json(edir / "labels.json");
  EgoSequence seq;
  try {
    const json& cams = j.at("cameras");
    const std::size_t steps = cams.size();
    if (j.at("labels").size() != steps || j.at("ee_world").size() != steps || j.at("visible").size() != steps) {
      throw FormatError(edir.string() + ": labels.json lists differ in length");
    }
    for (std::size_t t = 0; t < steps; ++t) {
      const CameraModel cam = camgeo::camera_from_json(cams[t].dump());
      Tensor image = read_tensor(edir / ("frame_" + std::to_string(t))).astype(DType::f64);
      const Shape expect{kChannels, cam.resolution().height, cam.resolution().width};
      if (image.shape() != expect) throw FormatError(edir.string() + ": frame shape mismatch");
      // Pinhole frames never store depth 0 at a valid pixel.
      const std::size_t plane = expect[1] * expect[2];
      std::vector<bool> valid(plane);
      const auto d = image.data<double>();
      for (std::size_t k = 0; k < plane; ++k) valid[k] = d[kDepth * plane + k] != 0.0;
      seq.frames.push_back({std::move(image), cam, std::move(valid)});
      const json& l = j["labels"][t];
      seq.labels.emplace_back(l.at(0).get<double>(), l.at(1).get<double>());
      seq.ee_world.push_back(json_vec(j["ee_world"][t]));
      seq.visible.push_back(j["visible"][t].get<bool>());
    }
  } catch (const json::exception& e) {
    throw FormatError(edir.string() + ": " + e.what());
  }
  return seq;
}

std::size_t count_ego_episodes(const fs::path& dir) {
  std::size_t n = 0;
  while (fs::exists(dir / ("episode_" + std::to_string(n)) / "labels.json")) ++n;
  return n;
}

}  // namespace cortical::render
