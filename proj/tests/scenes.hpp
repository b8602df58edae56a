#pragma once

// Seeded synthetic scenes and independent geometric oracles shared by unit
// and acceptance tests.

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "cortical/camgeo/camera.hpp"
#include "cortical/numcore/rng.hpp"
#include "cortical/camgeo/pointmap.hpp"
#include "cortical/supervise/scene.hpp"

namespace testscenes {

using cortical::Rng;
using cortical::camgeo::CameraModel;
using cortical::camgeo::Vec2;
using cortical::camgeo::Vec3;
using cortical::supervise::Box;
using cortical::supervise::SceneSpec;
using cortical::supervise::Sphere;

inline CameraModel orbit_camera(double azimuth, double elevation, double radius, std::size_t res,
                                double fov_deg = 60.0) {
  const Vec3 eye(radius * std::cos(elevation) * std::cos(azimuth),
                 radius * std::cos(elevation) * std::sin(azimuth), radius * std::sin(elevation));
  const double f = (res / 2.0) / std::tan(fov_deg * M_PI / 360.0);
  const double c = (static_cast<double>(res) - 1.0) / 2.0;
  return CameraModel::pinhole(f, f, c, c, cortical::camgeo::look_at(eye, Vec3(0, 0, 0.1)), {res, res});
}

// Table slab, two boxes, an occluding wall and a sphere seen by `views`
// pinhole cameras spread around the scene.
inline SceneSpec two_boxes_and_wall(std::uint64_t seed, std::size_t res = 64, std::size_t views = 3) {
  Rng rng(seed);
  SceneSpec s;
  s.boxes.push_back({Vec3(-0.5, -0.5, -0.05), Vec3(0.5, 0.5, 0.0), Vec3(0.6, 0.5, 0.4)});
  for (int k = 0; k < 2; ++k) {
    const Vec3 c(rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), 0.0);
    const Vec3 h(rng.uniform(0.04, 0.1), rng.uniform(0.04, 0.1), rng.uniform(0.05, 0.15));
    s.boxes.push_back({Vec3(c.x() - h.x(), c.y() - h.y(), 0.0), Vec3(c.x() + h.x(), c.y() + h.y(), 2 * h.z()),
                       Vec3(rng.uniform(), rng.uniform(), rng.uniform())});
  }
  const double wy = rng.uniform(-0.1, 0.1);
  s.boxes.push_back({Vec3(-0.3, wy - 0.01, 0.0), Vec3(0.05, wy + 0.01, rng.uniform(0.15, 0.3)), Vec3(0.2, 0.2, 0.8)});
  s.spheres.push_back({Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 0.06), 0.06, Vec3(0.9, 0.1, 0.1)});
  const double base = rng.uniform(0, 2 * M_PI);
  for (std::size_t v = 0; v < views; ++v) {
    const double az = base + (static_cast<double>(v) - 1.0) * rng.uniform(0.3, 0.6);
    s.cameras.push_back(orbit_camera(az, rng.uniform(0.6, 0.9), rng.uniform(1.3, 1.6), res));
  }
  return s;
}

// --- independent ray-intersection oracle -------------------------------

struct OracleRay {
  Vec3 origin, dir;
  bool line;  // orthographic: whole line
};

inline OracleRay oracle_ray(const CameraModel& cam, const Vec2& uv) {
  const auto& k = cam.intrinsics();
  const auto r = cam.rotation();
  const Vec3 center = -(r.transpose() * cam.translation());
  if (cam.kind() == cortical::camgeo::CameraKind::pinhole) {
    const Vec3 d_cam((uv.x() - k.cx) / k.fx, (uv.y() - k.cy) / k.fy, 1.0);
    return {center, r.transpose() * d_cam, false};
  }
  const Vec3 o_cam((uv.x() - k.cx) / k.fx, (uv.y() - k.cy) / k.fy, 0.0);
  return {center + r.transpose() * o_cam, r.transpose() * Vec3(0, 0, 1), true};
}

// Each of the six faces as a bounded plane.
inline std::vector<double> box_face_hits(const OracleRay& ray, const Box& b) {
  std::vector<double> ts;
  for (int a = 0; a < 3; ++a) {
    if (ray.dir[a] == 0.0) continue;
    for (double plane : {b.lo[a], b.hi[a]}) {
      const double t = (plane - ray.origin[a]) / ray.dir[a];
      const Vec3 p = ray.origin + t * ray.dir;
      bool inside = true;
      for (int o = 0; o < 3; ++o) {
        if (o == a) continue;
        const double tol = 1e-12 * (1.0 + std::abs(p[o]));
        inside = inside && p[o] >= b.lo[o] - tol && p[o] <= b.hi[o] + tol;
      }
      if (inside) ts.push_back(t);
    }
  }
  return ts;
}

// Closest-approach construction: foot of the perpendicular from the center.
inline std::vector<double> sphere_hits(const OracleRay& ray, const Sphere& s) {
  const double dn = ray.dir.norm();
  const Vec3 u = ray.dir / dn;
  const double along = (s.center - ray.origin).dot(u);
  const Vec3 foot = ray.origin + along * u;
  const double miss2 = (s.center - foot).squaredNorm();
  if (miss2 > s.radius * s.radius) return {};
  const double half = std::sqrt(s.radius * s.radius - miss2);
  return {(along - half) / dn, (along + half) / dn};
}

// z-depth of the nearest surface, NaN if none.
inline double oracle_depth(const SceneSpec& scene, const CameraModel& cam, const Vec2& uv) {
  const OracleRay ray = oracle_ray(cam, uv);
  double best = std::numeric_limits<double>::infinity();
  auto take = [&](const std::vector<double>& ts) {
    for (double t : ts) {
      if (!ray.line && t <= 0.0) continue;
      best = std::min(best, t);
    }
  };
  for (const Box& b : scene.boxes) take(box_face_hits(ray, b));
  for (const Sphere& s : scene.spheres) take(sphere_hits(ray, s));
  if (!std::isfinite(best)) return std::numeric_limits<double>::quiet_NaN();
  return cam.to_camera(ray.origin + best * ray.dir).z();
}

// --- brute-force supervision oracles ------------------------------------

inline std::vector<cortical::camgeo::PointMap> world_maps(const std::vector<cortical::supervise::ViewData>& views) {
  std::vector<cortical::camgeo::PointMap> out;
  for (const auto& v : views) out.push_back(cortical::camgeo::to_world(cortical::camgeo::unproject(v.depth, v.camera), v.camera));
  return out;
}

inline std::vector<CameraModel> cameras_of(const std::vector<cortical::supervise::ViewData>& views) {
  std::vector<CameraModel> out;
  for (const auto& v : views) out.push_back(v.camera);
  return out;
}

// Per-pixel co-visibility recomputed from the raw depth maps.
inline std::vector<bool> brute_covisible(const std::vector<cortical::supervise::ViewData>& views, double eps) {
  const auto& v0 = views[0];
  const auto& k0 = v0.camera.intrinsics();
  const std::size_t H = v0.camera.resolution().height, W = v0.camera.resolution().width;
  std::vector<bool> mask(H * W, false);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      const double d = v0.depth.get(r * W + c);
      if (!(d > 0.0)) continue;
      const Vec3 pc((double(c) - k0.cx) / k0.fx * d, (double(r) - k0.cy) / k0.fy * d, d);
      const Vec3 pw = v0.camera.rotation().transpose() * (pc - v0.camera.translation());
      bool ok = true;
      for (std::size_t j = 1; j < views.size() && ok; ++j) {
        const auto& cam = views[j].camera;
        const Vec3 q = cam.rotation() * pw + cam.translation();
        if (q.z() <= 0) {
          ok = false;
          break;
        }
        const auto& k = cam.intrinsics();
        const double u = k.fx * q.x() / q.z() + k.cx, v = k.fy * q.y() / q.z() + k.cy;
        const double Wj = double(cam.resolution().width), Hj = double(cam.resolution().height);
        if (u < -0.5 || v < -0.5 || u > Wj - 0.5 || v > Hj - 0.5) {
          ok = false;
          break;
        }
        const std::size_t cc = std::min<std::size_t>(std::size_t(std::floor(u + 0.5)), cam.resolution().width - 1);
        const std::size_t rr = std::min<std::size_t>(std::size_t(std::floor(v + 0.5)), cam.resolution().height - 1);
        const double dj = views[j].depth.get(rr * cam.resolution().width + cc);
        ok = dj > 0.0 && std::abs(q.z() - dj) <= eps;
      }
      mask[r * W + c] = ok;
    }
  }
  return mask;
}

// Greedy NMS written as repeated arg-max extraction.
inline std::vector<std::size_t> brute_nms(const std::vector<Vec3>& pts, const std::vector<double>& conf, double radius,
                                   std::size_t M) {
  std::vector<bool> used(pts.size(), false);
  std::vector<std::size_t> kept;
  while (kept.size() < M) {
    std::size_t best = pts.size();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (used[i]) continue;
      if (best == pts.size() || conf[i] > conf[best]) best = i;
    }
    if (best == pts.size()) break;
    used[best] = true;
    bool ok = true;
    for (std::size_t k : kept) ok = ok && (pts[best] - pts[k]).norm() > radius;
    if (ok) kept.push_back(best);
  }
  return kept;
}

}  // namespace testscenes
