#include "cortical/supervise/scene.hpp"

#include <cmath>
#include <limits>

#include "cortical/numcore/parallel.hpp"
#include "cortical/numcore/rng.hpp"

namespace cortical::supervise {
namespace {

struct Ray {
  Vec3 origin;
  Vec3 dir;       // camera +z has unit component along dir, so t is z-depth
  double t_min;   // -inf for orthographic rays
};

Ray make_ray(const CameraModel& camera, const Vec2& uv) {
  const Vec3 origin_cam = camera.kind() == camgeo::CameraKind::pinhole ? Vec3::Zero()
                                                                       : camera.unproject_camera(uv, 0.0);
  const Vec3 dir_cam = camera.kind() == camgeo::CameraKind::pinhole ? camera.unproject_camera(uv, 1.0)
                                                                    : Vec3::UnitZ();
  const camgeo::Mat3 rt = camera.rotation().transpose();
  return {camera.to_world(origin_cam), rt * dir_cam,
          camera.kind() == camgeo::CameraKind::pinhole ? 0.0 : -std::numeric_limits<double>::infinity()};
}

// Smallest t > ray.t_min at which the ray meets the box surface.
std::optional<double> hit_box(const Ray& ray, const Box& box) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (ray.dir[a] == 0.0) {
      if (ray.origin[a] < box.lo[a] || ray.origin[a] > box.hi[a]) return std::nullopt;
      continue;
    }
    double ta = (box.lo[a] - ray.origin[a]) / ray.dir[a];
    double tb = (box.hi[a] - ray.origin[a]) / ray.dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return std::nullopt;
  if (t0 > ray.t_min) return t0;
  if (t1 > ray.t_min) return t1;
  return std::nullopt;
}

std::optional<double> hit_sphere(const Ray& ray, const Sphere& s) {
  const Vec3 oc = ray.origin - s.center;
  const double a = ray.dir.squaredNorm();
  const double b = 2.0 * oc.dot(ray.dir);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2.0 * a);
  const double t1 = (-b + sq) / (2.0 * a);
  if (t0 > ray.t_min) return t0;
  if (t1 > ray.t_min) return t1;
  return std::nullopt;
}

}  // namespace

std::optional<RayHit> raycast(const SceneSpec& scene, const CameraModel& camera, const Vec2& uv) {
  const Ray ray = make_ray(camera, uv);
  std::optional<RayHit> best;
  auto consider = [&](std::optional<double> t, const Vec3& color) {
    if (!t || (best && *t >= best->depth)) return;
    best = RayHit{*t, ray.origin + *t * ray.dir, color};
  };
  for (const Box& b : scene.boxes) consider(hit_box(ray, b), b.color);
  for (const Sphere& s : scene.spheres) consider(hit_sphere(ray, s), s.color);
  if (best) best->depth = camera.to_camera(best->point).z();
  return best;
}

std::vector<ViewData> synth_scene_oracle(std::uint64_t seed, const SceneSpec& scene) {
  if (scene.boxes.empty() && scene.spheres.empty()) throw FormatError("scene has no geometry");
  if (scene.cameras.empty()) throw FormatError("scene has no cameras");
  std::vector<ViewData> views;
  Rng rng(seed);
  for (const CameraModel& cam : scene.cameras) {
    const auto res = cam.resolution();
    Tensor depth = Tensor::zeros({res.height, res.width});
    Tensor conf = Tensor::zeros({res.height, res.width});
    auto d = depth.data<double>();
    parallel_for(res.height, [&](std::size_t r) {
      for (std::size_t c = 0; c < res.width; ++c) {
        if (auto hit = raycast(scene, cam, Vec2(double(c), double(r)))) d[r * res.width + c] = hit->depth;
      }
    });
    Rng view_rng = rng.split();
    for (std::size_t i = 0; i < depth.numel(); ++i) {
      if (d[i] == 0.0) continue;
      conf.set(i, scene.confidence_noise > 0.0 ? 1.0 - scene.confidence_noise * view_rng.uniform() : 1.0);
    }
    views.push_back({std::move(depth), std::move(conf), cam});
  }
  return views;
}

}  // namespace cortical::supervise
