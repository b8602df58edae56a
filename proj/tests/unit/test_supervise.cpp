#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"

#include "cortical/camgeo/pointmap.hpp"
#include "cortical/numcore/io.hpp"
#include "cortical/supervise/foundation.hpp"
#include "cortical/supervise/keypoints.hpp"
#include "cortical/supervise/scene.hpp"
#include "scenes.hpp"

using namespace cortical;
using namespace cortical::supervise;
using testscenes::brute_covisible;
using testscenes::brute_nms;
using testscenes::cameras_of;
using testscenes::world_maps;
using camgeo::CameraModel;
using camgeo::Mat4;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cortical_sup_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("synthetic oracle examples") {
  SceneSpec unit;
  unit.boxes.push_back({Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)});
  // Front orthographic camera looking along +y from y = -2.
  camgeo::Mat3 r;
  r << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  const Mat4 pose = camgeo::make_pose(r, -(r * Vec3(0, -2, 0)));
  unit.cameras.push_back(CameraModel::orthographic(16, 16, 15.5, 15.5, pose, {32, 32}));
  const auto views = synth_scene_oracle(0, unit);
  double lo = 1e9, hi = -1e9;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < 32 * 32; ++i) {
    const double d = views[0].depth.get(i);
    if (d == 0.0) continue;
    ++hits;
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    CHECK(views[0].confidence.get(i) == 1.0);
  }
  CHECK(hits == 16 * 16);
  CHECK(hi - lo < 1e-12);
  CHECK(lo == doctest::Approx(1.5));

  SceneSpec ball;
  ball.spheres.push_back({Vec3(0, 0, 3), 1.0});
  ball.cameras.push_back(CameraModel::pinhole(20, 20, 15, 15, Mat4::Identity(), {31, 31}));
  const auto bv = synth_scene_oracle(0, ball);
  std::size_t argmin = 0;
  for (std::size_t i = 0; i < bv[0].depth.numel(); ++i) {
    const double d = bv[0].depth.get(i);
    if (d > 0 && (bv[0].depth.get(argmin) == 0 || d < bv[0].depth.get(argmin))) argmin = i;
  }
  CHECK(argmin == 15 * 31 + 15);
  CHECK(bv[0].depth.get(argmin) == doctest::Approx(2.0));

  CHECK_THROWS_AS(synth_scene_oracle(0, SceneSpec{}), FormatError);
}

TEST_CASE("synthetic depth agrees with the closed-form intersection oracle") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const SceneSpec scene = testscenes::two_boxes_and_wall(seed, 48);
    const auto views = synth_scene_oracle(seed, scene);
    double worst = 0;
    for (std::size_t j = 0; j < views.size(); ++j) {
      const auto res = views[j].camera.resolution();
      for (std::size_t r = 0; r < res.height; ++r) {
        for (std::size_t c = 0; c < res.width; ++c) {
          const double want = testscenes::oracle_depth(scene, views[j].camera, Vec2(double(c), double(r)));
          const double got = views[j].depth.get(r * res.width + c);
          if (std::isnan(want)) {
            CHECK(got == 0.0);
          } else {
            worst = std::max(worst, std::abs(got - want));
          }
        }
      }
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("foundation output directory round-trips") {
  const SceneSpec scene = testscenes::two_boxes_and_wall(3, 32);
  const auto views = synth_scene_oracle(3, scene);
  const fs::path dir = scratch("ingest");
  write_foundation_outputs(dir, views);
  const auto back = ingest_foundation_outputs(dir);
  REQUIRE(back.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(bit_equal(back[j].depth, views[j].depth));
    CHECK(bit_equal(back[j].confidence, views[j].confidence));
    CHECK(back[j].camera.pose() == views[j].camera.pose());
  }
  fs::remove(dir / "view_1" / "conf.bin");
  CHECK_THROWS_AS(ingest_foundation_outputs(dir), FormatError);
  fs::remove_all(dir / "view_1");
  CHECK_THROWS_AS(ingest_foundation_outputs(dir), FormatError);  // gap before view_2
  fs::remove_all(dir / "view_2");
  CHECK(ingest_foundation_outputs(dir).size() == 1);
  write_tensor(dir / "view_0" / "conf", Tensor::zeros({3, 3}));
  CHECK_THROWS_AS(ingest_foundation_outputs(dir), FormatError);
  fs::remove_all(dir);
  CHECK_THROWS_AS(ingest_foundation_outputs(dir), FormatError);
}

TEST_CASE("covisible_mask examples") {
  const SceneSpec scene = testscenes::two_boxes_and_wall(5, 32);
  auto views = synth_scene_oracle(5, scene);
  const auto pms = world_maps(views);
  const auto cams = cameras_of(views);

  const auto single = covisible_mask(std::span(pms.data(), 1), std::span(cams.data(), 1), 0.01);
  CHECK(single == pms[0].valid);

  std::vector<camgeo::PointMap> twin{pms[0], pms[0]};
  std::vector<CameraModel> twin_cams{cams[0], cams[0]};
  CHECK(covisible_mask(twin, twin_cams, 0.01) == pms[0].valid);
}

TEST_CASE("covisible_mask and nms_select match brute force on seeded scenes") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto views = synth_scene_oracle(seed, testscenes::two_boxes_and_wall(seed, 64));
    const auto mask = covisible_mask(world_maps(views), cameras_of(views), 0.01);
    const auto want = brute_covisible(views, 0.01);
    CHECK(mask == want);
    CHECK(std::count(mask.begin(), mask.end(), true) > 0);
  }
}

TEST_CASE("nms_select examples") {
  std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(0.05, 0, 0)};
  CHECK(nms_select(two, std::vector<double>{0.4, 0.9}, 0.1, 5) == std::vector<std::size_t>{1});

  std::vector<Vec3> spread{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  CHECK(nms_select(spread, std::vector<double>{0.2, 0.5, 0.3}, 0.1, 10) == std::vector<std::size_t>{1, 2, 0});
  CHECK(nms_select(spread, std::vector<double>{0.5, 0.5, 0.5}, 0.1, 2) == std::vector<std::size_t>{0, 1});

  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec3> pts;
    std::vector<double> conf;
    for (int i = 0; i < 50; ++i) {
      pts.emplace_back(rng.uniform(0, 0.5), rng.uniform(0, 0.5), rng.uniform(0, 0.5));
      conf.push_back(std::round(rng.uniform(0, 10)) / 10.0);  // plenty of ties
    }
    CHECK(nms_select(pts, conf, 0.1, 10) == brute_nms(pts, conf, 0.1, 10));
  }
}

TEST_CASE("track_keypoints examples") {
  const auto cam = CameraModel::pinhole(40, 40, 12, 10, Mat4::Identity(), {21, 25});
  Tensor depth = Tensor::full({21, 25}, 2.0);
  std::vector<Vec3> p{Vec3(0, 0, 2)};
  std::vector<double> c{1.0};
  std::vector<CameraModel> cams{cam, cam};
  std::vector<Tensor> depths{depth, depth};
  const auto b = track_keypoints(p, c, cams, depths, 0.01);
  REQUIRE(b.size() == 1);
  CHECK(b.track(0, 0) == Vec2(12, 10));
  CHECK(b.track(0, 1) == b.track(0, 0));

  depths[1] = Tensor::full({21, 25}, 1.0);  // something in front in view 1
  const auto occluded = track_keypoints(p, c, cams, depths, 0.01);
  CHECK(occluded.size() == 0);
  CHECK(occluded.dropped == 1);
}

TEST_CASE("generated bundles satisfy the bundle invariants") {
  SupervisionConfig cfg;
  cfg.M = 60;
  cfg.nms_radius = 0.04;
  std::size_t surface_hits = 0, track_count = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const SceneSpec scene = testscenes::two_boxes_and_wall(seed, 64);
    SceneSpec noisy = scene;
    noisy.confidence_noise = 0.5;
    const auto views = synth_scene_oracle(seed, noisy);
    const auto b = generate_bundle(views, cfg);
    REQUIRE(b.size() > 5);
    CHECK(b.size() <= cfg.M);
    CHECK(b.view_count == 3);
    CHECK(std::is_sorted(b.confidences.rbegin(), b.confidences.rend()));
    for (std::size_t i = 0; i < b.size(); ++i) {
      for (std::size_t k = i + 1; k < b.size(); ++k) CHECK((b.world_points[i] - b.world_points[k]).norm() >= cfg.nms_radius);
      for (std::size_t j = 0; j < 3; ++j) {
        const auto proj = camgeo::project(b.world_points[i], views[j].camera);
        CHECK((proj.uv - b.track(i, j)).norm() <= 0.5);
        // Round trip: unprojecting the track at the depth the point renders
        // with in view j recovers it.
        const Vec3 back = camgeo::unproject_point(b.track(i, j), proj.depth, views[j].camera);
        CHECK((back - b.world_points[i]).norm() < 1e-4);
        // Against the analytic scene, the continuous track sees the same
        // surface unless an occluder edge passes inside its pixel.
        const double d = testscenes::oracle_depth(scene, views[j].camera, b.track(i, j));
        surface_hits += std::isfinite(d) && std::abs(d - proj.depth) < 1e-6 ? 1 : 0;
        ++track_count;
      }
    }
    // Determinism.
    const auto again = generate_bundle(synth_scene_oracle(seed, noisy), cfg);
    CHECK(again.world_points == b.world_points);
    CHECK(again.tracks == b.tracks);
  }
  CHECK(double(surface_hits) >= 0.9 * double(track_count));
}

TEST_CASE("bundle file round-trip") {
  SupervisionConfig cfg;
  cfg.M = 20;
  const auto views = synth_scene_oracle(1, testscenes::two_boxes_and_wall(1, 48));
  const auto b = generate_bundle(views, cfg);
  const fs::path dir = scratch("bundle");
  write_bundle(dir / "b.bundle", b);
  const auto back = read_bundle(dir / "b.bundle");
  CHECK(back.world_points == b.world_points);
  CHECK(back.tracks == b.tracks);
  CHECK(back.confidences == b.confidences);
  CHECK(back.view_count == b.view_count);
  write_text(dir / "bad.bundle", "xx");
  CHECK_THROWS_AS(read_bundle(dir / "bad.bundle"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("config validation") {
  SupervisionConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.nms_radius = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.M = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
