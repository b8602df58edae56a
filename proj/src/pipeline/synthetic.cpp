#include "cortical/pipeline/synthetic.hpp"

#include <cmath>
#include <optional>

#include "cortical/numcore/parallel.hpp"

namespace cortical::pipeline {

using camgeo::Mat3;

namespace {

struct Block {
  Vec3 center;
  Vec3 half;
  double yaw;
  Vec3 color;
};

Mat3 rot_z(double yaw) { return camgeo::axis_angle(Vec3::UnitZ(), yaw); }

void add_block(render::ColoredCloud& cloud, const Block& b, double spacing, Rng& rng) {
  const Mat3 r = rot_z(b.yaw);
  // Each face: fixed axis a at +-half[a], sweep the other two.
  for (int a = 0; a < 3; ++a) {
    const int u = (a + 1) % 3, v = (a + 2) % 3;
    const std::size_t nu = std::max<std::size_t>(2, std::size_t(std::ceil(2 * b.half[u] / spacing)) + 1);
    const std::size_t nv = std::max<std::size_t>(2, std::size_t(std::ceil(2 * b.half[v] / spacing)) + 1);
    for (double side : {-1.0, 1.0}) {
      if (a == 2 && side < 0) continue;  // the bottom face rests on the table
      for (std::size_t i = 0; i < nu; ++i) {
        for (std::size_t j = 0; j < nv; ++j) {
          Vec3 local;
          local[a] = side * b.half[a];
          local[u] = -b.half[u] + 2 * b.half[u] * double(i) / double(nu - 1);
          local[v] = -b.half[v] + 2 * b.half[v] * double(j) / double(nv - 1);
          const double shade = rng.uniform(-0.04, 0.04);
          cloud.append(b.center + r * local, b.color + Vec3::Constant(shade));
        }
      }
    }
  }
}

void add_table(render::ColoredCloud& cloud, const Bounds& ws, double spacing, Rng& rng) {
  const std::size_t nx = std::size_t(std::floor((ws.hi.x() - ws.lo.x()) / spacing));
  const std::size_t ny = std::size_t(std::floor((ws.hi.y() - ws.lo.y()) / spacing));
  for (std::size_t i = 0; i <= nx; ++i) {
    for (std::size_t j = 0; j <= ny; ++j) {
      const double shade = rng.uniform(-0.05, 0.05);
      cloud.append(Vec3(ws.lo.x() + double(i) * spacing, ws.lo.y() + double(j) * spacing, 0.0),
                   Vec3(0.55, 0.5, 0.45) + Vec3::Constant(shade));
    }
  }
}

struct Layout {
  Block cube;
  Block pad;
  std::vector<Block> distractors;
};

Layout random_layout(Rng& rng, const SynthConfig& cfg) {
  std::vector<Vec3> taken;
  auto place = [&](double z) {
    for (int attempt = 0;; ++attempt) {
      const Vec3 c(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), z);
      bool free = true;
      for (const Vec3& t : taken) free = free && (c - t).head<2>().norm() > 0.15;
      if (free || attempt > 200) {
        taken.push_back(c);
        return c;
      }
    }
  };
  Layout l;
  const double s = rng.uniform(0.05, 0.07);
  l.cube = {place(s / 2), Vec3::Constant(s / 2), rng.uniform(0.0, M_PI / 2), Vec3(0.85, 0.1, 0.1)};
  l.pad = {place(0.005), Vec3(0.06, 0.06, 0.005), rng.uniform(0.0, M_PI / 2), Vec3(0.1, 0.75, 0.2)};
  const Vec3 colors[2] = {Vec3(0.15, 0.25, 0.85), Vec3(0.6, 0.2, 0.7)};
  for (std::size_t k = 0; k < cfg.distractors; ++k) {
    const Vec3 half(rng.uniform(0.02, 0.045), rng.uniform(0.02, 0.045), rng.uniform(0.02, 0.05));
    l.distractors.push_back({place(half.z()), half, rng.uniform(0.0, M_PI / 2), colors[k % 2]});
  }
  return l;
}

std::size_t yaw_bin(double yaw, std::size_t bins) {
  const double step = 2 * M_PI / double(bins);
  double y = std::fmod(yaw, 2 * M_PI);
  if (y < 0) y += 2 * M_PI;
  return std::min(bins - 1, std::size_t(std::floor(y / step + 1e-9)));
}

render::ColoredCloud scene_cloud(const Layout& l, const Block& cube, const SynthConfig& cfg, Rng& rng) {
  render::ColoredCloud cloud;
  add_table(cloud, cfg.workspace, cfg.point_spacing * 1.25, rng);
  add_block(cloud, l.pad, cfg.point_spacing, rng);
  for (const Block& d : l.distractors) add_block(cloud, d, cfg.point_spacing, rng);
  add_block(cloud, cube, cfg.point_spacing, rng);
  cloud.validate();
  return cloud;
}

}  // namespace

Mat4 top_down_wrist(const Vec3& ee, double yaw) {
  Mat3 flip = Mat3::Identity();
  flip(1, 1) = -1;
  flip(2, 2) = -1;
  return camgeo::make_pose(rot_z(yaw) * flip, ee + Vec3(0, 0, kWristToEe));
}

DemoEpisode make_pick_place_episode(std::uint64_t seed, const SynthConfig& cfg) {
  Rng rng(seed);
  const Layout l = random_layout(rng, cfg);
  const policy::WorkspaceGrid grid{cfg.workspace, cfg.grid};
  const std::size_t half_turn = cfg.rotation_bins / 2;
  DemoEpisode ep;
  ep.seed = seed;

  {
    DemoKeyframe k;
    k.task = kTaskPick;
    const Vec3 target = l.cube.center;
    k.ee = target + Vec3(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), rng.uniform(0.08, 0.16));
    k.wrist_pose = top_down_wrist(k.ee, l.cube.yaw);
    k.action = policy::make_action_sample(target, {0, half_turn, yaw_bin(l.cube.yaw, cfg.rotation_bins)}, false,
                                          false, grid, cfg.rotation_bins);
    k.cloud = scene_cloud(l, l.cube, cfg, rng);
    ep.keyframes.push_back(std::move(k));
  }
  {
    DemoKeyframe k;
    k.task = kTaskPlace;
    const Vec3 target = l.pad.center + Vec3(0, 0, l.pad.half.z() + l.cube.half.z());
    k.ee = target + Vec3(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), rng.uniform(0.08, 0.16));
    k.wrist_pose = top_down_wrist(k.ee, l.pad.yaw);
    k.action = policy::make_action_sample(target, {0, half_turn, yaw_bin(l.pad.yaw, cfg.rotation_bins)}, true,
                                          true, grid, cfg.rotation_bins);
    // The cube hangs below the gripper while it is carried.
    Block held = l.cube;
    held.center = k.ee - Vec3(0, 0, l.cube.half.z() + 0.01);
    held.yaw = l.pad.yaw;
    k.cloud = scene_cloud(l, held, cfg, rng);
    ep.keyframes.push_back(std::move(k));
  }
  return ep;
}

EgoData make_ego_trajectory(std::uint64_t seed, std::size_t steps, const SynthConfig& cfg) {
  Rng rng(seed);
  const Layout l = random_layout(rng, cfg);
  EgoData out;
  out.cloud = scene_cloud(l, l.cube, cfg, rng);
  const bool to_pad = rng.uniform() < 0.5;
  const Vec3 target = to_pad ? l.pad.center : l.cube.center;
  const Vec3 start = target + Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.25, 0.35));
  const Vec3 end = target + Vec3(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02), rng.uniform(0.06, 0.1));
  const double yaw0 = rng.uniform(0.0, 2 * M_PI);
  const double yaw1 = yaw0 + rng.uniform(-0.5, 0.5);
  for (std::size_t t = 0; t < steps; ++t) {
    const double a = steps == 1 ? 0.0 : double(t) / double(steps - 1);
    const Vec3 ee = (1 - a) * start + a * end;
    out.trajectory.wrist_poses.push_back(top_down_wrist(ee, (1 - a) * yaw0 + a * yaw1));
    out.trajectory.ee_positions.push_back(ee);
  }
  return out;
}

DemoEpisode augment_episode(const DemoEpisode& ep, Rng& rng, double max_rot_deg, double max_shift,
                            const SynthConfig& cfg) {
  const policy::WorkspaceGrid grid{cfg.workspace, cfg.grid};
  const Vec3 pivot(cfg.workspace.center().x(), cfg.workspace.center().y(), 0.0);
  for (int attempt = 0; attempt < 20; ++attempt) {
    const double yaw = rng.uniform(-max_rot_deg, max_rot_deg) * M_PI / 180.0;
    const Vec3 shift(rng.uniform(-max_shift, max_shift), rng.uniform(-max_shift, max_shift), 0.0);
    const Mat3 r = rot_z(yaw);
    auto move = [&](const Vec3& p) { return Vec3(r * (p - pivot) + pivot + shift); };
    bool inside = true;
    for (const auto& k : ep.keyframes) inside = inside && cfg.workspace.contains(move(k.action.translation));
    if (!inside) continue;
    DemoEpisode out = ep;
    for (auto& k : out.keyframes) {
      for (Vec3& p : k.cloud.points) p = move(p);
      k.ee = move(k.ee);
      Mat4 w = k.wrist_pose;
      w.topLeftCorner<3, 3>() = r * w.topLeftCorner<3, 3>();
      w.topRightCorner<3, 1>() = move(w.topRightCorner<3, 1>());
      k.wrist_pose = w;
      auto bins = k.action.rotation_bins;
      const double step = 2 * M_PI / double(cfg.rotation_bins);
      bins[2] = yaw_bin((double(bins[2]) + 0.5) * step + yaw, cfg.rotation_bins);
      k.action = policy::make_action_sample(move(k.action.translation), bins, k.action.gripper_open,
                                            k.action.collision_allowed, grid, cfg.rotation_bins);
    }
    // Keep the table inside the workspace footprint.
    for (auto& k : out.keyframes) {
      render::ColoredCloud kept;
      for (std::size_t i = 0; i < k.cloud.size(); ++i) {
        if (cfg.workspace.contains(k.cloud.points[i])) kept.append(k.cloud.points[i], k.cloud.colors[i]);
      }
      k.cloud = std::move(kept);
    }
    return out;
  }
  return ep;
}

std::vector<policy::PolicySample> build_policy_samples(const std::vector<DemoEpisode>& episodes,
                                                       const SynthConfig& scfg, const SampleConfig& cfg) {
  std::vector<std::pair<std::size_t, std::size_t>> refs;
  for (std::size_t e = 0; e < episodes.size(); ++e)
    for (std::size_t k = 0; k < episodes[e].keyframes.size(); ++k) refs.emplace_back(e, k);
  const auto cams = render::make_static_cameras(scfg.workspace, cfg.static_resolution);
  std::vector<std::optional<policy::PolicySample>> built(refs.size());
  parallel_for(refs.size(), [&](std::size_t i) {
    const DemoEpisode& ep = episodes[refs[i].first];
    const DemoKeyframe& k = ep.keyframes[refs[i].second];
    auto cloud = std::make_shared<render::ColoredCloud>(k.cloud);
    std::vector<render::ViewBundle> views;
    std::vector<supervise::ViewData> vd;
    for (const auto& cam : cams) {
      views.push_back(render::render_view(*cloud, cam, cfg.splat_radius_px));
      const auto& v = views.back();
      const std::size_t plane = v.height() * v.width();
      Tensor depth({v.height(), v.width()}), conf({v.height(), v.width()});
      for (std::size_t p = 0; p < plane; ++p) {
        depth.set(p, v.valid[p] ? v.image.get(render::kDepth * plane + p) : 0.0);
        conf.set(p, v.valid[p] ? 1.0 : 0.0);
      }
      vd.push_back({std::move(depth), std::move(conf), cam});
    }
    render::EgoConfig ego;
    ego.fov_deg = cfg.fov_deg;
    ego.resolution = cfg.ego_resolution;
    ego.jitter.scale = cfg.jitter;
    ego.splat_radius_px = cfg.splat_radius_px;
    ego.seed = ep.seed * 1000003ull + refs[i].second;
    const render::Trajectory traj{{k.wrist_pose}, {k.ee}};
    render::ViewBundle dynamic = std::move(render::render_ego_sequence(traj, *cloud, ego).frames[0]);
    policy::PolicySample s{std::move(views), std::move(dynamic), cloud, k.task, k.action,
                           supervise::generate_bundle(vd, cfg.supervision), Tensor(), Tensor(), Tensor()};
    built[i].emplace(std::move(s));
  });
  std::vector<policy::PolicySample> out;
  out.reserve(built.size());
  for (auto& b : built) out.push_back(std::move(*b));
  return out;
}

}  // namespace cortical::pipeline
