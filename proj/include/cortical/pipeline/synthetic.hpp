#pragma once

#include <cstdint>
#include <vector>

#include "cortical/policy/training.hpp"
#include "cortical/render/render.hpp"

namespace cortical::pipeline {

using camgeo::Mat4;
using camgeo::Vec3;
using render::Bounds;

struct SynthConfig {
  Bounds workspace{Vec3(-0.4, -0.4, -0.05), Vec3(0.4, 0.4, 0.75)};
  double point_spacing = 0.008;
  std::size_t distractors = 2;
  std::size_t rotation_bins = 72;
  std::size_t grid = 32;
};

// Task ids of the two keyframes of every episode.
inline constexpr std::size_t kTaskPick = 0;
inline constexpr std::size_t kTaskPlace = 1;

struct DemoKeyframe {
  std::size_t task = 0;
  Mat4 wrist_pose = Mat4::Identity();  // observation pose, wrist to world
  Vec3 ee = Vec3::Zero();
  policy::ActionSample action;
  render::ColoredCloud cloud;  // scene state observed at this keyframe
};

// A red cube to pick, a green pad to place it on and colored distractors on
// a table. Keyframe 0 grasps the cube; keyframe 1 places it on the pad.
struct DemoEpisode {
  std::uint64_t seed = 0;
  std::vector<DemoKeyframe> keyframes;
};

DemoEpisode make_pick_place_episode(std::uint64_t seed, const SynthConfig& cfg);

// Top-down wrist pose (wrist +z pointing down) with the given yaw whose
// end-effector, 0.125 along +z, sits at ee.
Mat4 top_down_wrist(const Vec3& ee, double yaw);
inline constexpr double kWristToEe = 0.125;

// Camera descent over a random scene of the same family, T steps.
struct EgoData {
  render::Trajectory trajectory;
  render::ColoredCloud cloud;
};
EgoData make_ego_trajectory(std::uint64_t seed, std::size_t steps, const SynthConfig& cfg);

// Rotates the scene about the workspace's vertical center axis by up to
// max_rot_deg and shifts it by up to max_shift per horizontal axis, moving
// clouds, poses and targets together. Draws are retried until every target
// stays inside the workspace; after 20 failures the episode is returned
// unchanged.
DemoEpisode augment_episode(const DemoEpisode& ep, Rng& rng, double max_rot_deg, double max_shift,
                            const SynthConfig& cfg);

struct SampleConfig {
  std::size_t static_resolution = 64;
  std::size_t ego_resolution = 64;
  double fov_deg = 90.0;
  double jitter = 1.0;
  double splat_radius_px = 1.0;
  supervise::SupervisionConfig supervision;
};

// Renders the static and dynamic views of every keyframe and builds the
// keypoint bundle from the static views.
std::vector<policy::PolicySample> build_policy_samples(const std::vector<DemoEpisode>& episodes,
                                                       const SynthConfig& scfg, const SampleConfig& cfg);

}  // namespace cortical::pipeline
