#pragma once

#include <cstdint>
#include <string>

#include "splat4d/camera.hpp"
#include "splat4d/image.hpp"
#include "splat4d/se3.hpp"

namespace splat4d {

// Procedurally dressed desk scene: a checkered room box, a desk with static
// props, and a few rigid boxes sliding and spinning above it. Everything is
// ray-cast in closed form, so depth, flow, object ids and point tracks come
// out exact. Bad descriptions throw InvalidSpec.
struct SyntheticSpec {
  int width = 64;
  int height = 48;
  double focal = 55.0;  // fx == fy, principal point at the image center

  int frames = 12;
  double dt = 0.1;                 // seconds between shutter opens
  double shutter_fraction = 0.35;  // open interval as a slice of dt
  int blur_samples = 48;           // quadrature along the shutter path

  double gain_amplitude = 0.12;    // per-frame log-gain swing
  double offset_amplitude = 0.02;  // per-frame bias swing

  int moving_objects = 2;          // rigid movers with ids 1..n (at most 3)
  double motion_amplitude = 0.12;  // mover travel in metres
  double spin_rate = 0.5;          // mover spin in rad/s

  double camera_amplitude = 0.16;  // camera sway in metres
  double camera_yaw = 0.05;        // look-around magnitude in radians

  int tracks_per_face = 2;  // track lattice per mover face (n^2 points)
  uint64_t seed = 1;        // drives texture colors and motion phases

  // Room interior; rays always terminate on these walls if nothing nearer.
  Vec3 room_min = Vec3(-1.8, -1.4, -0.6);
  Vec3 room_max = Vec3(1.8, 1.0, 3.6);
};

PinholeCamera synthetic_camera(const SyntheticSpec& spec);

// Continuous world-from-camera path, parameterized by time in seconds.
SE3Pose synthetic_camera_pose(const SyntheticSpec& spec, double time);

// World-from-local pose of mover `id` (1-based) at `time`.
SE3Pose synthetic_object_pose(const SyntheticSpec& spec, int id, double time);

// One exposed frame: mean of blur_samples ray casts along the geodesic from
// `open` to `close`, then exp(log_gain) * mean + offset. Scene geometry is
// held fixed at `time`; shutter blur models camera motion only.
Image synthetic_color(const SyntheticSpec& spec, const SE3Pose& open,
                      const SE3Pose& close, double time, double log_gain,
                      double offset);

// Exact z-depth (metres) and object-id map (0 = background) at one pose.
Image synthetic_depth(const SyntheticSpec& spec, const SE3Pose& pose,
                      double time);
Image synthetic_objects(const SyntheticSpec& spec, const SE3Pose& pose,
                        double time);

// Renders the whole sequence into a dataset directory: rgb/ and depth/ PNGs,
// depth32/ + flow/ + objects/ float rasters, camera.txt, rgb.txt, depth.txt,
// groundtruth.txt, groundtruth_end.txt, exposure.txt and tracks.txt. Track
// ids encode their mover as id * 1000 + point index. Deterministic: the same
// spec always produces byte-identical files.
void write_synthetic_dataset(const SyntheticSpec& spec, const std::string& root);

}  // namespace splat4d
