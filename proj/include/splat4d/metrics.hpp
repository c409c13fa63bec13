#pragma once

#include <utility>
#include <vector>

#include "splat4d/image.hpp"
#include "splat4d/se3.hpp"

namespace splat4d {

// Peak signal-to-noise ratio in dB for unit-range images; +inf when equal.
// The masked variant pools squared error over mask pixels only (all
// channels); it throws EmptyMask when nothing is selected.
double psnr(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b, const BinaryMask& mask);

// Mean structural similarity (1 - 2 * mean structural dissimilarity), pooled
// over the whole image or over mask pixels.
double ssim_mean(const Image& a, const Image& b);
double ssim_mean(const Image& a, const Image& b, const BinaryMask& mask);

struct TrajectoryPose {
  double time = 0.0;
  SE3Pose pose;  // camera to world
};

using Trajectory = std::vector<TrajectoryPose>;

// Greedy nearest-timestamp pairing within max_time_diff; each pose is used at
// most once. Returns (estimate index, reference index) pairs ordered by
// estimate index.
std::vector<std::pair<size_t, size_t>> associate_trajectories(
    const Trajectory& estimate, const Trajectory& reference,
    double max_time_diff = 0.02);

// Absolute trajectory error: closed-form rigid alignment (no scale) of the
// associated positions, then the RMSE of what remains. Throws
// InsufficientPoses with fewer than 3 pairs.
double ate_rmse(const Trajectory& estimate, const Trajectory& reference,
                double max_time_diff = 0.02);

}  // namespace splat4d
