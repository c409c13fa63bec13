#pragma once

#include <vector>

#include "splat4d/rasterizer.hpp"

namespace splat4d {

// Controls how densely the exposure interval is sampled. One render sample is
// taken per rotation_step radians (or translation_step metres) of relative
// motion between the shutter-open and shutter-close poses, bounded by
// max_samples to keep the cost of fast frames in check.
struct ExposureParams {
  double rotation_step = 1e-3;
  double translation_step = 1e-3;
  int max_samples = 16;
};

int exposure_sample_count(const SE3Pose& start, const SE3Pose& end,
                          const ExposureParams& params);

// Poses spaced uniformly along the twist from start to end (both inclusive
// when n > 1; just the start pose when n == 1).
std::vector<SE3Pose> exposure_sample_poses(const SE3Pose& start,
                                           const SE3Pose& end, int n);

struct ExposureRender {
  Image color;  // exp(log_gain) * mean of the sample renders + offset
  Image depth;  // rendered at the shutter-open pose
  Image alpha;  // rendered at the shutter-open pose
  int sample_count = 0;
};

struct ExposureCache {
  std::vector<SE3Pose> poses;
  std::vector<RenderCache> samples;
  Image mean_color;
};

struct ExposureGrads {
  std::vector<PosedGaussianGrad> gaussians;
  Vec6 start_twist = Vec6::Zero();  // left perturbation of the start pose
  Vec6 end_twist = Vec6::Zero();
  double log_gain = 0.0;
  double offset = 0.0;
};

// Motion-blur-aware render: the camera sweep from start to end is averaged
// over exposure_sample_count poses, then mapped through the per-frame affine
// response exp(log_gain) * I + offset. Depth and alpha come from the start
// pose alone. Both poses are world-to-camera.
ExposureRender render_exposure(const std::vector<PosedGaussian>& gaussians,
                               const PinholeCamera& camera, const SE3Pose& start,
                               const SE3Pose& end, double log_gain,
                               double offset, const Vec3& background,
                               const ExposureParams& params,
                               ExposureCache* cache = nullptr);

// Gradients of sum(d_color . color) + sum(d_depth . depth). The pose twists
// follow the renderer convention (left perturbation on world-to-camera);
// d_depth may be empty.
ExposureGrads render_exposure_backward(
    const std::vector<PosedGaussian>& gaussians, const PinholeCamera& camera,
    const SE3Pose& start, const SE3Pose& end, double log_gain, double offset,
    const Vec3& background, const ExposureParams& params,
    const ExposureCache& cache, const Image& d_color, const Image& d_depth);

}  // namespace splat4d
