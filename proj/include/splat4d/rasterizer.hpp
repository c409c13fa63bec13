#pragma once

#include <vector>

#include "splat4d/camera.hpp"
#include "splat4d/gaussian.hpp"
#include "splat4d/image.hpp"
#include "splat4d/se3.hpp"

namespace splat4d {

using Mat2 = Eigen::Matrix2d;

// A splat as the renderer consumes it: already moved to world space for the
// frame being drawn, with its opacity fully resolved to a value.
struct PosedGaussian {
  Vec3 center = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // raw quaternion, normalized internally
  Vec3 log_scale = Vec3::Zero();
  double opacity = 0.5;              // effective value in [0, 1)
  Vec3 color = Vec3::Zero();
};

struct RenderOutput {
  Image color;  // H x W x 3, composited over the background
  Image depth;  // H x W x 1, alpha-weighted camera depth (not normalized)
  Image alpha;  // H x W x 1, 1 - final transmittance
};

// Everything the backward pass needs to replay compositing exactly.
struct RenderCache {
  struct Projected {
    bool valid = false;
    Vec3 p_cam = Vec3::Zero();
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();  // includes the low-pass floor
    Mat2 conic = Mat2::Zero();
    double z = 0.0;
    double radius = 0.0;  // 3-sigma catchment in pixels
  };
  int width = 0, height = 0;
  int tiles_x = 0, tiles_y = 0;
  std::vector<Projected> proj;
  std::vector<std::vector<int>> tile_lists;  // per tile, depth-then-index order
  std::vector<int> n_contrib;                // per pixel, composited splat count
  std::vector<double> t_final;               // per pixel, final transmittance
};

// Per-splat adjoints produced by the backward pass.
struct PosedGaussianGrad {
  Vec3 center = Vec3::Zero();
  Vec4 rotation = Vec4::Zero();
  Vec3 log_scale = Vec3::Zero();
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
};

struct RenderGrads {
  std::vector<PosedGaussianGrad> gaussians;
  Vec6 camera_pose = Vec6::Zero();  // left-perturbation twist on world_to_camera
};

// Depth-sorted tile-based alpha compositing of anisotropic splats.
// world_to_camera maps world points into the camera frame (+z forward).
// If cache is non-null it is filled for a later backward call.
RenderOutput render(const std::vector<PosedGaussian>& gaussians,
                    const PinholeCamera& camera, const SE3Pose& world_to_camera,
                    const Vec3& background, RenderCache* cache = nullptr);

// Gradients of sum(d_color . color) + sum(d_depth . depth) with respect to
// every splat parameter and the camera pose. d_depth may be empty (all-zero).
// Throws MissingForwardCache if the cache was not produced by render().
RenderGrads render_backward(const std::vector<PosedGaussian>& gaussians,
                            const PinholeCamera& camera,
                            const SE3Pose& world_to_camera, const Vec3& background,
                            const RenderCache& cache, const Image& d_color,
                            const Image& d_depth);

// Compositing constants shared with the reference implementation in the tests.
namespace raster {
constexpr double kNearClip = 0.01;
constexpr double kLowpass = 0.3;          // pixel-space covariance floor
constexpr double kPowerCutoff = -4.5;     // ~3 sigma
constexpr double kMinAlpha = 1.0 / 255.0;
constexpr double kMaxAlpha = 0.99;
constexpr double kMinTransmittance = 1e-4;
constexpr int kTileSize = 16;
}  // namespace raster

}  // namespace splat4d
