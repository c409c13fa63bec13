#pragma once

#include <Eigen/Dense>
#include <vector>

#include "splat4d/camera.hpp"
#include "splat4d/se3.hpp"

namespace splat4d {

// Bundle adjustment runs on a coarse pixel grid: one variable per stride x
// stride cell, sampled at the cell center. The image must be at least one
// stride wide in each direction.
int dba_grid_dim(int size, int stride);
Vec2 dba_grid_center(int gx, int gy, int stride);

struct Correspondences {
  std::vector<Vec2> pixels;    // where each grid pixel of frame i lands in frame j
  std::vector<uint8_t> valid;  // 0 when the point leaves the frustum
};

// Reprojects frame i's grid (given its inverse depths) into frame j. Both
// poses are camera-to-world.
Correspondences induced_correspondences(const PinholeCamera& camera,
                                        const SE3Pose& cam_to_world_i,
                                        const SE3Pose& cam_to_world_j,
                                        const Eigen::VectorXd& inv_depth_i,
                                        int stride);

// Mean displacement of the valid grid pixels between the two views; the
// keyframe policy triggers on this.
double mean_induced_flow(const PinholeCamera& camera,
                         const SE3Pose& cam_to_world_i,
                         const SE3Pose& cam_to_world_j,
                         const Eigen::VectorXd& inv_depth_i, int stride);

// One directed observation set: frame i's grid pixels matched into frame j.
// confidence is the measurement variance scale per grid pixel; entries <= 0
// drop the pixel from this edge.
struct DbaEdge {
  int i = 0;
  int j = 0;
  std::vector<Vec2> target;
  std::vector<double> confidence;
};

// Windowed dense bundle adjustment state. poses are camera-to-world; the
// first pose is the gauge anchor and never moves. beta_sq holds the per-grid-
// pixel variance of each frame (empty means 1 everywhere): every residual
// that reads a pixel of frame i is down-weighted by 1 / beta_sq_i[pixel], so
// scaling all variances by a constant leaves the damped update unchanged.
struct DbaProblem {
  PinholeCamera camera;
  int stride = 4;
  std::vector<SE3Pose> poses;
  std::vector<Eigen::VectorXd> inv_depth;
  std::vector<Eigen::VectorXd> depth_prior;  // inverse depth; <= 0 entries skipped
  std::vector<Eigen::VectorXd> beta_sq;
  std::vector<DbaEdge> edges;
};

struct DbaOptions {
  int max_iterations = 50;
  double pose_tolerance = 1e-6;  // stop when the largest pose update is below
  double damping = 1e-4;         // multiplies diag(H)
  double depth_prior_weight = 1.0;
  double min_inv_depth = 1e-6;
};

struct DbaReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
};

// Damped Gauss-Newton over poses and inverse depths with the depth block
// eliminated by its Schur complement. Updates the problem in place.
DbaReport dba_solve(DbaProblem& problem, const DbaOptions& options);

}  // namespace splat4d
