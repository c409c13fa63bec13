#pragma once

#include <string>
#include <vector>

#include "splat4d/gaussian.hpp"
#include "splat4d/se3.hpp"

namespace splat4d {

// One motion node: a rigid trajectory sampled on the shared timestamp grid,
// an opacity-weight curve on the same grid, and a support radius.
struct ScaffoldNode {
  std::vector<SE3Pose> poses;            // local frame -> world, per timestamp
  std::vector<double> opacity_weights;   // pre-sigmoid, per timestamp
  double radius = 0.1;
};

// Sparse deformation graph shared by all dynamic splats.
struct Scaffold {
  std::vector<double> timestamps;  // sorted, strictly increasing
  std::vector<ScaffoldNode> nodes;

  bool empty() const { return nodes.empty(); }
  int node_count() const { return static_cast<int>(nodes.size()); }
  int sample_count() const { return static_cast<int>(timestamps.size()); }

  // Index of t on the grid (within 1e-9); throws Error if absent.
  int exact_time_index(double t) const;

  // Pose at arbitrary t: exact sample on the grid, geodesic interpolation
  // between brackets, clamped outside the range.
  SE3Pose node_pose(int node, double t) const;
  double node_opacity_weight(int node, double t) const;  // linear interp

  // Indices of the k nearest other nodes by position at a grid sample
  // (used by the spatial-consistency regularizer).
  std::vector<std::vector<int>> node_neighbors(int k, int time_index) const;
};

// Fixed association between one splat and its nearby nodes, created once at
// the splat's reference time. Weights follow exp(-d^2 / (2 r_i^2)) against
// node positions at that time and stay constant afterwards.
struct GaussianBinding {
  std::vector<int> nodes;
  std::vector<double> weights;  // unnormalized
  double ref_time = 0.0;
};

GaussianBinding bind_gaussian(const Scaffold& s, const Vec3& center_world,
                              double ref_time, int knn);

// Blended rigid motion carrying the splat's reference-time state to time t.
// At t == ref_time this is the identity.
SE3Pose deform_transform(const Scaffold& s, const GaussianBinding& b, double t);

// Sum of binding weights times the nodes' opacity-weight curves at t
// (deliberately unnormalized).
double opacity_weight(const Scaffold& s, const GaussianBinding& b, double t);

// Gradients of a loss through deform_transform, given adjoints of the output
// pose (d_rotation over the quaternion, d_translation over the vector).
// Both t and ref_time must lie on the grid.
struct DeformGrad {
  std::vector<Vec6> node_at_t;    // per bound node, twist gradient at index of t
  std::vector<Vec6> node_at_ref;  // per bound node, twist gradient at ref index
};
DeformGrad deform_backward(const Scaffold& s, const GaussianBinding& b, double t,
                           const Vec4& d_rotation, const Vec3& d_translation);

// Parameters for building a scaffold from lifted point tracks.
struct ScaffoldBuildParams {
  int node_count = 64;
  int radius_neighbor = 3;      // radius = scale * distance to this nearest node
  double radius_scale = 1.0;
  double min_radius = 1e-3;
  double opacity_weight_init = 3.0;
  int reference_index = 0;      // timestamp used for sampling and radii
};

// Build nodes from M tracks of world positions over the grid. Invisible
// samples are filled by interpolating (or clamping to) the visible ones.
// Node subset chosen by farthest-point sampling at the reference index.
// Throws NoTracks when no track has a visible sample.
Scaffold init_scaffold_from_points(const std::vector<double>& timestamps,
                                   const std::vector<std::vector<Vec3>>& positions,
                                   const std::vector<std::vector<uint8_t>>& visible,
                                   const ScaffoldBuildParams& params);

// Plain-text serialization; doubles are written with enough digits to
// round-trip exactly.
void save_scaffold(const std::string& path, const Scaffold& s);
Scaffold load_scaffold(const std::string& path);

}  // namespace splat4d
