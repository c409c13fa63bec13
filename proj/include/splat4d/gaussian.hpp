#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "splat4d/se3.hpp"

namespace splat4d {

// One anisotropic splat. The rotation is stored as a free 4-vector and
// normalized wherever a unit quaternion is needed, scales are log-space and
// opacity is a logit, so every field can be optimized unconstrained.
struct Gaussian {
  Vec3 center = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // (w, x, y, z), not necessarily unit
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  Vec3 color = Vec3::Zero();
  int node_index = -1;       // scaffold node whose frame it was bound in; -1 = static
  double ref_time = 0.0;     // timestamp of the binding frame

  Quat unit_rotation() const { return Quat::from_coeffs(rotation).normalized(); }
  Vec3 scales() const { return log_scale.array().exp(); }
  double opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }
  Mat3 covariance() const;  // R diag(s^2) R^T
};

double logit(double p);
double sigmoid(double x);

// Binary little-endian PLY with double-precision properties; round-trips are
// bit exact.
void save_ply(const std::string& path, const std::vector<Gaussian>& cloud);
std::vector<Gaussian> load_ply(const std::string& path);

}  // namespace splat4d
