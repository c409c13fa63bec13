#pragma once

#include <Eigen/Core>

#include "splat4d/se3.hpp"

namespace splat4d {

using Vec2 = Eigen::Vector2d;

// Pinhole intrinsics. Pixel (x, y) covers [x, x+1) x [y, y+1); its center is
// at (x + 0.5, y + 0.5) in projection coordinates.
struct PinholeCamera {
  int width = 0;
  int height = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  Vec2 project(const Vec3& p_cam) const {
    return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
  }

  Vec3 unproject(double u, double v, double depth) const {
    return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
  }
};

}  // namespace splat4d
