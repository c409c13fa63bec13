#pragma once

// Independent reference implementations used as test oracles. These must not
// share code paths with the library implementations they check.

#include <Eigen/Core>
#include <functional>
#include <random>

#include "splat4d/se3.hpp"

namespace oracles {

// 4x4 matrix exponential of an se(3) twist via scaling and squaring with a
// truncated Taylor series.
Eigen::Matrix4d matrix_exp_se3(const splat4d::Twist& xi);

// Homogeneous matrix of a pose (for comparisons against matrix_exp_se3).
Eigen::Matrix4d pose_matrix(const splat4d::SE3Pose& T);

// Central finite difference of a scalar function.
double central_diff(const std::function<double(double)>& f, double x0, double step);

// Random pose with rotation angle below max_angle and translation entries in
// [-max_trans, max_trans].
splat4d::SE3Pose random_pose(std::mt19937& rng, double max_angle, double max_trans);

}  // namespace oracles
