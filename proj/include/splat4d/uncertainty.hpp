#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "splat4d/image.hpp"

namespace splat4d {

// Per-pixel descriptor fed to the uncertainty head, one column per pixel:
//   0-2   observed rgb
//   3-5   5x5 local mean of the observed rgb
//   6-8   5x5 local standard deviation of the observed rgb
//   9-11  normalized x, normalized y, radial distance from the image center
//   12-14 per-channel absolute photometric residual
constexpr int kUncertaintyFeatureDim = 15;
constexpr int kUncertaintyHidden = 32;
constexpr double kUncertaintyFloor = 0.1;  // lower bound on predicted beta^2

Eigen::MatrixXd extract_uncertainty_features(const Image& observed,
                                             const Image& rendered);

// Mean over channels of the squared photometric error, one entry per pixel in
// row-major order (matches the feature columns).
Eigen::VectorXd photometric_residuals(const Image& rendered,
                                      const Image& observed);

struct NetTensors {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
  static NetTensors zeros();
};

// Tiny MLP mapping the 15-d features to a per-pixel variance estimate
// beta^2 = softplus(out) + kUncertaintyFloor. Trained with Adam against
// residual/beta^2 + reg_weight * log(beta^2), whose optimum puts beta^2 at
// residual / reg_weight.
class UncertaintyNet {
 public:
  NetTensors params;

  explicit UncertaintyNet(uint64_t seed = 7);

  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;

  // Mean loss over the columns; fills grads (same shapes as params) when given.
  double loss_with_gradients(const Eigen::MatrixXd& features,
                             const Eigen::VectorXd& residuals, double reg_weight,
                             NetTensors* grads) const;

  // One Adam update. Returns the pre-step loss.
  double train_step(const Eigen::MatrixXd& features,
                    const Eigen::VectorXd& residuals, double reg_weight,
                    double learning_rate);

  void save(const std::string& path) const;
  static UncertaintyNet load(const std::string& path);

 private:
  NetTensors m_, v_;
  long step_ = 0;
};

// beta^2 for every pixel of the frame as an H x W x 1 image.
Image uncertainty_map(const UncertaintyNet& net, const Image& observed,
                      const Image& rendered);

// Pixels whose predicted variance exceeds the threshold.
BinaryMask threshold_uncertainty(const Image& beta_sq, double threshold);

// |candidate AND reference| / |candidate|; 0 for an empty candidate.
double mask_overlap_ratio(const BinaryMask& candidate, const BinaryMask& reference);

// Union of the seed mask with every candidate that overlaps it by more than
// overlap_threshold of the candidate's own area.
BinaryMask refine_uncertainty_mask(const BinaryMask& seed,
                                   const std::vector<BinaryMask>& candidates,
                                   double overlap_threshold);

// Deterministic farthest-point sampling of pixel coordinates inside the mask;
// seeds segmentation prompts. Returns at most count points (fewer if the mask
// is smaller), starting from the pixel nearest the mask centroid.
std::vector<std::pair<int, int>> farthest_point_prompts(const BinaryMask& mask,
                                                        int count);

}  // namespace splat4d
