#pragma once

#include <functional>
#include <vector>

#include "splat4d/exposure.hpp"
#include "splat4d/scaffold.hpp"
#include "splat4d/uncertainty.hpp"

namespace splat4d {

// One mapped frame: observation, exposure interval, response, and the masks
// the uncertainty stage attaches to it. Poses are camera-to-world.
struct Keyframe {
  int index = 0;
  double time = 0.0;
  Image color;
  Image depth;  // metres, 0 = invalid; may be empty
  SE3Pose cam_to_world;      // shutter open
  SE3Pose cam_to_world_end;  // shutter close (equal when unknown)
  double log_gain = 0.0;
  double offset = 0.0;
  BinaryMask mask_uncertain;  // variance threshold
  BinaryMask mask_refined;    // after segment merging
};

// Everything the mapping optimizer touches.
struct MapperScene {
  PinholeCamera camera;
  std::vector<Gaussian> gaussians;
  std::vector<GaussianBinding> bindings;  // parallel; empty = static splat
  Scaffold scaffold;
  UncertaintyNet uncertainty{7};
  std::vector<Keyframe> keyframes;
};

struct MappingConfig {
  // learning rates
  double lr_center = 1e-3;
  double lr_rotation = 1e-3;
  double lr_log_scale = 2e-3;
  double lr_opacity = 2.5e-2;
  double lr_color = 5e-3;
  double lr_node_pose = 1e-3;
  double lr_opacity_weight = 2.5e-2;
  double lr_exposure = 1e-3;
  double lr_pose = 1e-4;
  double lr_uncertainty = 1e-2;

  // loss weights
  double lambda_dssim = 0.2;
  double lambda_depth = 0.5;
  double uncertainty_reg = 0.02;  // predicted variance settles at residual/this
  double lambda_speed = 0.1;
  double lambda_accel = 0.1;
  double lambda_rigid = 0.1;
  double lambda_weight_similarity = 0.1;

  // uncertainty masks
  double delta_u = 3.5;   // variance threshold for the seed mask
  double delta_ru = 0.2;  // candidate overlap needed to merge a segment
  int mask_prompts = 8;

  // toggles
  bool enable_ir = true;
  bool enable_aow = true;
  bool enable_rum = true;
  bool refine_poses = false;     // shutter-open poses (usually pinned by tracking)
  bool refine_pose_end = true;   // shutter-close poses; only matter with IR on
  bool train_uncertainty = true; // off = frozen predictor (dynamic phase)

  // scaffold
  int binding_neighbors = 4;
  int regularizer_neighbors = 4;
  double opacity_weight_init = 3.0;
  double opacity_weight_frozen = 20.0;  // used when adaptive weighting is off

  // densification
  int densify_interval = 0;  // 0 disables
  double densify_grad_threshold = 5e-5;
  double densify_split_scale = 0.05;  // world-space scale above which to split
  double prune_opacity = 0.02;
  size_t max_gaussians = 200000;

  Vec3 background = Vec3::Zero();
  ExposureParams exposure;
};

// The scene as the rasterizer sees it at a given time. In the static phase
// (or for unbound splats) the deformation is the identity and the opacity is
// the plain sigmoid of the logit; bound splats are carried by their blended
// node motion and modulated by sigmoid(opacity weight).
std::vector<PosedGaussian> posed_at_time(const MapperScene& scene,
                                         const MappingConfig& config, double time,
                                         bool dynamic_phase);

// Per-pixel data-term weights for one keyframe: 1 / beta^2 from the
// uncertainty head, overridden to 1 inside the refined mask (the seed mask
// when refinement is off) so modelled dynamics keep full supervision.
Image mapping_pixel_weights(const MapperScene& scene, const MappingConfig& config,
                            size_t kf, const Image& rendered_color,
                            bool dynamic_phase);

struct SceneGrads {
  struct SplatGrad {
    Vec3 center = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    Vec3 color = Vec3::Zero();
  };
  std::vector<SplatGrad> splats;
  std::vector<std::vector<Vec6>> node_pose;     // [node][time], left-perturbation
  std::vector<std::vector<double>> node_weight;  // [node][time]
  Vec6 kf_pose_start = Vec6::Zero();  // right-perturbation on cam-to-world
  Vec6 kf_pose_end = Vec6::Zero();
  double log_gain = 0.0;
  double offset = 0.0;
};

// Loss of one keyframe (photometric + depth, weighted per pixel, plus the
// scaffold regularizers) and its gradients for every parameter group. The
// weight image is treated as a constant. out_rendered receives the exposed
// color render when non-null.
double scene_loss_and_gradients(const MapperScene& scene,
                                const MappingConfig& config, size_t kf,
                                bool dynamic_phase, const Image& pixel_weights,
                                SceneGrads* grads, Image* out_rendered = nullptr);

// Returns candidate object masks for the prompts sampled inside a keyframe's
// uncertainty mask (a plug for the segmentation front end).
using MaskProvider = std::function<std::vector<BinaryMask>(
    size_t kf_index, const std::vector<std::pair<int, int>>& prompts)>;

// Renders every keyframe, thresholds the predicted variance, and attaches the
// seed and refined masks. With refinement disabled the refined mask equals
// the seed mask.
void update_uncertainty_masks(MapperScene& scene, const MappingConfig& config,
                              bool dynamic_phase, const MaskProvider& provider);

// Backprojects every stride-th pixel with valid depth into world space (using
// the shutter-open pose). With restrict_to, only pixels inside the mask seed
// splats. Colors come from the observation; scales from the pixel footprint.
std::vector<Gaussian> seed_gaussians_from_rgbd(const Keyframe& kf,
                                               const PinholeCamera& camera,
                                               int stride, double opacity_logit,
                                               const BinaryMask* restrict_to = nullptr);

struct MappingTelemetry {
  std::vector<double> loss_history;  // one entry per iteration
  size_t densified = 0;
  size_t pruned = 0;
};

// Round-robin Adam optimization over the keyframes; trains the uncertainty
// head alongside and (when enabled) densifies and prunes the splat set.
MappingTelemetry run_mapping(MapperScene& scene, const MappingConfig& config,
                             bool dynamic_phase, int iterations);

}  // namespace splat4d
