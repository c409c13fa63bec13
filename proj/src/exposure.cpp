#include "splat4d/exposure.hpp"

#include <algorithm>
#include <cmath>

#include "splat4d/errors.hpp"

namespace splat4d {

int exposure_sample_count(const SE3Pose& start, const SE3Pose& end,
                          const ExposureParams& params)
{
    const SE3Pose rel = start.inverse() * end;
    const double angle = rel.rotation_angle();
    const double dist = rel.translation.norm();
    const double by_rot = std::ceil(angle / params.rotation_step);
    const double by_trans = std::ceil(dist / params.translation_step);
    const int n = static_cast<int>(std::max(by_rot, by_trans));
    return std::clamp(n, 1, params.max_samples);
}

std::vector<SE3Pose> exposure_sample_poses(const SE3Pose& start,
                                           const SE3Pose& end, int n)
{
    if (n < 1) throw Error("exposure sample count must be positive");
    std::vector<SE3Pose> poses;
    poses.reserve(static_cast<size_t>(n));
    poses.push_back(start);
    if (n == 1) return poses;
    const Twist xi = se3_log(start.inverse() * end);
    for (int k = 1; k < n; ++k) {
        const double f = static_cast<double>(k) / static_cast<double>(n - 1);
        poses.push_back(start * se3_exp(xi.scaled(f)));
    }
    return poses;
}

ExposureRender render_exposure(const std::vector<PosedGaussian>& gaussians,
                               const PinholeCamera& camera, const SE3Pose& start,
                               const SE3Pose& end, double log_gain,
                               double offset, const Vec3& background,
                               const ExposureParams& params,
                               ExposureCache* cache)
{
    const int n = exposure_sample_count(start, end, params);
    std::vector<SE3Pose> poses = exposure_sample_poses(start, end, n);

    if (cache) {
        cache->poses = poses;
        cache->samples.assign(static_cast<size_t>(n), RenderCache{});
    }

    ExposureRender out;
    out.sample_count = n;

    Image acc;
    for (int k = 0; k < n; ++k) {
        RenderCache* sample_cache = cache ? &cache->samples[static_cast<size_t>(k)] : nullptr;
        RenderOutput r = render(gaussians, camera, poses[static_cast<size_t>(k)],
                                background, sample_cache);
        if (k == 0) {
            acc = std::move(r.color);
            out.depth = std::move(r.depth);
            out.alpha = std::move(r.alpha);
        } else {
            for (size_t i = 0; i < acc.size(); ++i)
                acc.storage()[i] += r.color.storage()[i];
        }
    }
    if (n > 1) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (double& v : acc.storage()) v *= inv_n;
    }

    out.color = Image(camera.width, camera.height, 3);
    const double gain = std::exp(log_gain);
    for (size_t i = 0; i < acc.size(); ++i)
        out.color.storage()[i] = gain * acc.storage()[i] + offset;

    if (cache) cache->mean_color = std::move(acc);
    return out;
}

ExposureGrads render_exposure_backward(
    const std::vector<PosedGaussian>& gaussians, const PinholeCamera& camera,
    const SE3Pose& start, const SE3Pose& end, double log_gain, double offset,
    const Vec3& background, const ExposureParams& params,
    const ExposureCache& cache, const Image& d_color, const Image& d_depth)
{
    (void)offset;
    const int n = static_cast<int>(cache.samples.size());
    if (n < 1 || cache.poses.size() != cache.samples.size() ||
        cache.mean_color.size() != d_color.size())
        throw MissingForwardCache("exposure cache does not match this scene");
    if (exposure_sample_count(start, end, params) != n)
        throw MissingForwardCache("exposure cache was built for different poses");

    const double gain = std::exp(log_gain);

    ExposureGrads out;
    out.gaussians.assign(gaussians.size(), PosedGaussianGrad{});
    for (size_t i = 0; i < d_color.size(); ++i) {
        out.log_gain += d_color.storage()[i] * gain * cache.mean_color.storage()[i];
        out.offset += d_color.storage()[i];
    }

    // Each sample sees gain/n of the color adjoint; depth flows only through
    // the shutter-open render.
    Image d_sample = d_color;
    const double scale = gain / static_cast<double>(n);
    for (double& v : d_sample.storage()) v *= scale;
    const Image empty;

    std::vector<Vec6> pose_grads(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        RenderGrads g = render_backward(gaussians, camera,
                                        cache.poses[static_cast<size_t>(k)],
                                        background, cache.samples[static_cast<size_t>(k)],
                                        d_sample, k == 0 ? d_depth : empty);
        pose_grads[static_cast<size_t>(k)] = g.camera_pose;
        for (size_t i = 0; i < gaussians.size(); ++i) {
            PosedGaussianGrad& acc = out.gaussians[i];
            const PosedGaussianGrad& add = g.gaussians[i];
            acc.center += add.center;
            acc.rotation += add.rotation;
            acc.log_scale += add.log_scale;
            acc.opacity += add.opacity;
            acc.color += add.color;
        }
    }

    if (n == 1) {
        out.start_twist = pose_grads[0];
        return out;
    }

    // Sample pose k is start * exp(f_k xi) with xi = log(start^-1 end). A left
    // perturbation delta_e of the end pose moves sample k by
    //   Adj(start) * f_k J_l(f_k xi) J_l^-1(xi) * Adj(start^-1) * delta_e,
    // and a start perturbation moves it by the complement, so the two twist
    // gradients always sum to the plain per-sample total.
    const Twist xi = se3_log(start.inverse() * end);
    const Mat6 adj_start_t = se3_adjoint(start).transpose();
    const Mat6 adj_start_inv_t = se3_adjoint(start.inverse()).transpose();
    const Mat6 jl_inv = se3_left_jacobian_inverse(xi);

    Vec6 sum_g = Vec6::Zero();
    Vec6 inner = Vec6::Zero();
    for (int k = 0; k < n; ++k) {
        const Vec6 g = pose_grads[static_cast<size_t>(k)];
        sum_g += g;
        if (k == 0) continue;
        const double f = static_cast<double>(k) / static_cast<double>(n - 1);
        const Mat6 m = f * se3_left_jacobian(xi.scaled(f)) * jl_inv;
        inner += m.transpose() * (adj_start_t * g);
    }
    out.end_twist = adj_start_inv_t * inner;
    out.start_twist = sum_g - out.end_twist;
    return out;
}

}  // namespace splat4d
