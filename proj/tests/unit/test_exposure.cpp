#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <random>

#include "splat4d/exposure.hpp"
#include "support/oracles.hpp"

using namespace splat4d;

namespace {

PinholeCamera test_camera(int w, int h)
{
    PinholeCamera cam;
    cam.width = w;
    cam.height = h;
    cam.fx = cam.fy = 0.8 * w;
    cam.cx = w / 2.0;
    cam.cy = h / 2.0;
    return cam;
}

std::vector<PosedGaussian> random_scene(std::mt19937& rng, int n,
                                        const PinholeCamera& cam,
                                        double opacity_lo, double opacity_hi)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nrm(0.0, 1.0);
    std::vector<PosedGaussian> scene(n);
    for (PosedGaussian& g : scene) {
        const double z = 1.5 + 2.0 * u(rng);
        const double x = (u(rng) * cam.width - cam.cx) / cam.fx * z;
        const double y = (u(rng) * cam.height - cam.cy) / cam.fy * z;
        g.center = Vec3(x, y, z);
        g.rotation = Vec4(nrm(rng), nrm(rng), nrm(rng), nrm(rng));
        const double base = std::log(0.08 + 0.12 * u(rng));
        g.log_scale = Vec3(base + 0.1 * nrm(rng), base + 0.1 * nrm(rng),
                           base + 0.1 * nrm(rng));
        g.opacity = opacity_lo + (opacity_hi - opacity_lo) * u(rng);
        g.color = Vec3(u(rng), u(rng), u(rng));
    }
    return scene;
}

bool images_identical(const Image& a, const Image& b)
{
    return a.same_shape(b) &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

SE3Pose pose_with_relative(const SE3Pose& start, double angle, double dist)
{
    SE3Pose rel;
    rel.rotation = quat_from_axis_angle(Vec3(0.3, -0.5, 0.81).normalized() * angle);
    rel.translation = Vec3(0.6, -0.64, 0.48).normalized() * dist;
    return start * rel;
}

double rel_err(double a, double f)
{
    const double m = std::max(std::abs(a), std::abs(f));
    return m < 1e-7 ? 0.0 : std::abs(a - f) / m;
}

}  // namespace

TEST_CASE("sample count follows the per-step motion rule")
{
    std::mt19937 rng(401);
    ExposureParams p;  // 1e-3 rad / 1e-3 m per sample, at most 16
    const SE3Pose start = oracles::random_pose(rng, 0.4, 1.0);

    CHECK(exposure_sample_count(start, start, p) == 1);
    CHECK(exposure_sample_count(start, pose_with_relative(start, 4.5e-3, 0.0), p) == 5);
    CHECK(exposure_sample_count(start, pose_with_relative(start, 0.0, 7.3e-3), p) == 8);
    CHECK(exposure_sample_count(start, pose_with_relative(start, 2.2e-3, 6.4e-3), p) == 7);
    CHECK(exposure_sample_count(start, pose_with_relative(start, 0.5, 0.2), p) == 16);
    CHECK(exposure_sample_count(start, pose_with_relative(start, 1e-7, 0.0), p) == 1);
}

TEST_CASE("sample poses run uniformly from start to end")
{
    std::mt19937 rng(409);
    const SE3Pose start = oracles::random_pose(rng, 0.5, 1.0);
    const SE3Pose end = pose_with_relative(start, 8e-3, 5e-3);
    const int n = 5;
    std::vector<SE3Pose> poses = exposure_sample_poses(start, end, n);
    REQUIRE(poses.size() == 5);
    CHECK((oracles::pose_matrix(poses[0]) - oracles::pose_matrix(start)).norm() == 0.0);
    CHECK((oracles::pose_matrix(poses[4]) - oracles::pose_matrix(end)).norm() < 1e-12);
    for (int k = 0; k < n; ++k) {
        const SE3Pose want = start * interpolate_pose(start, end, k / double(n - 1));
        CHECK((oracles::pose_matrix(poses[k]) - oracles::pose_matrix(want)).norm() <
              1e-12);
    }
}

TEST_CASE("a static exposure reproduces the plain render bit for bit")
{
    std::mt19937 rng(419);
    const PinholeCamera cam = test_camera(48, 36);
    std::vector<PosedGaussian> scene = random_scene(rng, 24, cam, 0.1, 0.8);
    const SE3Pose pose = oracles::random_pose(rng, 0.1, 0.1);
    const Vec3 bg(0.25, 0.2, 0.3);

    RenderOutput plain = render(scene, cam, pose, bg);
    ExposureRender blurred =
        render_exposure(scene, cam, pose, pose, 0.0, 0.0, bg, ExposureParams{});

    CHECK(blurred.sample_count == 1);
    CHECK(images_identical(blurred.color, plain.color));
    CHECK(images_identical(blurred.depth, plain.depth));
    CHECK(images_identical(blurred.alpha, plain.alpha));
}

TEST_CASE("depth always comes from the shutter-open pose")
{
    std::mt19937 rng(421);
    const PinholeCamera cam = test_camera(32, 32);
    std::vector<PosedGaussian> scene = random_scene(rng, 20, cam, 0.1, 0.7);
    const SE3Pose start = oracles::random_pose(rng, 0.05, 0.05);
    const SE3Pose end = pose_with_relative(start, 6e-3, 4e-3);
    const Vec3 bg(0.1, 0.1, 0.1);

    ExposureRender blurred =
        render_exposure(scene, cam, start, end, 0.2, -0.05, bg, ExposureParams{});
    RenderOutput at_start = render(scene, cam, start, bg);
    CHECK(blurred.sample_count > 1);
    CHECK(images_identical(blurred.depth, at_start.depth));
    CHECK(images_identical(blurred.alpha, at_start.alpha));
}

TEST_CASE("the sampled average approaches the dense motion integral")
{
    std::mt19937 rng(431);
    const PinholeCamera cam = test_camera(32, 32);
    std::vector<PosedGaussian> scene = random_scene(rng, 18, cam, 0.2, 0.7);
    const SE3Pose start = oracles::random_pose(rng, 0.02, 0.02);
    const SE3Pose end = pose_with_relative(start, 0.02, 0.06);  // ~1px of blur
    const Vec3 bg(0.3, 0.3, 0.3);

    auto dense_mean = [&](int samples) {
        Image acc(cam.width, cam.height, 3);
        for (int k = 0; k < samples; ++k) {
            const SE3Pose p =
                start * interpolate_pose(start, end, k / double(samples - 1));
            RenderOutput r = render(scene, cam, p, bg);
            for (size_t i = 0; i < acc.size(); ++i)
                acc.storage()[i] += r.color.storage()[i];
        }
        for (double& v : acc.storage()) v /= samples;
        return acc;
    };

    const Image fine = dense_mean(1001);
    ExposureRender blurred =
        render_exposure(scene, cam, start, end, 0.0, 0.0, bg, ExposureParams{});
    CHECK(blurred.sample_count == 16);

    double err_model = 0.0, err_single = 0.0;
    RenderOutput single = render(scene, cam, start, bg);
    for (size_t i = 0; i < fine.size(); ++i) {
        err_model = std::max(err_model,
                             std::abs(blurred.color.storage()[i] - fine.storage()[i]));
        err_single = std::max(err_single,
                              std::abs(single.color.storage()[i] - fine.storage()[i]));
    }
    CHECK(err_model < 1e-3);
    CHECK(err_single > 10.0 * err_model);  // the blur model has to matter
}

TEST_CASE("exposure gradients match finite differences")
{
    std::mt19937 rng(433);
    const PinholeCamera cam = test_camera(24, 24);
    std::vector<PosedGaussian> scene = random_scene(rng, 6, cam, 0.15, 0.45);
    const SE3Pose start = oracles::random_pose(rng, 0.05, 0.05);
    const SE3Pose end = pose_with_relative(start, 2.5e-3, 3.5e-3);
    const double log_gain = 0.1, offset = 0.05;
    const Vec3 bg(0.2, 0.25, 0.3);
    const ExposureParams params;

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Image w_color(cam.width, cam.height, 3), w_depth(cam.width, cam.height, 1);
    for (double& v : w_color.storage()) v = u(rng);
    for (double& v : w_depth.storage()) v = u(rng);

    auto loss = [&](const std::vector<PosedGaussian>& g, const SE3Pose& s,
                    const SE3Pose& e, double a, double b) {
        ExposureRender r = render_exposure(g, cam, s, e, a, b, bg, params);
        double acc = 0.0;
        for (size_t i = 0; i < r.color.size(); ++i)
            acc += w_color.storage()[i] * r.color.storage()[i];
        for (size_t i = 0; i < r.depth.size(); ++i)
            acc += w_depth.storage()[i] * r.depth.storage()[i];
        return acc;
    };

    ExposureCache cache;
    render_exposure(scene, cam, start, end, log_gain, offset, bg, params, &cache);
    REQUIRE(cache.samples.size() == 4);
    ExposureGrads grads =
        render_exposure_backward(scene, cam, start, end, log_gain, offset, bg,
                                 params, cache, w_color, w_depth);

    double worst = 0.0;
    auto probe = [&](double analytic, double fd) {
        worst = std::max(worst, rel_err(analytic, fd));
    };

    probe(grads.log_gain, oracles::central_diff(
                              [&](double v) { return loss(scene, start, end, v, offset); },
                              log_gain, 1e-5));
    probe(grads.offset, oracles::central_diff(
                            [&](double v) { return loss(scene, start, end, log_gain, v); },
                            offset, 1e-5));

    for (int k = 0; k < 6; ++k) {
        probe(grads.start_twist[k],
              oracles::central_diff(
                  [&](double v) {
                      Vec6 d = Vec6::Zero();
                      d[k] = v;
                      return loss(scene, se3_exp(Twist::from_coeffs(d)) * start, end,
                                  log_gain, offset);
                  },
                  0.0, 1e-6));
        probe(grads.end_twist[k],
              oracles::central_diff(
                  [&](double v) {
                      Vec6 d = Vec6::Zero();
                      d[k] = v;
                      return loss(scene, start, se3_exp(Twist::from_coeffs(d)) * end,
                                  log_gain, offset);
                  },
                  0.0, 1e-6));
    }

    std::uniform_int_distribution<int> pick(0, static_cast<int>(scene.size()) - 1);
    for (int probe_i = 0; probe_i < 6; ++probe_i) {
        const int g = pick(rng);
        const int d = probe_i % 3;
        auto fd_param = [&](double* slot, double h) {
            const ptrdiff_t byte_off = reinterpret_cast<const char*>(slot) -
                                       reinterpret_cast<const char*>(scene.data());
            return oracles::central_diff(
                [&](double v) {
                    std::vector<PosedGaussian> s2 = scene;
                    *reinterpret_cast<double*>(
                        reinterpret_cast<char*>(s2.data()) + byte_off) = v;
                    return loss(s2, start, end, log_gain, offset);
                },
                *slot, h);
        };
        probe(grads.gaussians[g].center[d],
              fd_param(&scene[g].center[d], 1e-6));
        probe(grads.gaussians[g].color[d], fd_param(&scene[g].color[d], 1e-6));
        probe(grads.gaussians[g].opacity, fd_param(&scene[g].opacity, 1e-6));
        probe(grads.gaussians[g].log_scale[d],
              fd_param(&scene[g].log_scale[d], 1e-6));
        probe(grads.gaussians[g].rotation[d],
              fd_param(&scene[g].rotation[d], 1e-6));
    }

    CHECK(worst < 1e-3);
}

TEST_CASE("a stale cache is rejected")
{
    std::mt19937 rng(439);
    const PinholeCamera cam = test_camera(16, 16);
    std::vector<PosedGaussian> scene = random_scene(rng, 4, cam, 0.2, 0.5);
    const SE3Pose start = oracles::random_pose(rng, 0.02, 0.02);
    const SE3Pose end = pose_with_relative(start, 3e-3, 2e-3);
    Image d_color(cam.width, cam.height, 3);

    ExposureCache cache;
    render_exposure(scene, cam, start, end, 0.0, 0.0, Vec3::Zero(),
                    ExposureParams{}, &cache);
    const SE3Pose far = pose_with_relative(start, 1e-2, 9e-3);
    CHECK_THROWS_AS(render_exposure_backward(scene, cam, start, far, 0.0, 0.0,
                                             Vec3::Zero(), ExposureParams{}, cache,
                                             d_color, Image{}),
                    MissingForwardCache);
    CHECK_THROWS_AS(render_exposure_backward(scene, cam, start, end, 0.0, 0.0,
                                             Vec3::Zero(), ExposureParams{},
                                             ExposureCache{}, d_color, Image{}),
                    MissingForwardCache);
}
