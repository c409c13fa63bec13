#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "splat4d/mapper.hpp"

using namespace splat4d;

namespace {

struct FdScene {
    MapperScene scene;
    MappingConfig config;
    Image weights;
};

// Small dynamic scene with everything switched on: three bound splats, two
// static ones, a four-node scaffold over three timestamps, one keyframe at a
// non-reference time with a short exposure interval.
FdScene make_fd_scene()
{
    FdScene f;
    MapperScene& scene = f.scene;
    scene.camera = PinholeCamera{24, 24, 35.0, 35.0, 12.0, 12.0};

    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    scene.scaffold.timestamps = {0.0, 0.5, 1.0};
    const Vec3 node_base[4] = {{-0.3, -0.25, 1.85},
                               {0.3, -0.3, 2.1},
                               {-0.25, 0.3, 2.2},
                               {0.3, 0.3, 1.9}};
    for (int k = 0; k < 4; ++k) {
        ScaffoldNode node;
        node.radius = 0.6;
        for (int m = 0; m < 3; ++m) {
            const Vec3 axis(0.03 * u(rng), 0.03 * u(rng), 0.03 * u(rng));
            const Vec3 t = node_base[k] +
                           Vec3(0.04 * u(rng), 0.04 * u(rng), 0.04 * u(rng));
            node.poses.emplace_back(quat_from_axis_angle(axis), t);
            node.opacity_weights.push_back(0.8 + 0.6 * u01(rng));
        }
        scene.scaffold.nodes.push_back(node);
    }

    const Vec3 dyn_centers[3] = {{-0.1, -0.05, 1.95},
                                 {0.15, 0.1, 2.05},
                                 {-0.05, 0.18, 2.1}};
    const Vec3 static_centers[2] = {{0.0, -0.2, 2.3}, {0.2, -0.1, 1.8}};
    for (int i = 0; i < 5; ++i) {
        Gaussian g;
        g.center = i < 3 ? dyn_centers[i] : static_centers[i - 3];
        g.rotation =
            quat_from_axis_angle(Vec3(0.4 * u(rng), 0.4 * u(rng), 0.4 * u(rng)))
                .coeffs() *
            (1.0 + 0.1 * u(rng));  // deliberately non-unit
        g.log_scale = Vec3::Constant(std::log(0.085)) +
                      Vec3(0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng));
        g.opacity_logit = -0.5 + 0.7 * u(rng);
        g.color = Vec3(0.15 + 0.7 * u01(rng), 0.15 + 0.7 * u01(rng),
                       0.15 + 0.7 * u01(rng));
        g.ref_time = 0.0;
        scene.gaussians.push_back(g);
        if (i < 3) {
            g.node_index = 0;
            scene.bindings.push_back(
                bind_gaussian(scene.scaffold, g.center, 0.0, 3));
        } else {
            scene.bindings.emplace_back();
        }
    }

    Keyframe kf;
    kf.index = 0;
    kf.time = 0.5;
    kf.color = Image(24, 24, 3);
    for (double& v : kf.color.storage()) v = 0.1 + 0.8 * u01(rng);
    kf.depth = Image(24, 24, 1);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            kf.depth.at(x, y) = x < 3 ? 0.0 : 1.9 + 0.01 * ((x + y) % 9);
    kf.cam_to_world = SE3Pose(quat_from_axis_angle({0.01, -0.02, 0.015}),
                              {0.03, -0.02, -0.04});
    kf.cam_to_world_end =
        kf.cam_to_world *
        se3_exp(Twist({1.4e-3, -0.9e-3, 1.8e-3}, {1.5e-3, 1.6e-3, -1.0e-3}));
    kf.log_gain = 0.07;
    kf.offset = 0.015;
    scene.keyframes.push_back(kf);

    f.weights = Image(24, 24, 1);
    for (double& v : f.weights.storage()) v = 0.4 + 1.2 * u01(rng);
    return f;
}

}  // namespace

TEST_CASE("scene loss gradients match finite differences across all groups")
{
    const FdScene base = make_fd_scene();
    SceneGrads grads;
    const double loss0 = scene_loss_and_gradients(base.scene, base.config, 0,
                                                  true, base.weights, &grads);
    CHECK(loss0 > 0.0);
    CHECK(grads.kf_pose_end.norm() > 0.0);  // exposure interval really sampled
    CHECK(grads.node_pose[0][1].norm() > 0.0);

    // small enough that no photometric residual straddles its L1 kink inside
    // the central-difference window
    const double eps = 1e-6;
    auto fd_grad = [&](const std::function<void(MapperScene&, double)>& mutate) {
        MapperScene sp = base.scene;
        mutate(sp, eps);
        MapperScene sm = base.scene;
        mutate(sm, -eps);
        const double lp = scene_loss_and_gradients(sp, base.config, 0, true,
                                                   base.weights, nullptr);
        const double lm = scene_loss_and_gradients(sm, base.config, 0, true,
                                                   base.weights, nullptr);
        return (lp - lm) / (2.0 * eps);
    };
    auto check_probe = [&](const std::string& name, double analytic,
                           const std::function<void(MapperScene&, double)>& mutate) {
        const double numeric = fd_grad(mutate);
        const double denom =
            std::max({std::abs(analytic), std::abs(numeric), 1e-7});
        const double rel = std::abs(analytic - numeric) / denom;
        CAPTURE(name);
        CAPTURE(analytic);
        CAPTURE(numeric);
        CHECK(rel < 1e-3);
    };

    for (size_t i : {size_t(0), size_t(3)}) {  // one bound splat, one static
        const std::string tag = "splat" + std::to_string(i);
        for (int c = 0; c < 3; ++c) {
            check_probe(tag + ".center" + std::to_string(c),
                        grads.splats[i].center[c],
                        [=](MapperScene& s, double d) { s.gaussians[i].center[c] += d; });
            check_probe(tag + ".log_scale" + std::to_string(c),
                        grads.splats[i].log_scale[c],
                        [=](MapperScene& s, double d) { s.gaussians[i].log_scale[c] += d; });
            check_probe(tag + ".color" + std::to_string(c),
                        grads.splats[i].color[c],
                        [=](MapperScene& s, double d) { s.gaussians[i].color[c] += d; });
        }
        for (int c = 0; c < 4; ++c)
            check_probe(tag + ".rotation" + std::to_string(c),
                        grads.splats[i].rotation[c],
                        [=](MapperScene& s, double d) { s.gaussians[i].rotation[c] += d; });
        check_probe(tag + ".opacity_logit", grads.splats[i].opacity_logit,
                    [=](MapperScene& s, double d) { s.gaussians[i].opacity_logit += d; });
    }

    auto node_mutator = [](size_t k, size_t m, int j) {
        return [=](MapperScene& s, double d) {
            Vec6 e = Vec6::Zero();
            e[j] = d;
            s.scaffold.nodes[k].poses[m] =
                se3_exp(Twist::from_coeffs(e)) * s.scaffold.nodes[k].poses[m];
        };
    };
    for (int j = 0; j < 6; ++j) {
        check_probe("node0.t1." + std::to_string(j), grads.node_pose[0][1][j],
                    node_mutator(0, 1, j));
        check_probe("node0.t0." + std::to_string(j), grads.node_pose[0][0][j],
                    node_mutator(0, 0, j));
    }
    for (int j : {0, 4})
        check_probe("node2.t1." + std::to_string(j), grads.node_pose[2][1][j],
                    node_mutator(2, 1, j));

    for (size_t k : {size_t(0), size_t(1), size_t(2)})
        check_probe("node" + std::to_string(k) + ".weight.t1",
                    grads.node_weight[k][1], [=](MapperScene& s, double d) {
                        s.scaffold.nodes[k].opacity_weights[1] += d;
                    });
    // only the smoothness term touches the reference sample
    check_probe("node1.weight.t0", grads.node_weight[1][0],
                [=](MapperScene& s, double d) {
                    s.scaffold.nodes[1].opacity_weights[0] += d;
                });

    for (int j = 0; j < 6; ++j) {
        check_probe("kf.start." + std::to_string(j), grads.kf_pose_start[j],
                    [=](MapperScene& s, double d) {
                        Vec6 e = Vec6::Zero();
                        e[j] = d;
                        s.keyframes[0].cam_to_world =
                            s.keyframes[0].cam_to_world * se3_exp(Twist::from_coeffs(e));
                    });
        check_probe("kf.end." + std::to_string(j), grads.kf_pose_end[j],
                    [=](MapperScene& s, double d) {
                        Vec6 e = Vec6::Zero();
                        e[j] = d;
                        s.keyframes[0].cam_to_world_end =
                            s.keyframes[0].cam_to_world_end *
                            se3_exp(Twist::from_coeffs(e));
                    });
    }
    check_probe("kf.log_gain", grads.log_gain,
                [](MapperScene& s, double d) { s.keyframes[0].log_gain += d; });
    check_probe("kf.offset", grads.offset,
                [](MapperScene& s, double d) { s.keyframes[0].offset += d; });
}

TEST_CASE("exposure and opacity-weight toggles neutralize their controls")
{
    FdScene f = make_fd_scene();

    SUBCASE("disabled exposure matches a neutral interval exactly")
    {
        MapperScene neutral = f.scene;
        neutral.keyframes[0].cam_to_world_end = neutral.keyframes[0].cam_to_world;
        neutral.keyframes[0].log_gain = 0.0;
        neutral.keyframes[0].offset = 0.0;

        MappingConfig off = f.config;
        off.enable_ir = false;
        SceneGrads ga, gb;
        const double la = scene_loss_and_gradients(neutral, f.config, 0, true,
                                                   f.weights, &ga);
        // the disabled path must ignore whatever is stored in the keyframe
        const double lb =
            scene_loss_and_gradients(f.scene, off, 0, true, f.weights, &gb);
        CHECK(la == lb);
        CHECK(gb.kf_pose_end.norm() == 0.0);
        CHECK(gb.log_gain == 0.0);
        CHECK(gb.offset == 0.0);
        CHECK((ga.kf_pose_start - gb.kf_pose_start).norm() == 0.0);
        CHECK((ga.splats[0].center - gb.splats[0].center).norm() == 0.0);
    }

    SUBCASE("frozen opacity weighting saturates the modulation")
    {
        MappingConfig off = f.config;
        off.enable_aow = false;
        const auto posed = posed_at_time(f.scene, off, 0.5, true);
        for (size_t i = 0; i < 3; ++i) {
            const double plain = sigmoid(f.scene.gaussians[i].opacity_logit);
            CHECK(posed[i].opacity == doctest::Approx(plain).epsilon(1e-9));
        }
        SceneGrads g;
        scene_loss_and_gradients(f.scene, off, 0, true, f.weights, &g);
        for (const auto& per_node : g.node_weight)
            for (double v : per_node) CHECK(v == 0.0);
    }

    SUBCASE("deformation is the identity at the binding time")
    {
        const auto posed = posed_at_time(f.scene, f.config, 0.0, true);
        for (size_t i = 0; i < 3; ++i) {
            CHECK((posed[i].center - f.scene.gaussians[i].center).norm() <
                  1e-14);
            CHECK((posed[i].rotation.normalized() -
                   f.scene.gaussians[i].rotation.normalized())
                      .norm() < 1e-14);
        }
    }
}

TEST_CASE("pixel weights follow predicted variance outside the kept mask")
{
    FdScene f = make_fd_scene();
    Keyframe& kf = f.scene.keyframes[0];

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Image rendered(24, 24, 3);
    for (double& v : rendered.storage()) v = u01(rng);

    kf.mask_refined = BinaryMask(24, 24);
    for (int y = 6; y < 12; ++y)
        for (int x = 4; x < 10; ++x) kf.mask_refined.set(x, y, true);
    kf.mask_uncertain = BinaryMask(24, 24);
    for (int y = 2; y < 8; ++y)
        for (int x = 14; x < 20; ++x) kf.mask_uncertain.set(x, y, true);

    const Image beta_sq = uncertainty_map(f.scene.uncertainty, kf.color, rendered);

    const Image w_dyn = mapping_pixel_weights(f.scene, f.config, 0, rendered, true);
    const Image w_static =
        mapping_pixel_weights(f.scene, f.config, 0, rendered, false);
    MappingConfig no_rum = f.config;
    no_rum.enable_rum = false;
    const Image w_seed = mapping_pixel_weights(f.scene, no_rum, 0, rendered, true);

    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            const double inv_var = 1.0 / beta_sq.at(x, y);
            CHECK(w_dyn.at(x, y) ==
                  (kf.mask_refined.at(x, y) ? 1.0 : inv_var));
            CHECK(w_seed.at(x, y) ==
                  (kf.mask_uncertain.at(x, y) ? 1.0 : inv_var));
            CHECK(w_static.at(x, y) == inv_var);
        }

    // no masks attached yet -> variance weighting everywhere
    kf.mask_refined = BinaryMask();
    const Image w_none = mapping_pixel_weights(f.scene, f.config, 0, rendered, true);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            CHECK(w_none.at(x, y) == 1.0 / beta_sq.at(x, y));
}

TEST_CASE("mask update wires thresholds prompts and merging together")
{
    FdScene f = make_fd_scene();

    // expected seed mask from the same forward render
    const auto posed = posed_at_time(f.scene, f.config, 0.5, true);
    const Keyframe& kf = f.scene.keyframes[0];
    const ExposureRender er = render_exposure(
        posed, f.scene.camera, kf.cam_to_world.inverse(),
        kf.cam_to_world_end.inverse(), kf.log_gain, kf.offset,
        f.config.background, f.config.exposure);
    const Image beta_sq =
        uncertainty_map(f.scene.uncertainty, kf.color, er.color);
    double lo = beta_sq.storage()[0], hi = beta_sq.storage()[0];
    for (double v : beta_sq.storage()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    f.config.delta_u = 0.5 * (lo + hi);
    const BinaryMask seed = threshold_uncertainty(beta_sq, f.config.delta_u);
    REQUIRE(seed.count() > 0);
    REQUIRE(seed.count() < seed.raw().size());

    BinaryMask inside(24, 24), corner(24, 24);
    {
        // candidate hugging the seed -> merged; far corner blob -> rejected
        size_t taken = 0;
        for (int y = 0; y < 24 && taken < seed.count() / 2 + 1; ++y)
            for (int x = 0; x < 24 && taken < seed.count() / 2 + 1; ++x)
                if (seed.at(x, y)) {
                    inside.set(x, y, true);
                    ++taken;
                }
        // pad with one stripe next to it so overlap stays partial
        for (int x = 0; x < 4; ++x)
            for (int y = 20; y < 24; ++y) corner.set(x, y, !seed.at(x, y));
    }
    const std::vector<BinaryMask> candidates = {inside, corner};
    const BinaryMask expected_refined =
        refine_uncertainty_mask(seed, candidates, f.config.delta_ru);
    const auto expected_prompts =
        farthest_point_prompts(seed, f.config.mask_prompts);

    std::vector<std::pair<int, int>> seen_prompts;
    size_t seen_kf = 99;
    update_uncertainty_masks(f.scene, f.config, true,
                             [&](size_t kf_index, const auto& prompts) {
                                 seen_kf = kf_index;
                                 seen_prompts = prompts;
                                 return candidates;
                             });

    CHECK(seen_kf == 0);
    CHECK(seen_prompts == expected_prompts);
    CHECK(f.scene.keyframes[0].mask_uncertain.raw() == seed.raw());
    CHECK(f.scene.keyframes[0].mask_refined.raw() == expected_refined.raw());

    MappingConfig no_rum = f.config;
    no_rum.enable_rum = false;
    update_uncertainty_masks(f.scene, no_rum, true,
                             [&](size_t, const auto&) { return candidates; });
    CHECK(f.scene.keyframes[0].mask_refined.raw() ==
          f.scene.keyframes[0].mask_uncertain.raw());
}

TEST_CASE("seeding backprojects the depth lattice")
{
    PinholeCamera cam{24, 24, 30.0, 30.0, 12.0, 12.0};
    Keyframe kf;
    kf.time = 0.25;
    kf.color = Image(24, 24, 3);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            for (int c = 0; c < 3; ++c)
                kf.color.at(x, y, c) = (x + y * 24 + c * 576) / 1730.0;
    kf.depth = Image(24, 24, 1, 2.0);
    kf.depth.at(6, 2) = 0.0;  // hole on the lattice
    kf.cam_to_world = SE3Pose(Quat::identity(), Vec3(0.4, -0.2, 0.1));

    const auto all = seed_gaussians_from_rgbd(kf, cam, 4, logit(0.3));
    CHECK(all.size() == 35);  // 6x6 lattice minus the hole
    for (const Gaussian& g : all) {
        const Vec3 p_cam = kf.cam_to_world.inverse().apply(g.center);
        CHECK(p_cam.z() == doctest::Approx(2.0));
        const Vec2 px = cam.project(p_cam);
        const int x = static_cast<int>(px.x());
        const int y = static_cast<int>(px.y());
        CHECK((x - 2) % 4 == 0);
        CHECK((y - 2) % 4 == 0);
        CHECK(g.color.x() == doctest::Approx(kf.color.at(x, y, 0)));
        CHECK(g.opacity_logit == doctest::Approx(logit(0.3)));
        CHECK(g.log_scale.x() ==
              doctest::Approx(std::log(0.5 * 2.0 * 4.0 / 30.0)));
        CHECK(g.ref_time == 0.25);
    }

    BinaryMask left(24, 24);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 12; ++x) left.set(x, y, true);
    const auto masked = seed_gaussians_from_rgbd(kf, cam, 4, 0.0, &left);
    CHECK(masked.size() == 17);  // 3x6 lattice minus the hole

    Keyframe no_depth = kf;
    no_depth.depth = Image();
    CHECK_THROWS_AS(seed_gaussians_from_rgbd(no_depth, cam, 4, 0.0), Error);
    CHECK_THROWS_AS(seed_gaussians_from_rgbd(kf, cam, 0, 0.0), Error);
}

namespace {

// Ground-truth static scene plus a perturbed copy of it for optimization.
std::pair<MapperScene, MapperScene> make_recovery_pair()
{
    MapperScene gt;
    gt.camera = PinholeCamera{24, 24, 32.0, 32.0, 12.0, 12.0};
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int i = 0; i < 6; ++i) {
        Gaussian g;
        g.center = Vec3(0.45 * u(rng), 0.45 * u(rng), 2.0 + 0.3 * u(rng));
        g.rotation = quat_from_axis_angle(
                         Vec3(0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng)))
                         .coeffs();
        g.log_scale = Vec3::Constant(std::log(0.11)) +
                      Vec3(0.15 * u(rng), 0.15 * u(rng), 0.15 * u(rng));
        g.opacity_logit = 0.3 + 0.5 * u(rng);
        g.color = Vec3(0.2 + 0.6 * u01(rng), 0.2 + 0.6 * u01(rng),
                       0.2 + 0.6 * u01(rng));
        gt.gaussians.push_back(g);
    }
    gt.bindings.resize(gt.gaussians.size());

    Keyframe kf;
    kf.time = 0.0;
    kf.cam_to_world = SE3Pose(quat_from_axis_angle({0.0, 0.01, 0.0}),
                              {0.02, 0.0, -0.03});
    kf.cam_to_world_end = kf.cam_to_world;
    const RenderOutput ref =
        render(posed_at_time(gt, MappingConfig{}, 0.0, false), gt.camera,
               kf.cam_to_world.inverse(), Vec3::Zero());
    kf.color = ref.color;
    gt.keyframes.push_back(kf);

    MapperScene noisy = gt;
    for (Gaussian& g : noisy.gaussians) {
        g.center += Vec3(0.015 * u(rng), 0.015 * u(rng), 0.015 * u(rng));
        g.color += Vec3(0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng));
        g.opacity_logit += 0.3 * u(rng);
    }
    return {gt, noisy};
}

}  // namespace

TEST_CASE("mapping loop improves a perturbed scene deterministically")
{
    auto [gt, noisy] = make_recovery_pair();
    (void)gt;
    MappingConfig config;
    config.lambda_depth = 0.0;

    MapperScene run1 = noisy;
    const MappingTelemetry t1 = run_mapping(run1, config, false, 150);
    REQUIRE(t1.loss_history.size() == 150);
    CHECK(t1.loss_history.back() < 0.6 * t1.loss_history.front());
    CHECK(t1.densified == 0);
    CHECK(t1.pruned == 0);

    MapperScene run2 = noisy;
    const MappingTelemetry t2 = run_mapping(run2, config, false, 150);
    CHECK(t1.loss_history == t2.loss_history);
    for (size_t i = 0; i < run1.gaussians.size(); ++i) {
        CHECK((run1.gaussians[i].center - run2.gaussians[i].center).norm() ==
              0.0);
        CHECK((run1.gaussians[i].color - run2.gaussians[i].color).norm() == 0.0);
    }
}

TEST_CASE("densify and prune keep the splat set consistent")
{
    auto [gt, noisy] = make_recovery_pair();
    (void)gt;

    Gaussian ghost = noisy.gaussians.front();
    ghost.opacity_logit = -6.0;  // far below the prune threshold
    noisy.gaussians.push_back(ghost);
    noisy.bindings.emplace_back();
    const size_t n0 = noisy.gaussians.size();

    MappingConfig config;
    config.lambda_depth = 0.0;
    config.densify_interval = 6;
    config.densify_grad_threshold = 0.0;
    config.max_gaussians = 64;

    SUBCASE("growth and removal")
    {
        MapperScene scene = noisy;
        const MappingTelemetry t = run_mapping(scene, config, false, 6);
        CHECK(t.pruned >= 1);
        CHECK(t.densified >= 1);
        CHECK(scene.gaussians.size() == scene.bindings.size());
        CHECK(scene.gaussians.size() >= n0);
        CHECK(scene.gaussians.size() <= config.max_gaussians);
        for (const Gaussian& g : scene.gaussians)
            CHECK(sigmoid(g.opacity_logit) >= config.prune_opacity);
    }

    SUBCASE("cap respected")
    {
        config.max_gaussians = n0;
        MapperScene scene = noisy;
        run_mapping(scene, config, false, 6);
        CHECK(scene.gaussians.size() <= n0);
        CHECK(scene.gaussians.size() == scene.bindings.size());
    }

    SUBCASE("dynamic children stay bound")
    {
        FdScene f = make_fd_scene();
        MappingConfig cfg = f.config;
        cfg.densify_interval = 3;
        cfg.densify_grad_threshold = 0.0;
        cfg.max_gaussians = 64;
        const MappingTelemetry t = run_mapping(f.scene, cfg, true, 3);
        CHECK(t.densified >= 1);
        CHECK(f.scene.gaussians.size() == f.scene.bindings.size());
        size_t bound = 0;
        for (size_t i = 0; i < f.scene.gaussians.size(); ++i) {
            const GaussianBinding& b = f.scene.bindings[i];
            if (b.nodes.empty()) continue;
            ++bound;
            CHECK(b.nodes.size() == b.weights.size());
            CHECK_NOTHROW(f.scene.scaffold.exact_time_index(b.ref_time));
        }
        CHECK(bound >= 3);
    }
}

TEST_CASE("malformed mapping inputs throw")
{
    FdScene f = make_fd_scene();

    MapperScene empty = f.scene;
    empty.keyframes.clear();
    CHECK_THROWS_AS(run_mapping(empty, f.config, false, 1), Error);

    Image bad_weights(8, 8, 1, 1.0);
    CHECK_THROWS_AS(scene_loss_and_gradients(f.scene, f.config, 0, true,
                                             bad_weights, nullptr),
                    ShapeMismatch);

    MapperScene bad_depth = f.scene;
    bad_depth.keyframes[0].depth = Image(8, 8, 1, 1.0);
    CHECK_THROWS_AS(scene_loss_and_gradients(bad_depth, f.config, 0, true,
                                             f.weights, nullptr),
                    ShapeMismatch);
}
