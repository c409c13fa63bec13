#include "splat4d/mapper.hpp"

#include <algorithm>
#include <cmath>

#include "splat4d/errors.hpp"
#include "splat4d/ssim.hpp"

namespace splat4d {

namespace {

struct PosedInfo {
    std::vector<PosedGaussian> posed;
    std::vector<SE3Pose> deforms;
    std::vector<double> w_o;       // blended opacity weight, pre-sigmoid
    std::vector<uint8_t> dynamic;  // splat rides the scaffold this phase
};

double binding_weight_sum(const GaussianBinding& b)
{
    double s = 0.0;
    for (double w : b.weights) s += w;
    return s;
}

PosedInfo build_posed(const MapperScene& scene, const MappingConfig& config,
                      double time, bool dynamic_phase)
{
    const size_t n = scene.gaussians.size();
    PosedInfo out;
    out.posed.resize(n);
    out.deforms.resize(n, SE3Pose::identity());
    out.w_o.assign(n, 0.0);
    out.dynamic.assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
        const Gaussian& g = scene.gaussians[i];
        PosedGaussian& p = out.posed[i];
        p.log_scale = g.log_scale;
        p.color = g.color;
        const bool dyn = dynamic_phase && !scene.scaffold.empty() &&
                         i < scene.bindings.size() &&
                         !scene.bindings[i].nodes.empty();
        if (dyn) {
            const GaussianBinding& b = scene.bindings[i];
            const SE3Pose def = deform_transform(scene.scaffold, b, time);
            const double wo =
                config.enable_aow
                    ? opacity_weight(scene.scaffold, b, time)
                    : config.opacity_weight_frozen * binding_weight_sum(b);
            p.center = def.apply(g.center);
            p.rotation =
                quat_mul(def.rotation, Quat::from_coeffs(g.rotation)).coeffs();
            p.opacity = sigmoid(wo) * sigmoid(g.opacity_logit);
            out.deforms[i] = def;
            out.w_o[i] = wo;
            out.dynamic[i] = 1;
        } else {
            p.center = g.center;
            p.rotation = g.rotation;
            p.opacity = sigmoid(g.opacity_logit);
        }
    }
    return out;
}

// Loss and gradients of the motion regularizers: node speed and acceleration,
// pairwise isometry between consecutive samples, and smoothness of the
// opacity-weight field over the reference-time neighbor graph.
double scaffold_regularizers(const Scaffold& s, const MappingConfig& config,
                             SceneGrads* grads)
{
    const int nodes = s.node_count();
    const int times = s.sample_count();
    if (nodes == 0 || times == 0) return 0.0;

    double loss = 0.0;
    std::vector<std::vector<Vec3>> g_t(
        static_cast<size_t>(nodes), std::vector<Vec3>(static_cast<size_t>(times),
                                                      Vec3::Zero()));
    auto t_of = [&](int k, int m) -> const Vec3& {
        return s.nodes[static_cast<size_t>(k)].poses[static_cast<size_t>(m)]
            .translation;
    };

    if (config.lambda_speed > 0.0 && times >= 2) {
        const double c = config.lambda_speed /
                         (static_cast<double>(nodes) * (times - 1));
        for (int k = 0; k < nodes; ++k)
            for (int m = 1; m < times; ++m) {
                const Vec3 d = t_of(k, m) - t_of(k, m - 1);
                loss += c * d.squaredNorm();
                g_t[k][m] += 2.0 * c * d;
                g_t[k][m - 1] -= 2.0 * c * d;
            }
    }
    if (config.lambda_accel > 0.0 && times >= 3) {
        const double c = config.lambda_accel /
                         (static_cast<double>(nodes) * (times - 2));
        for (int k = 0; k < nodes; ++k)
            for (int m = 1; m + 1 < times; ++m) {
                const Vec3 a = t_of(k, m + 1) - 2.0 * t_of(k, m) + t_of(k, m - 1);
                loss += c * a.squaredNorm();
                g_t[k][m + 1] += 2.0 * c * a;
                g_t[k][m] -= 4.0 * c * a;
                g_t[k][m - 1] += 2.0 * c * a;
            }
    }

    std::vector<std::vector<int>> nbrs;
    size_t pairs = 0;
    if ((config.lambda_rigid > 0.0 || config.lambda_weight_similarity > 0.0) &&
        nodes >= 2) {
        nbrs = s.node_neighbors(config.regularizer_neighbors, 0);
        for (const auto& list : nbrs) pairs += list.size();
    }

    if (config.lambda_rigid > 0.0 && pairs > 0 && times >= 2) {
        const double c = config.lambda_rigid /
                         (static_cast<double>(pairs) * (times - 1));
        for (int k = 0; k < nodes; ++k)
            for (int j : nbrs[static_cast<size_t>(k)])
                for (int m = 1; m < times; ++m) {
                    const Vec3 d0 = t_of(k, m - 1) - t_of(j, m - 1);
                    const Vec3 d1 = t_of(k, m) - t_of(j, m);
                    const double n0 = d0.norm(), n1 = d1.norm();
                    if (n0 < 1e-9 || n1 < 1e-9) continue;
                    const double e = n1 - n0;
                    loss += c * e * e;
                    const Vec3 p1 = (2.0 * c * e / n1) * d1;
                    const Vec3 p0 = (2.0 * c * e / n0) * d0;
                    g_t[k][m] += p1;
                    g_t[j][m] -= p1;
                    g_t[k][m - 1] -= p0;
                    g_t[j][m - 1] += p0;
                }
    }

    if (config.lambda_weight_similarity > 0.0 && config.enable_aow && pairs > 0) {
        const double c = config.lambda_weight_similarity /
                         (static_cast<double>(pairs) * times);
        for (int k = 0; k < nodes; ++k)
            for (int j : nbrs[static_cast<size_t>(k)])
                for (int m = 0; m < times; ++m) {
                    const double dw =
                        s.nodes[static_cast<size_t>(k)].opacity_weights[m] -
                        s.nodes[static_cast<size_t>(j)].opacity_weights[m];
                    loss += c * dw * dw;
                    if (grads) {
                        grads->node_weight[static_cast<size_t>(k)][m] += 2.0 * c * dw;
                        grads->node_weight[static_cast<size_t>(j)][m] -= 2.0 * c * dw;
                    }
                }
    }

    if (grads) {
        // translation adjoints to left-perturbation twists
        for (int k = 0; k < nodes; ++k)
            for (int m = 0; m < times; ++m) {
                const Vec3& g = g_t[k][m];
                if (g.isZero(0.0)) continue;
                Vec6& tw = grads->node_pose[static_cast<size_t>(k)][m];
                tw.head<3>() += t_of(k, m).cross(g);
                tw.tail<3>() += g;
            }
    }
    return loss;
}

}  // namespace

std::vector<PosedGaussian> posed_at_time(const MapperScene& scene,
                                         const MappingConfig& config, double time,
                                         bool dynamic_phase)
{
    return build_posed(scene, config, time, dynamic_phase).posed;
}

Image mapping_pixel_weights(const MapperScene& scene, const MappingConfig& config,
                            size_t kf, const Image& rendered_color,
                            bool dynamic_phase)
{
    const Keyframe& frame = scene.keyframes.at(kf);
    const Image beta_sq =
        uncertainty_map(scene.uncertainty, frame.color, rendered_color);
    const BinaryMask& mask =
        config.enable_rum ? frame.mask_refined : frame.mask_uncertain;
    const bool use_mask = dynamic_phase && mask.width() == beta_sq.width() &&
                          mask.height() == beta_sq.height();
    Image w(beta_sq.width(), beta_sq.height(), 1);
    for (int y = 0; y < w.height(); ++y)
        for (int x = 0; x < w.width(); ++x)
            w.at(x, y) = (use_mask && mask.at(x, y)) ? 1.0 : 1.0 / beta_sq.at(x, y);
    return w;
}

double scene_loss_and_gradients(const MapperScene& scene,
                                const MappingConfig& config, size_t kf,
                                bool dynamic_phase, const Image& pixel_weights,
                                SceneGrads* grads, Image* out_rendered)
{
    const Keyframe& frame = scene.keyframes.at(kf);
    const PinholeCamera& cam = scene.camera;
    if (frame.color.width() != cam.width || frame.color.height() != cam.height ||
        frame.color.channels() != 3)
        throw ShapeMismatch("keyframe observation vs camera");
    if (pixel_weights.width() != cam.width || pixel_weights.height() != cam.height ||
        pixel_weights.channels() != 1)
        throw ShapeMismatch("pixel weights vs camera");

    const PosedInfo pi = build_posed(scene, config, frame.time, dynamic_phase);

    const bool ir = config.enable_ir;
    const SE3Pose wc_start = frame.cam_to_world.inverse();
    const SE3Pose wc_end = ir ? frame.cam_to_world_end.inverse() : wc_start;
    const double log_gain = ir ? frame.log_gain : 0.0;
    const double offset = ir ? frame.offset : 0.0;

    ExposureCache cache;
    const ExposureRender er =
        render_exposure(pi.posed, cam, wc_start, wc_end, log_gain, offset,
                        config.background, config.exposure, &cache);
    if (out_rendered) *out_rendered = er.color;

    const int w = cam.width, h = cam.height;
    const double pixels = static_cast<double>(w) * h;
    double loss = 0.0;

    // photometric: weighted L1 + weighted structural dissimilarity
    Image d_color(w, h, 3);
    const Image dssim = dissimilarity_map(er.color, frame.color);
    Image ssim_weight(w, h, 1);
    const double l1_coeff = (1.0 - config.lambda_dssim) / (3.0 * pixels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double wgt = pixel_weights.at(x, y);
            double l1 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double diff = er.color.at(x, y, c) - frame.color.at(x, y, c);
                l1 += std::abs(diff);
                d_color.at(x, y, c) =
                    wgt * l1_coeff * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
            }
            loss += wgt * ((1.0 - config.lambda_dssim) * l1 / 3.0 +
                           config.lambda_dssim * dssim.at(x, y)) /
                    pixels;
            ssim_weight.at(x, y) = wgt * config.lambda_dssim / pixels;
        }
    const Image d_ssim = dissimilarity_backward(er.color, frame.color, ssim_weight);
    for (size_t i = 0; i < d_color.size(); ++i)
        d_color.storage()[i] += d_ssim.storage()[i];

    // depth
    Image d_depth;
    if (!frame.depth.empty()) {
        if (frame.depth.width() != w || frame.depth.height() != h ||
            frame.depth.channels() != 1)
            throw ShapeMismatch("keyframe depth vs camera");
        size_t valid = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (frame.depth.at(x, y) > 0.0) ++valid;
        if (valid > 0) {
            d_depth = Image(w, h, 1);
            const double coeff = config.lambda_depth / static_cast<double>(valid);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (frame.depth.at(x, y) <= 0.0) continue;
                    const double wgt = pixel_weights.at(x, y);
                    const double r = er.depth.at(x, y) - frame.depth.at(x, y);
                    loss += wgt * coeff * std::abs(r);
                    d_depth.at(x, y) =
                        wgt * coeff * (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0));
                }
        }
    }

    if (grads) {
        const ExposureGrads eg = render_exposure_backward(
            pi.posed, cam, wc_start, wc_end, log_gain, offset, config.background,
            config.exposure, cache, d_color, d_depth);

        grads->splats.assign(scene.gaussians.size(), SceneGrads::SplatGrad{});
        grads->node_pose.assign(
            static_cast<size_t>(scene.scaffold.node_count()),
            std::vector<Vec6>(static_cast<size_t>(scene.scaffold.sample_count()),
                              Vec6::Zero()));
        grads->node_weight.assign(
            static_cast<size_t>(scene.scaffold.node_count()),
            std::vector<double>(static_cast<size_t>(scene.scaffold.sample_count()),
                                0.0));
        grads->log_gain = ir ? eg.log_gain : 0.0;
        grads->offset = ir ? eg.offset : 0.0;
        grads->kf_pose_start = -eg.start_twist;  // world-to-camera left twist
        grads->kf_pose_end = ir ? Vec6(-eg.end_twist) : Vec6(Vec6::Zero());

        for (size_t i = 0; i < scene.gaussians.size(); ++i) {
            const Gaussian& g = scene.gaussians[i];
            const PosedGaussianGrad& pg = eg.gaussians[i];
            SceneGrads::SplatGrad& sg = grads->splats[i];
            sg.log_scale = pg.log_scale;
            sg.color = pg.color;
            if (!pi.dynamic[i]) {
                sg.center = pg.center;
                sg.rotation = pg.rotation;
                const double s = sigmoid(g.opacity_logit);
                sg.opacity_logit = pg.opacity * s * (1.0 - s);
                continue;
            }

            const GaussianBinding& b = scene.bindings[i];
            const SE3Pose& def = pi.deforms[i];
            const Mat3 def_r = def.rotation_matrix();
            sg.center = def_r.transpose() * pg.center;
            sg.rotation =
                quat_left_matrix(def.rotation).transpose() * pg.rotation;
            const Vec4 d_def_q =
                quat_right_matrix(Quat::from_coeffs(g.rotation)).transpose() *
                    pg.rotation +
                rotate_jacobian_wrt_quat(def.rotation, g.center).transpose() *
                    pg.center;
            const DeformGrad dg =
                deform_backward(scene.scaffold, b, frame.time, d_def_q, pg.center);
            const int ti = scene.scaffold.exact_time_index(frame.time);
            const int ri = scene.scaffold.exact_time_index(b.ref_time);
            for (size_t k = 0; k < b.nodes.size(); ++k) {
                const size_t node = static_cast<size_t>(b.nodes[k]);
                grads->node_pose[node][static_cast<size_t>(ti)] += dg.node_at_t[k];
                grads->node_pose[node][static_cast<size_t>(ri)] += dg.node_at_ref[k];
            }

            const double sl = sigmoid(g.opacity_logit);
            const double sw = sigmoid(pi.w_o[i]);
            sg.opacity_logit = pg.opacity * sw * sl * (1.0 - sl);
            if (config.enable_aow) {
                const double d_wo = pg.opacity * sw * (1.0 - sw) * sl;
                const int wi = ti;
                for (size_t k = 0; k < b.nodes.size(); ++k)
                    grads->node_weight[static_cast<size_t>(b.nodes[k])]
                                      [static_cast<size_t>(wi)] +=
                        d_wo * b.weights[k];
            }
        }
    }

    if (dynamic_phase && !scene.scaffold.empty())
        loss += scaffold_regularizers(scene.scaffold, config, grads);
    return loss;
}

void update_uncertainty_masks(MapperScene& scene, const MappingConfig& config,
                              bool dynamic_phase, const MaskProvider& provider)
{
    for (size_t kf = 0; kf < scene.keyframes.size(); ++kf) {
        Keyframe& frame = scene.keyframes[kf];
        const PosedInfo pi = build_posed(scene, config, frame.time, dynamic_phase);
        const SE3Pose wc_start = frame.cam_to_world.inverse();
        const SE3Pose wc_end =
            config.enable_ir ? frame.cam_to_world_end.inverse() : wc_start;
        const ExposureRender er = render_exposure(
            pi.posed, scene.camera, wc_start, wc_end,
            config.enable_ir ? frame.log_gain : 0.0,
            config.enable_ir ? frame.offset : 0.0, config.background,
            config.exposure);
        const Image beta_sq =
            uncertainty_map(scene.uncertainty, frame.color, er.color);
        frame.mask_uncertain = threshold_uncertainty(beta_sq, config.delta_u);
        if (!config.enable_rum || !provider) {
            frame.mask_refined = frame.mask_uncertain;
            continue;
        }
        const auto prompts =
            farthest_point_prompts(frame.mask_uncertain, config.mask_prompts);
        const std::vector<BinaryMask> candidates = provider(kf, prompts);
        frame.mask_refined =
            refine_uncertainty_mask(frame.mask_uncertain, candidates, config.delta_ru);
    }
}

std::vector<Gaussian> seed_gaussians_from_rgbd(const Keyframe& kf,
                                               const PinholeCamera& camera,
                                               int stride, double opacity_logit,
                                               const BinaryMask* restrict_to)
{
    if (kf.depth.empty()) throw Error("seeding splats needs a depth observation");
    if (kf.depth.width() != camera.width || kf.depth.height() != camera.height)
        throw ShapeMismatch("keyframe depth vs camera");
    if (stride < 1) throw Error("seeding stride must be positive");

    std::vector<Gaussian> out;
    for (int y = stride / 2; y < camera.height; y += stride)
        for (int x = stride / 2; x < camera.width; x += stride) {
            if (restrict_to && !restrict_to->at(x, y)) continue;
            const double z = kf.depth.at(x, y);
            if (z <= 0.0) continue;
            Gaussian g;
            g.center = kf.cam_to_world.apply(
                camera.unproject(x + 0.5, y + 0.5, z));
            const double footprint = z * stride / camera.fx;
            g.log_scale = Vec3::Constant(std::log(std::max(1e-4, 0.5 * footprint)));
            g.opacity_logit = opacity_logit;
            g.color = Vec3(kf.color.at(x, y, 0), kf.color.at(x, y, 1),
                           kf.color.at(x, y, 2));
            g.ref_time = kf.time;
            out.push_back(g);
        }
    return out;
}

namespace {

struct KeyframeOpt {
    Vec6 m_start = Vec6::Zero(), v_start = Vec6::Zero();
    Vec6 m_end = Vec6::Zero(), v_end = Vec6::Zero();
    double m_gain = 0.0, v_gain = 0.0, m_off = 0.0, v_off = 0.0;
};

}  // namespace

MappingTelemetry run_mapping(MapperScene& scene, const MappingConfig& config,
                             bool dynamic_phase, int iterations)
{
    if (scene.keyframes.empty()) throw Error("mapping needs at least one keyframe");
    scene.bindings.resize(scene.gaussians.size());

    MappingTelemetry telemetry;
    using SplatGrad = SceneGrads::SplatGrad;
    std::vector<SplatGrad> m_splat(scene.gaussians.size()),
        v_splat(scene.gaussians.size());
    const size_t nodes = static_cast<size_t>(scene.scaffold.node_count());
    const size_t times = static_cast<size_t>(scene.scaffold.sample_count());
    std::vector<std::vector<Vec6>> m_node(nodes,
                                          std::vector<Vec6>(times, Vec6::Zero())),
        v_node(nodes, std::vector<Vec6>(times, Vec6::Zero()));
    std::vector<std::vector<double>> m_w(nodes, std::vector<double>(times, 0.0)),
        v_w(nodes, std::vector<double>(times, 0.0));
    std::vector<KeyframeOpt> kf_opt(scene.keyframes.size());
    std::vector<double> grad_accum(scene.gaussians.size(), 0.0);
    int accum_iters = 0;
    long step = 0;

    for (int it = 0; it < iterations; ++it) {
        const size_t kf = static_cast<size_t>(it) % scene.keyframes.size();
        Keyframe& frame = scene.keyframes[kf];

        // weights come from a gradient-free pre-pass so the loss below sees
        // them as constants
        const Image pre = render_exposure(
            build_posed(scene, config, frame.time, dynamic_phase).posed,
            scene.camera, frame.cam_to_world.inverse(),
            (config.enable_ir ? frame.cam_to_world_end : frame.cam_to_world)
                .inverse(),
            config.enable_ir ? frame.log_gain : 0.0,
            config.enable_ir ? frame.offset : 0.0, config.background,
            config.exposure).color;
        const Image weights =
            mapping_pixel_weights(scene, config, kf, pre, dynamic_phase);

        SceneGrads g;
        Image rendered;
        const double loss = scene_loss_and_gradients(scene, config, kf,
                                                     dynamic_phase, weights, &g,
                                                     &rendered);
        telemetry.loss_history.push_back(loss);

        if (config.train_uncertainty)
            scene.uncertainty.train_step(
                extract_uncertainty_features(frame.color, rendered),
                photometric_residuals(rendered, frame.color),
                config.uncertainty_reg, config.lr_uncertainty);

        ++step;
        const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(step));
        auto adam1 = [&](double& p, double& m, double& v, double gr, double lr) {
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            p -= lr * (m / bc1) / (std::sqrt(v / bc2) + 1e-8);
        };
        auto adam_step = [&](auto& m, auto& v, const auto& gr, double lr,
                             auto& out) {
            for (int c = 0; c < gr.size(); ++c) {
                m[c] = 0.9 * m[c] + 0.1 * gr[c];
                v[c] = 0.999 * v[c] + 0.001 * gr[c] * gr[c];
                out[c] = -lr * (m[c] / bc1) / (std::sqrt(v[c] / bc2) + 1e-8);
            }
        };

        for (size_t i = 0; i < scene.gaussians.size(); ++i) {
            Gaussian& gs = scene.gaussians[i];
            const SplatGrad& sg = g.splats[i];
            Vec3 d3;
            Vec4 d4;
            adam_step(m_splat[i].center, v_splat[i].center, sg.center,
                      config.lr_center, d3);
            gs.center += d3;
            adam_step(m_splat[i].rotation, v_splat[i].rotation, sg.rotation,
                      config.lr_rotation, d4);
            gs.rotation += d4;
            adam_step(m_splat[i].log_scale, v_splat[i].log_scale, sg.log_scale,
                      config.lr_log_scale, d3);
            gs.log_scale += d3;
            adam1(gs.opacity_logit, m_splat[i].opacity_logit,
                  v_splat[i].opacity_logit, sg.opacity_logit, config.lr_opacity);
            adam_step(m_splat[i].color, v_splat[i].color, sg.color,
                      config.lr_color, d3);
            gs.color += d3;
            grad_accum[i] += sg.center.norm();
        }
        ++accum_iters;

        if (dynamic_phase && !scene.scaffold.empty()) {
            for (size_t k = 0; k < nodes; ++k)
                for (size_t t = 0; t < times; ++t) {
                    Vec6 delta;
                    adam_step(m_node[k][t], v_node[k][t], g.node_pose[k][t],
                              config.lr_node_pose, delta);
                    ScaffoldNode& node = scene.scaffold.nodes[k];
                    node.poses[t] =
                        se3_exp(Twist::from_coeffs(delta)) * node.poses[t];
                    if (config.enable_aow)
                        adam1(node.opacity_weights[t], m_w[k][t], v_w[k][t],
                              g.node_weight[k][t], config.lr_opacity_weight);
                }
        }

        if (config.refine_poses) {
            Vec6 delta;
            adam_step(kf_opt[kf].m_start, kf_opt[kf].v_start, g.kf_pose_start,
                      config.lr_pose, delta);
            frame.cam_to_world =
                frame.cam_to_world * se3_exp(Twist::from_coeffs(delta));
        }
        if (config.refine_pose_end && config.enable_ir) {
            Vec6 delta;
            adam_step(kf_opt[kf].m_end, kf_opt[kf].v_end, g.kf_pose_end,
                      config.lr_pose, delta);
            frame.cam_to_world_end =
                frame.cam_to_world_end * se3_exp(Twist::from_coeffs(delta));
        }
        if (config.enable_ir) {
            adam1(frame.log_gain, kf_opt[kf].m_gain, kf_opt[kf].v_gain, g.log_gain,
                  config.lr_exposure);
            adam1(frame.offset, kf_opt[kf].m_off, kf_opt[kf].v_off, g.offset,
                  config.lr_exposure);
        }

        if (config.densify_interval > 0 &&
            (it + 1) % config.densify_interval == 0) {
            const double inv_iters = 1.0 / std::max(1, accum_iters);
            std::vector<Gaussian> ng;
            std::vector<GaussianBinding> nb;
            std::vector<SplatGrad> nm, nv;
            auto push = [&](const Gaussian& gs, const GaussianBinding& b,
                            const SplatGrad& m, const SplatGrad& v) {
                ng.push_back(gs);
                nb.push_back(b);
                nm.push_back(m);
                nv.push_back(v);
            };
            auto rebind = [&](Gaussian& gs) {
                if (scene.scaffold.empty()) return GaussianBinding{};
                GaussianBinding b = bind_gaussian(scene.scaffold, gs.center,
                                                  gs.ref_time,
                                                  config.binding_neighbors);
                return b;
            };
            size_t survivors = 0;
            for (const Gaussian& gs : scene.gaussians)
                if (sigmoid(gs.opacity_logit) >= config.prune_opacity) ++survivors;
            size_t budget = config.max_gaussians > survivors
                                ? config.max_gaussians - survivors
                                : 0;  // each split/clone adds one net splat
            for (size_t i = 0; i < scene.gaussians.size(); ++i) {
                Gaussian gs = scene.gaussians[i];
                const bool was_dynamic = !scene.bindings[i].nodes.empty();
                if (sigmoid(gs.opacity_logit) < config.prune_opacity) {
                    ++telemetry.pruned;
                    continue;
                }
                const double mean_grad = grad_accum[i] * inv_iters;
                if (mean_grad <= config.densify_grad_threshold || budget == 0) {
                    push(gs, scene.bindings[i], m_splat[i], v_splat[i]);
                    continue;
                }
                --budget;
                const Mat3 rot = gs.unit_rotation().to_matrix();
                int axis = 0;
                gs.log_scale.maxCoeff(&axis);
                const double extent = std::exp(gs.log_scale[axis]);
                const Vec3 dir = rot.col(axis);
                ++telemetry.densified;
                if (extent > config.densify_split_scale) {
                    Gaussian a = gs, b2 = gs;
                    a.center += 0.5 * extent * dir;
                    b2.center -= 0.5 * extent * dir;
                    a.log_scale.array() -= std::log(1.6);
                    b2.log_scale.array() -= std::log(1.6);
                    push(a, was_dynamic ? rebind(a) : GaussianBinding{},
                         SplatGrad{}, SplatGrad{});
                    push(b2, was_dynamic ? rebind(b2) : GaussianBinding{},
                         SplatGrad{}, SplatGrad{});
                } else {
                    push(gs, scene.bindings[i], m_splat[i], v_splat[i]);
                    Gaussian clone = gs;
                    clone.center += 0.05 * extent * dir;
                    push(clone, was_dynamic ? rebind(clone) : GaussianBinding{},
                         SplatGrad{}, SplatGrad{});
                }
            }
            scene.gaussians.swap(ng);
            scene.bindings.swap(nb);
            m_splat.swap(nm);
            v_splat.swap(nv);
            grad_accum.assign(scene.gaussians.size(), 0.0);
            accum_iters = 0;
        }
    }
    return telemetry;
}

}  // namespace splat4d
