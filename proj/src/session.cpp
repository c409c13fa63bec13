#include "splat4d/session.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <utility>
#include <vector>

#include "splat4d/errors.hpp"
#include "splat4d/tracker.hpp"

namespace splat4d {

namespace fs = std::filesystem;

namespace {

std::string sub(const std::string& root, const char* name)
{
    return (fs::path(root) / name).string();
}

void write_text_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("short write: " + path);
}

void save_state(const Session& s, const SessionState& st)
{
    std::ostringstream out;
    out << "tracked = " << (st.tracked ? "true" : "false") << '\n'
        << "phase_a = " << (st.phase_a ? "true" : "false") << '\n'
        << "phase_b = " << (st.phase_b ? "true" : "false") << '\n';
    write_text_file(sub(s.root, "state.txt"), out.str());
}

std::vector<size_t> keyframe_frames(const Dataset& ds, const SessionConfig& cfg)
{
    const int stride = cfg.session.keyframe_stride;
    if (stride < 1) throw ConfigError("session.keyframe_stride must be positive");
    std::vector<size_t> out;
    for (size_t f = 0; f < ds.frames.size(); f += static_cast<size_t>(stride))
        out.push_back(f);
    return out;
}

double seed_logit(const SessionConfig& cfg)
{
    const double p = cfg.session.seed_opacity;
    if (!(p > 0.0 && p < 1.0))
        throw ConfigError("session.seed_opacity must be in (0, 1)");
    return logit(p);
}

void save_exposure_table(const std::string& path, const std::vector<Keyframe>& kfs)
{
    std::ostringstream out;
    out << "# time log_gain offset\n" << std::setprecision(17);
    for (const Keyframe& kf : kfs)
        out << kf.time << ' ' << kf.log_gain << ' ' << kf.offset << '\n';
    write_text_file(path, out.str());
}

std::vector<ExposureRecord> load_exposure_table(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::vector<ExposureRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream row(line);
        ExposureRecord r;
        if (!(row >> r.time >> r.log_gain >> r.offset)) {
            std::string word;
            if (std::istringstream(line) >> word)
                throw IoError("bad exposure row in " + path + ": '" + line + "'");
            continue;  // blank line
        }
        out.push_back(r);
    }
    return out;
}

void save_bindings(const std::string& path,
                   const std::vector<GaussianBinding>& bindings)
{
    std::ostringstream out;
    out << "# splat ref_time n (node weight)*n\n" << std::setprecision(17);
    for (size_t i = 0; i < bindings.size(); ++i) {
        const GaussianBinding& b = bindings[i];
        if (b.nodes.empty()) continue;
        out << i << ' ' << b.ref_time << ' ' << b.nodes.size();
        for (size_t k = 0; k < b.nodes.size(); ++k)
            out << ' ' << b.nodes[k] << ' ' << b.weights[k];
        out << '\n';
    }
    write_text_file(path, out.str());
}

std::vector<GaussianBinding> load_bindings(const std::string& path, size_t count)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::vector<GaussianBinding> out(count);
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream row(line);
        size_t idx = 0, n = 0;
        double ref_time = 0.0;
        if (!(row >> idx >> ref_time >> n)) {
            std::string word;
            if (std::istringstream(line) >> word)
                throw IoError("bad binding row in " + path + ": '" + line + "'");
            continue;
        }
        if (idx >= count)
            throw IoError(path + ": binding index " + std::to_string(idx) +
                          " outside the splat set");
        GaussianBinding b;
        b.ref_time = ref_time;
        for (size_t k = 0; k < n; ++k) {
            int node = 0;
            double w = 0.0;
            if (!(row >> node >> w))
                throw IoError("truncated binding row in " + path);
            b.nodes.push_back(node);
            b.weights.push_back(w);
        }
        out[idx] = std::move(b);
    }
    return out;
}

// Twist from a trajectory pose to the next one (the previous step is reused
// at the final pose); extrapolates shutter-close poses.
Twist forward_step(const Trajectory& traj, size_t f)
{
    if (traj.size() < 2) return {};
    const size_t a = (f + 1 < traj.size()) ? f : f - 1;
    return se3_log(traj[a].pose.inverse() * traj[a + 1].pose);
}

double interp_series(const std::vector<double>& ts, const std::vector<double>& vs,
                     double t)
{
    if (ts.empty()) return 0.0;
    if (t <= ts.front()) return vs.front();
    if (t >= ts.back()) return vs.back();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const size_t j = static_cast<size_t>(it - ts.begin());
    const double f = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
    return vs[j - 1] + f * (vs[j] - vs[j - 1]);
}

// Shutter interval and response of one frame.
struct FrameRig {
    SE3Pose open, end;
    double log_gain = 0.0;
    double offset = 0.0;
};

// Learned per-keyframe quantities plus what is needed to extrapolate them to
// the frames in between.
struct SessionRig {
    Trajectory traj;
    std::vector<size_t> kf_frames;
    std::vector<SE3Pose> kf_end;
    std::vector<double> kf_time, kf_gain, kf_offset;
    double shutter_fraction = 0.0;

    FrameRig at(size_t f) const
    {
        FrameRig out;
        out.open = traj[f].pose;
        const auto it = std::find(kf_frames.begin(), kf_frames.end(), f);
        if (it != kf_frames.end()) {
            const size_t k = static_cast<size_t>(it - kf_frames.begin());
            out.end = kf_end[k];
            out.log_gain = kf_gain[k];
            out.offset = kf_offset[k];
            return out;
        }
        out.end = out.open *
                  se3_exp(forward_step(traj, f).scaled(shutter_fraction));
        out.log_gain = interp_series(kf_time, kf_gain, traj[f].time);
        out.offset = interp_series(kf_time, kf_offset, traj[f].time);
        return out;
    }
};

// Mean of the learned exposure-interval lengths relative to the frame steps.
double mean_shutter_fraction(const Trajectory& traj,
                             const std::vector<size_t>& kf_frames,
                             const std::vector<SE3Pose>& ends, double fallback)
{
    double sum = 0.0;
    int n = 0;
    for (size_t k = 0; k < kf_frames.size(); ++k) {
        const size_t f = kf_frames[k];
        const double den = forward_step(traj, f).coeffs().norm();
        if (den < 1e-12) continue;
        const double num =
            se3_log(traj[f].pose.inverse() * ends[k]).coeffs().norm();
        sum += num / den;
        ++n;
    }
    return n ? std::clamp(sum / n, 0.0, 0.95) : fallback;
}

SessionRig load_session_rig(const Session& s, const Dataset& ds)
{
    SessionRig r;
    r.traj = load_trajectory(sub(s.root, "trajectory.txt"));
    if (r.traj.size() != ds.frames.size())
        throw IoError("trajectory.txt covers " + std::to_string(r.traj.size()) +
                      " frames, dataset has " + std::to_string(ds.frames.size()));
    r.kf_frames = keyframe_frames(ds, s.config);
    const Trajectory ends = load_trajectory(sub(s.root, "trajectory_end.txt"));
    const std::vector<ExposureRecord> expo =
        load_exposure_table(sub(s.root, "exposure.txt"));
    if (ends.size() != r.kf_frames.size() || expo.size() != r.kf_frames.size())
        throw IoError("keyframe sidecars in " + s.root +
                      " do not match the keyframe schedule");
    for (size_t k = 0; k < r.kf_frames.size(); ++k) {
        r.kf_end.push_back(ends[k].pose);
        r.kf_time.push_back(expo[k].time);
        r.kf_gain.push_back(expo[k].log_gain);
        r.kf_offset.push_back(expo[k].offset);
    }
    r.shutter_fraction = mean_shutter_fraction(
        r.traj, r.kf_frames, r.kf_end,
        std::clamp(s.config.session.shutter_init, 0.0, 0.95));
    return r;
}

Image render_rigged(const MapperScene& scene, const MappingConfig& mc,
                    double time, bool dynamic, const FrameRig& fr)
{
    return render_exposure(posed_at_time(scene, mc, time, dynamic), scene.camera,
                           fr.open.inverse(), fr.end.inverse(), fr.log_gain,
                           fr.offset, mc.background, mc.exposure)
        .color;
}

// Candidate segments for mask refinement, cut from the object-id sidecars:
// each prompt votes for the segment of whatever id it lands on.
MaskProvider object_mask_provider(const Dataset& ds, std::vector<size_t> kf_frames)
{
    return [ds, kf_frames = std::move(kf_frames)](
               size_t kf, const std::vector<std::pair<int, int>>& prompts) {
        std::vector<BinaryMask> out;
        if (kf >= kf_frames.size()) return out;
        const Image ids = dataset_objects(ds, kf_frames[kf]);
        if (ids.empty()) return out;
        std::vector<int> seen;
        for (const auto& [px, py] : prompts) {
            if (px < 0 || py < 0 || px >= ids.width() || py >= ids.height())
                continue;
            const int id = static_cast<int>(std::lround(ids.at(px, py)));
            if (id <= 0 ||
                std::find(seen.begin(), seen.end(), id) != seen.end())
                continue;
            seen.push_back(id);
            BinaryMask m(ids.width(), ids.height());
            for (int y = 0; y < ids.height(); ++y)
                for (int x = 0; x < ids.width(); ++x)
                    m.set(x, y,
                          static_cast<int>(std::lround(ids.at(x, y))) == id);
            out.push_back(std::move(m));
        }
        return out;
    };
}

// Bilinear sample of a 2-channel field at a continuous pixel position
// (pixel-center convention). False near the border.
bool sample_flow(const Image& flow, double px, double py, Vec2* out)
{
    const double u = px - 0.5, v = py - 0.5;
    const int x0 = static_cast<int>(std::floor(u));
    const int y0 = static_cast<int>(std::floor(v));
    if (x0 < 0 || y0 < 0 || x0 + 1 >= flow.width() || y0 + 1 >= flow.height())
        return false;
    const double ax = u - x0, ay = v - y0;
    for (int c = 0; c < 2; ++c)
        (*out)[c] = (1 - ay) * ((1 - ax) * flow.at(x0, y0, c) +
                                ax * flow.at(x0 + 1, y0, c)) +
                    ay * ((1 - ax) * flow.at(x0, y0 + 1, c) +
                          ax * flow.at(x0 + 1, y0 + 1, c));
    return true;
}

// When the session already carries a mapped model, its uncertainty head
// supplies the per-grid-pixel variances for re-tracking.
void apply_model_variances(const Session& s, const Dataset& ds, DbaProblem& prob)
{
    if (!fs::exists(sub(s.root, "model.ply")) ||
        !fs::exists(sub(s.root, "uncertainty.bin")) ||
        !fs::exists(sub(s.root, "trajectory.txt")))
        return;
    const MapperScene scene = load_session_scene(s, ds);
    const SessionRig rig = load_session_rig(s, ds);
    const bool dynamic = !scene.scaffold.nodes.empty();
    const int gw = dba_grid_dim(ds.camera.width, prob.stride);
    const int gh = dba_grid_dim(ds.camera.height, prob.stride);

    prob.beta_sq.resize(prob.poses.size());
    for (size_t f = 0; f < prob.poses.size(); ++f) {
        const Image observed = dataset_rgb(ds, f);
        const Image rendered = render_rigged(scene, s.config.mapping,
                                             ds.frames[f].time, dynamic, rig.at(f));
        const Image beta = uncertainty_map(scene.uncertainty, observed, rendered);
        Eigen::VectorXd b(static_cast<Eigen::Index>(gw) * gh);
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx) {
                const Vec2 c = dba_grid_center(gx, gy, prob.stride);
                b[gy * gw + gx] = beta.at(static_cast<int>(c.x()),
                                          static_cast<int>(c.y()));
            }
        prob.beta_sq[f] = std::move(b);
    }
}

MapperScene assemble_scene(const Dataset& ds, const Trajectory& traj,
                           const SessionConfig& cfg)
{
    MapperScene scene;
    scene.camera = ds.camera;
    const double kappa = std::clamp(cfg.session.shutter_init, 0.0, 0.95);
    for (size_t f : keyframe_frames(ds, cfg)) {
        Keyframe kf;
        kf.index = static_cast<int>(f);
        kf.time = ds.frames[f].time;
        kf.color = dataset_rgb(ds, f);
        kf.depth = dataset_depth(ds, f);
        kf.cam_to_world = traj[f].pose;
        kf.cam_to_world_end =
            traj[f].pose * se3_exp(forward_step(traj, f).scaled(kappa));
        scene.keyframes.push_back(std::move(kf));
    }
    const Keyframe& first = scene.keyframes.front();
    if (first.depth.empty())
        throw IoError("seeding needs a depth image for the first keyframe");
    scene.gaussians = seed_gaussians_from_rgbd(first, ds.camera,
                                               cfg.session.seed_stride,
                                               seed_logit(cfg));
    if (scene.gaussians.empty())
        throw Error("the first keyframe has no valid depth to seed from");
    scene.bindings.assign(scene.gaussians.size(), {});
    return scene;
}

// Writes the checkpoint; keyframe rows of the trajectory are synced back in
// case pose refinement moved them.
void save_scene(const Session& s, const MapperScene& scene, Trajectory& traj,
                bool dynamic)
{
    save_ply(sub(s.root, "model.ply"), scene.gaussians);
    scene.uncertainty.save(sub(s.root, "uncertainty.bin"));

    Trajectory ends;
    for (const Keyframe& kf : scene.keyframes) {
        traj[static_cast<size_t>(kf.index)].pose = kf.cam_to_world;
        ends.push_back({kf.time, kf.cam_to_world_end});
    }
    save_trajectory(sub(s.root, "trajectory.txt"), traj);
    save_trajectory(sub(s.root, "trajectory_end.txt"), ends);
    save_exposure_table(sub(s.root, "exposure.txt"), scene.keyframes);

    if (dynamic) {
        save_scaffold(sub(s.root, "scaffold.txt"), scene.scaffold);
        save_bindings(sub(s.root, "bindings.txt"), scene.bindings);
    } else {
        fs::remove(sub(s.root, "scaffold.txt"));
        fs::remove(sub(s.root, "bindings.txt"));
    }
}

// Static splats sitting on surface that the refined masks mark as dynamic are
// retired before dynamic seeding. The sensor depth must confirm the hit so
// background behind a mover survives.
size_t retire_masked_statics(MapperScene& scene)
{
    std::vector<char> drop(scene.gaussians.size(), 0);
    for (const Keyframe& kf : scene.keyframes) {
        if (kf.mask_refined.count() == 0 || kf.depth.empty()) continue;
        const SE3Pose w2c = kf.cam_to_world.inverse();
        for (size_t i = 0; i < scene.gaussians.size(); ++i) {
            if (drop[i] || !scene.bindings[i].nodes.empty()) continue;
            const Vec3 pc = w2c.apply(scene.gaussians[i].center);
            if (pc.z() <= 1e-6) continue;
            const Vec2 px = scene.camera.project(pc);
            const int x = static_cast<int>(std::floor(px.x()));
            const int y = static_cast<int>(std::floor(px.y()));
            if (x < 0 || y < 0 || x >= scene.camera.width ||
                y >= scene.camera.height)
                continue;
            if (!kf.mask_refined.at(x, y)) continue;
            const double obs = kf.depth.at(x, y);
            if (obs > 1e-6 && std::abs(pc.z() - obs) < 0.1 * obs) drop[i] = 1;
        }
    }
    std::vector<Gaussian> keep_g;
    std::vector<GaussianBinding> keep_b;
    size_t cut = 0;
    for (size_t i = 0; i < scene.gaussians.size(); ++i) {
        if (drop[i]) {
            ++cut;
            continue;
        }
        keep_g.push_back(scene.gaussians[i]);
        keep_b.push_back(scene.bindings[i]);
    }
    scene.gaussians.swap(keep_g);
    scene.bindings.swap(keep_b);
    return cut;
}

size_t seed_dynamic_splats(MapperScene& scene, const MappingConfig& mc,
                           const SessionConfig& cfg)
{
    const double lg = seed_logit(cfg);
    size_t seeded = 0;
    for (const Keyframe& kf : scene.keyframes) {
        if (kf.mask_refined.count() == 0) continue;
        for (Gaussian g : seed_gaussians_from_rgbd(kf, scene.camera,
                                                   cfg.session.seed_stride, lg,
                                                   &kf.mask_refined)) {
            GaussianBinding b = bind_gaussian(scene.scaffold, g.center, kf.time,
                                              mc.binding_neighbors);
            g.node_index = b.nodes.empty() ? -1 : b.nodes.front();
            g.ref_time = kf.time;
            scene.gaussians.push_back(g);
            scene.bindings.push_back(std::move(b));
            ++seeded;
        }
    }
    return seeded;
}

bool run_dynamic_phase(const Session& s, const Dataset& ds, MapperScene& scene,
                       SessionTelemetry& tel)
{
    const SessionConfig& cfg = s.config;
    if (cfg.session.dynamic_iterations <= 0) return false;

    const std::string track_path = (fs::path(ds.root) / "tracks.txt").string();
    if (!fs::exists(track_path)) return false;
    std::vector<double> kf_times;
    for (const Keyframe& kf : scene.keyframes) kf_times.push_back(kf.time);
    const PointTracks tracks = load_tracks(track_path, kf_times);
    if (tracks.positions.empty()) return false;

    MappingConfig mc = cfg.mapping;
    mc.train_uncertainty = false;  // the predictor is frozen past phase A

    const MaskProvider provider =
        object_mask_provider(ds, keyframe_frames(ds, cfg));
    update_uncertainty_masks(scene, mc, false, provider);
    tel.statics_cut = retire_masked_statics(scene);

    ScaffoldBuildParams sp;
    sp.node_count = cfg.session.scaffold_nodes;
    sp.radius_neighbor = cfg.session.radius_neighbor;
    sp.radius_scale = cfg.session.radius_scale;
    sp.opacity_weight_init = mc.opacity_weight_init;
    scene.scaffold = init_scaffold_from_points(tracks.timestamps,
                                               tracks.positions, tracks.visible,
                                               sp);
    tel.dynamics_seeded = seed_dynamic_splats(scene, mc, cfg);

    const int rounds = std::max(1, cfg.session.mask_updates);
    int remaining = cfg.session.dynamic_iterations;
    for (int r = 0; r < rounds; ++r) {
        const int chunk = remaining / (rounds - r);
        remaining -= chunk;
        if (chunk <= 0) continue;
        if (r > 0) update_uncertainty_masks(scene, mc, true, provider);
        const MappingTelemetry t = run_mapping(scene, mc, true, chunk);
        tel.phase_b.loss_history.insert(tel.phase_b.loss_history.end(),
                                        t.loss_history.begin(),
                                        t.loss_history.end());
        tel.phase_b.densified += t.densified;
        tel.phase_b.pruned += t.pruned;
    }
    return true;
}

}  // namespace

Session create_session(const std::string& root, const std::string& dataset,
                       const SessionConfig& config)
{
    open_dataset(dataset);  // fail before touching the session directory
    fs::create_directories(root);
    Session s{root, config};
    s.config.session.dataset =
        fs::absolute(dataset).lexically_normal().string();
    write_text_file(sub(root, "config.ini"), config_to_text(s.config));
    fs::remove(sub(root, "state.txt"));
    fs::remove(sub(root, "metrics.txt"));
    return s;
}

Session open_session(const std::string& root)
{
    return {root, load_config(sub(root, "config.ini"))};
}

SessionState session_state(const Session& s)
{
    SessionState st;
    std::ifstream in(sub(s.root, "state.txt"));
    std::string key, eq, value;
    while (in >> key >> eq >> value) {
        const bool v = value == "true";
        if (key == "tracked")
            st.tracked = v;
        else if (key == "phase_a")
            st.phase_a = v;
        else if (key == "phase_b")
            st.phase_b = v;
    }
    return st;
}

Trajectory track_session(Session& s)
{
    const Dataset ds = open_dataset(s.config.session.dataset);
    const size_t frames = ds.frames.size();
    const int stride = s.config.session.tracking_stride;
    const int gw = dba_grid_dim(ds.camera.width, stride);
    const int gh = dba_grid_dim(ds.camera.height, stride);
    const size_t cells = static_cast<size_t>(gw) * gh;

    DbaProblem prob;
    prob.camera = ds.camera;
    prob.stride = stride;
    prob.poses.assign(frames, SE3Pose());
    prob.inv_depth.resize(frames);
    prob.depth_prior.resize(frames);

    for (size_t f = 0; f < frames; ++f) {
        const Image depth = dataset_depth(ds, f);
        Eigen::VectorXd prior = Eigen::VectorXd::Zero(cells);
        std::vector<double> valid;
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx) {
                const Vec2 c = dba_grid_center(gx, gy, stride);
                const double d = depth.empty()
                                     ? 0.0
                                     : depth.at(static_cast<int>(c.x()),
                                                static_cast<int>(c.y()));
                if (d > 1e-6) {
                    prior[gy * gw + gx] = 1.0 / d;
                    valid.push_back(1.0 / d);
                }
            }
        double fill = 0.5;
        if (!valid.empty()) {
            std::nth_element(valid.begin(), valid.begin() + valid.size() / 2,
                             valid.end());
            fill = valid[valid.size() / 2];
        }
        Eigen::VectorXd init = prior;
        for (Eigen::Index i = 0; i < init.size(); ++i)
            if (init[i] <= 0.0) init[i] = fill;
        prob.depth_prior[f] = std::move(prior);
        prob.inv_depth[f] = std::move(init);
    }

    // an edge to the next frame plus one across two (flow fields composed)
    size_t measured = 0;
    for (size_t f = 0; f + 1 < frames; ++f) {
        const Image flow = dataset_flow(ds, f);
        Image flow2;
        if (f + 2 < frames) flow2 = dataset_flow(ds, f + 1);

        DbaEdge next;
        next.i = static_cast<int>(f);
        next.j = static_cast<int>(f) + 1;
        next.target.assign(cells, Vec2::Zero());
        next.confidence.assign(cells, 0.0);
        DbaEdge skip = next;
        skip.j = static_cast<int>(f) + 2;

        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx) {
                const size_t p = static_cast<size_t>(gy) * gw + gx;
                const Vec2 c = dba_grid_center(gx, gy, stride);
                Vec2 d1;
                if (!sample_flow(flow, c.x(), c.y(), &d1)) continue;
                next.target[p] = c + d1;
                next.confidence[p] = 1.0;
                ++measured;
                Vec2 d2;
                if (!flow2.empty() &&
                    sample_flow(flow2, next.target[p].x(), next.target[p].y(),
                                &d2)) {
                    skip.target[p] = next.target[p] + d2;
                    skip.confidence[p] = 1.0;
                }
            }
        prob.edges.push_back(std::move(next));
        if (!flow2.empty()) prob.edges.push_back(std::move(skip));
    }
    if (frames > 1 && measured == 0)
        throw IoError("tracking found no usable flow measurements under " +
                      ds.root + "/flow");

    apply_model_variances(s, ds, prob);
    if (frames > 1) dba_solve(prob, s.config.tracking);

    Trajectory traj(frames);
    for (size_t f = 0; f < frames; ++f)
        traj[f] = {ds.frames[f].time, prob.poses[f]};
    save_trajectory(sub(s.root, "trajectory.txt"), traj);

    SessionState st;  // mapping phases go stale when the poses change
    st.tracked = true;
    save_state(s, st);
    return traj;
}

SessionTelemetry map_session(Session& s, int max_phases)
{
    const Dataset ds = open_dataset(s.config.session.dataset);
    SessionState st = session_state(s);
    if (!st.tracked || !fs::exists(sub(s.root, "trajectory.txt")))
        throw IoError("session " + s.root + " has no trajectory; track first");
    Trajectory traj = load_trajectory(sub(s.root, "trajectory.txt"));
    if (traj.size() != ds.frames.size())
        throw IoError("trajectory.txt does not match the dataset length");

    SessionTelemetry tel;
    int budget = max_phases;
    if (!st.phase_a && budget-- > 0) {
        MapperScene scene = assemble_scene(ds, traj, s.config);
        tel.phase_a = run_mapping(scene, s.config.mapping, false,
                                  s.config.session.static_iterations);
        save_scene(s, scene, traj, false);
        st.phase_a = true;
        save_state(s, st);
    }

    if (st.phase_a && !st.phase_b && budget-- > 0) {
        // always continue from the checkpoint bytes, so a resumed run is
        // indistinguishable from an uninterrupted one
        MapperScene scene = load_session_scene(s, ds);
        tel.dynamic_ran = run_dynamic_phase(s, ds, scene, tel);
        save_scene(s, scene, traj, tel.dynamic_ran);
        st.phase_b = true;
        save_state(s, st);
    }
    return tel;
}

MapperScene load_session_scene(const Session& s, const Dataset& ds)
{
    MapperScene scene;
    scene.camera = ds.camera;
    scene.gaussians = load_ply(sub(s.root, "model.ply"));
    scene.uncertainty = UncertaintyNet::load(sub(s.root, "uncertainty.bin"));
    scene.bindings.assign(scene.gaussians.size(), {});
    if (fs::exists(sub(s.root, "bindings.txt")))
        scene.bindings =
            load_bindings(sub(s.root, "bindings.txt"), scene.gaussians.size());
    if (fs::exists(sub(s.root, "scaffold.txt")))
        scene.scaffold = load_scaffold(sub(s.root, "scaffold.txt"));

    const SessionRig rig = load_session_rig(s, ds);
    for (size_t k = 0; k < rig.kf_frames.size(); ++k) {
        const size_t f = rig.kf_frames[k];
        Keyframe kf;
        kf.index = static_cast<int>(f);
        kf.time = ds.frames[f].time;
        kf.color = dataset_rgb(ds, f);
        kf.depth = dataset_depth(ds, f);
        kf.cam_to_world = rig.traj[f].pose;
        kf.cam_to_world_end = rig.kf_end[k];
        kf.log_gain = rig.kf_gain[k];
        kf.offset = rig.kf_offset[k];
        scene.keyframes.push_back(std::move(kf));
    }
    return scene;
}

Image render_session_view(const Session& s, size_t pose_index, double time,
                          bool blur)
{
    const Dataset ds = open_dataset(s.config.session.dataset);
    const MapperScene scene = load_session_scene(s, ds);
    const SessionRig rig = load_session_rig(s, ds);
    if (pose_index >= rig.traj.size())
        throw ConfigError("pose index " + std::to_string(pose_index) +
                          " out of range; the trajectory has " +
                          std::to_string(rig.traj.size()) + " poses");
    FrameRig fr;
    if (blur) {
        fr = rig.at(pose_index);
    } else {
        fr.open = rig.traj[pose_index].pose;
        fr.end = fr.open;
    }
    return render_rigged(scene, s.config.mapping, time,
                         !scene.scaffold.nodes.empty(), fr);
}

std::string evaluate_session(const Session& s, const std::string& reference_root)
{
    const Dataset ds = open_dataset(s.config.session.dataset);
    const Dataset ref = open_dataset(reference_root);
    if (ref.frames.size() != ds.frames.size())
        throw MissingAssociation(
            "reference sequence length differs from the session dataset");
    for (size_t f = 0; f < ds.frames.size(); ++f)
        if (std::abs(ref.frames[f].time - ds.frames[f].time) > 1e-6)
            throw MissingAssociation(
                "reference timestamps do not line up with the session dataset");

    const MapperScene scene = load_session_scene(s, ds);
    const SessionRig rig = load_session_rig(s, ds);
    const bool dynamic = !scene.scaffold.nodes.empty();

    std::vector<char> is_kf(ds.frames.size(), 0);
    for (size_t f : rig.kf_frames) is_kf[f] = 1;

    struct Pool {
        double sum = 0.0;
        size_t n = 0;
        void add(double v) { sum += v; ++n; }
        bool any() const { return n > 0; }
        double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    };
    Pool p_all, p_train, p_held, m_all, m_train, m_held, p_dyn, p_stat;
    double beta_dyn = 0.0, beta_stat = 0.0;
    size_t beta_dyn_n = 0, beta_stat_n = 0;

    const double cap = 99.0;  // reported PSNR saturates here
    for (size_t f = 0; f < ds.frames.size(); ++f) {
        const Image rendered = render_rigged(scene, s.config.mapping,
                                             ds.frames[f].time, dynamic,
                                             rig.at(f));
        const Image truth = dataset_rgb(ref, f);
        const double pv = std::min(psnr(rendered, truth), cap);
        const double sv = ssim_mean(rendered, truth);
        p_all.add(pv);
        m_all.add(sv);
        (is_kf[f] ? p_train : p_held).add(pv);
        (is_kf[f] ? m_train : m_held).add(sv);

        const Image ids = dataset_objects(ref, f);
        if (ids.empty()) continue;
        BinaryMask dyn(ids.width(), ids.height());
        BinaryMask stat(ids.width(), ids.height());
        for (int y = 0; y < ids.height(); ++y)
            for (int x = 0; x < ids.width(); ++x) {
                const bool moving = std::lround(ids.at(x, y)) > 0;
                dyn.set(x, y, moving);
                stat.set(x, y, !moving);
            }
        if (dyn.count()) p_dyn.add(std::min(psnr(rendered, truth, dyn), cap));
        if (stat.count()) p_stat.add(std::min(psnr(rendered, truth, stat), cap));

        const Image beta = uncertainty_map(scene.uncertainty, truth, rendered);
        for (int y = 0; y < ids.height(); ++y)
            for (int x = 0; x < ids.width(); ++x) {
                if (dyn.at(x, y)) {
                    beta_dyn += beta.at(x, y);
                    ++beta_dyn_n;
                } else {
                    beta_stat += beta.at(x, y);
                    ++beta_stat_n;
                }
            }
    }

    size_t dynamic_splats = 0;
    for (const GaussianBinding& b : scene.bindings)
        dynamic_splats += !b.nodes.empty();

    std::ostringstream out;
    out << std::setprecision(17);
    if (ref.groundtruth.size() >= 3 && rig.traj.size() >= 3)
        out << "ate_cm = " << ate_rmse(rig.traj, ref.groundtruth) * 100.0
            << '\n';
    if (beta_dyn_n && beta_stat_n) {
        const double bd = beta_dyn / static_cast<double>(beta_dyn_n);
        const double bs = beta_stat / static_cast<double>(beta_stat_n);
        out << "beta_sq_dynamic = " << bd << '\n';
        out << "beta_sq_ratio = " << bd / bs << '\n';
        out << "beta_sq_static = " << bs << '\n';
    }
    out << "frames = " << ds.frames.size() << '\n';
    out << "gaussians = " << scene.gaussians.size() << '\n';
    out << "gaussians_dynamic = " << dynamic_splats << '\n';
    out << "keyframes = " << rig.kf_frames.size() << '\n';
    out << "psnr = " << p_all.mean() << '\n';
    if (p_dyn.any()) out << "psnr_dynamic = " << p_dyn.mean() << '\n';
    if (p_held.any()) out << "psnr_heldout = " << p_held.mean() << '\n';
    if (p_stat.any()) out << "psnr_static = " << p_stat.mean() << '\n';
    out << "psnr_train = " << p_train.mean() << '\n';
    out << "ssim = " << m_all.mean() << '\n';
    if (m_held.any()) out << "ssim_heldout = " << m_held.mean() << '\n';
    out << "ssim_train = " << m_train.mean() << '\n';

    write_text_file(sub(s.root, "metrics.txt"), out.str());
    return out.str();
}

}  // namespace splat4d
