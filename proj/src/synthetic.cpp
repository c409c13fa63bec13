#include "splat4d/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <vector>

#include "splat4d/dataset.hpp"
#include "splat4d/errors.hpp"
#include "splat4d/io.hpp"
#include "splat4d/parallel.hpp"

namespace fs = std::filesystem;

namespace splat4d {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Material {
    Vec3 a = Vec3::Zero();
    Vec3 b = Vec3::Zero();
    double cell = 0.1;
};

struct Prim {
    bool sphere = false;
    bool mover = false;
    int id = 0;  // 1.. for movers, 0 for static dressing
    SE3Pose base;
    Vec3 half = Vec3::Zero();  // box half extents; sphere radius in x
    Material mat;
    Vec3 lin_amp = Vec3::Zero();
    Vec3 lin_freq = Vec3::Zero();
    Vec3 lin_phase = Vec3::Zero();
    Vec3 spin_axis = Vec3::UnitY();
    double spin_rate = 0.0;
};

struct Scene {
    PinholeCamera camera;
    Vec3 room_min, room_max;
    Material room_mat;
    Vec3 light = Vec3::Zero();
    double cam_phase[5] = {};
    std::vector<Prim> prims;
};

SE3Pose prim_pose(const Prim& p, double t)
{
    if (!p.mover) return p.base;
    Vec3 c = p.base.translation;
    for (int a = 0; a < 3; ++a)
        c[a] += p.lin_amp[a] * std::sin(p.lin_freq[a] * t + p.lin_phase[a]);
    const Quat q = quat_mul(quat_from_axis_angle(p.spin_axis * (p.spin_rate * t)),
                            p.base.rotation);
    return SE3Pose(q, c);
}

Scene build_scene(const SyntheticSpec& spec)
{
    if (spec.width < 8 || spec.height < 8)
        throw InvalidSpec("image must be at least 8x8");
    if (spec.focal <= 0.0) throw InvalidSpec("focal must be positive");
    if (spec.frames < 2) throw InvalidSpec("need at least two frames");
    if (spec.dt <= 0.0) throw InvalidSpec("frame spacing must be positive");
    if (spec.shutter_fraction < 0.0 || spec.shutter_fraction > 0.95)
        throw InvalidSpec("shutter fraction outside [0, 0.95]");
    if (spec.blur_samples < 1) throw InvalidSpec("need at least one blur sample");
    if (spec.moving_objects < 0 || spec.moving_objects > 3)
        throw InvalidSpec("supports zero to three movers");
    if (spec.tracks_per_face < 1) throw InvalidSpec("tracks_per_face must be >= 1");
    if (spec.camera_amplitude < 0.0 || spec.camera_amplitude > 0.35)
        throw InvalidSpec("camera sway outside [0, 0.35]");
    if (spec.motion_amplitude < 0.0 || spec.motion_amplitude > 0.3)
        throw InvalidSpec("mover travel outside [0, 0.3]");
    // The dressing below assumes at least this much room around the desk.
    if ((spec.room_min.array() > Vec3(-1.2, -1.2, -0.4).array()).any() ||
        (spec.room_max.array() < Vec3(1.2, 0.9, 3.0).array()).any())
        throw InvalidSpec("room too small for the desk dressing");

    std::mt19937_64 rng(spec.seed);
    // Own uniform helper so file bytes do not depend on the stdlib's
    // distribution implementation.
    auto u01 = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    auto ur = [&](double lo, double hi) { return lo + (hi - lo) * u01(); };
    auto unit_axis = [&] {
        const Vec3 v(ur(-1, 1), ur(-1, 1), ur(-1, 1));
        return v.norm() > 1e-9 ? Vec3(v.normalized()) : Vec3::UnitY();
    };
    auto clamp01 = [](double v) { return std::min(0.95, std::max(0.1, v)); };
    auto material = [&](double cell) {
        Material m;
        m.cell = cell;
        m.a = Vec3(ur(0.15, 0.9), ur(0.15, 0.9), ur(0.15, 0.9));
        // rotated-and-flipped counterpart so the checker always has contrast
        m.b = Vec3(clamp01(1.05 - m.a.y()), clamp01(1.05 - m.a.z()),
                   clamp01(1.05 - m.a.x()));
        return m;
    };

    Scene sc;
    sc.camera.width = spec.width;
    sc.camera.height = spec.height;
    sc.camera.fx = sc.camera.fy = spec.focal;
    sc.camera.cx = spec.width / 2.0;
    sc.camera.cy = spec.height / 2.0;
    sc.room_min = spec.room_min;
    sc.room_max = spec.room_max;
    sc.light = Vec3(-0.35, -0.9, 0.25).normalized();
    for (double& p : sc.cam_phase) p = ur(0, 2 * M_PI);
    sc.room_mat = material(0.45);

    auto static_box = [&](const Vec3& c, const Vec3& half, double cell,
                          double yaw) {
        Prim p;
        p.base = SE3Pose(quat_from_axis_angle(Vec3(0, yaw, 0)), c);
        p.half = half;
        p.mat = material(cell);
        sc.prims.push_back(p);
    };
    // desk slab and props; +y is down, so tops sit at center_y - half_y
    static_box(Vec3(0.0, 0.62, 2.1), Vec3(0.8, 0.04, 0.45), 0.12, 0.0);
    static_box(Vec3(-0.45, 0.47, 2.25), Vec3(0.08, 0.11, 0.08), 0.05,
               ur(-0.4, 0.4));
    static_box(Vec3(0.5, 0.51, 1.95), Vec3(0.1, 0.07, 0.1), 0.06, ur(-0.4, 0.4));
    {
        Prim p;
        p.sphere = true;
        p.base = SE3Pose(Quat(), Vec3(0.1, 0.48, 2.35));
        p.half = Vec3(0.1, 0.1, 0.1);
        p.mat = material(0.05);
        sc.prims.push_back(p);
    }

    const double mover_x[3] = {-0.35, 0.05, 0.38};
    for (int i = 0; i < spec.moving_objects; ++i) {
        Prim p;
        p.mover = true;
        p.id = i + 1;
        const Vec3 c(mover_x[i], 0.18 + 0.06 * i, 1.75 + 0.15 * i);
        p.base = SE3Pose(quat_from_axis_angle(unit_axis() * ur(0.0, 0.3)), c);
        p.half = Vec3(0.12, 0.09, 0.1) * ur(0.9, 1.1);
        // movers wear a fixed high-contrast checker (seeded tint only) whose
        // cells rival the faces, so it survives blur and low resolutions and
        // unmodeled motion leaves unmistakably large residuals
        p.mat.cell = 0.11;
        {
            const double tint = ur(-0.06, 0.06);
            p.mat.a = Vec3(0.93 + tint, 0.9, 0.15);
            p.mat.b = Vec3(0.07, 0.1, 0.45 - tint);
        }
        for (int a = 0; a < 3; ++a) {
            p.lin_amp[a] = spec.motion_amplitude * ur(0.5, 1.0);
            p.lin_freq[a] = ur(0.7, 1.5);
            p.lin_phase[a] = ur(0, 2 * M_PI);
        }
        p.spin_axis = unit_axis();
        p.spin_rate = spec.spin_rate;
        sc.prims.push_back(p);
    }
    return sc;
}

SE3Pose camera_pose(const SyntheticSpec& spec, const Scene& sc, double t)
{
    const double* ph = sc.cam_phase;
    const double A = spec.camera_amplitude;
    const Vec3 p(A * std::sin(0.7 * t + ph[0]),
                 -0.08 + 0.3 * A * std::sin(1.1 * t + ph[1]),
                 -0.12 + 0.25 * A * std::sin(0.5 * t + ph[2]));
    const double yaw = spec.camera_yaw * std::sin(0.9 * t + ph[3]);
    const double pitch = 0.6 * spec.camera_yaw * std::sin(0.6 * t + ph[4]);
    const Quat q = quat_mul(quat_from_axis_angle(Vec3(0, yaw, 0)),
                            quat_from_axis_angle(Vec3(pitch, 0, 0)));
    return SE3Pose(q, p);
}

// --- ray casting ------------------------------------------------------------

struct Hit {
    double s = kInf;  // camera z-depth (ray direction has unit z in camera frame)
    int prim = -1;    // -1 = room wall
    int id = 0;
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
};

// Local-frame slab test; returns the entry distance or inf.
double box_enter(const Vec3& o, const Vec3& d, const Vec3& h, int* axis_out)
{
    double t_enter = -kInf, t_exit = kInf;
    int axis = -1;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (std::abs(o[a]) > h[a]) return kInf;
            continue;
        }
        double t1 = (-h[a] - o[a]) / d[a];
        double t2 = (h[a] - o[a]) / d[a];
        if (t1 > t2) std::swap(t1, t2);
        if (t1 > t_enter) {
            t_enter = t1;
            axis = a;
        }
        t_exit = std::min(t_exit, t2);
        if (t_exit < t_enter) return kInf;
    }
    if (axis < 0 || t_enter < 1e-9) return kInf;
    *axis_out = axis;
    return t_enter;
}

double sphere_enter(const Vec3& o, const Vec3& d, double r)
{
    const double A = d.squaredNorm();
    const double B = 2.0 * o.dot(d);
    const double C = o.squaredNorm() - r * r;
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) return kInf;
    const double t = (-B - std::sqrt(disc)) / (2.0 * A);
    return t > 1e-9 ? t : kInf;
}

// Scene poses frozen at one timestamp.
struct FramePrims {
    std::vector<SE3Pose> world_from_local;
    std::vector<SE3Pose> local_from_world;
};

FramePrims prims_at(const Scene& sc, double t)
{
    FramePrims fp;
    fp.world_from_local.reserve(sc.prims.size());
    fp.local_from_world.reserve(sc.prims.size());
    for (const Prim& p : sc.prims) {
        const SE3Pose pose = prim_pose(p, t);
        fp.world_from_local.push_back(pose);
        fp.local_from_world.push_back(pose.inverse());
    }
    return fp;
}

Hit cast_ray(const Scene& sc, const FramePrims& fp, const Vec3& org,
             const Vec3& dir)
{
    Hit h;
    // room walls seen from inside: nearest exit plane
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-12) continue;
        const double bound = dir[a] > 0 ? sc.room_max[a] : sc.room_min[a];
        const double t = (bound - org[a]) / dir[a];
        if (t > 1e-9 && t < h.s) {
            h.s = t;
            h.prim = -1;
            h.id = 0;
            h.normal = Vec3::Zero();
            h.normal[a] = dir[a] > 0 ? -1.0 : 1.0;
        }
    }
    if (h.s < kInf) h.point = org + h.s * dir;

    for (size_t i = 0; i < sc.prims.size(); ++i) {
        const Prim& p = sc.prims[i];
        const Vec3 o = fp.local_from_world[i].apply(org);
        const Vec3 d = fp.local_from_world[i].rotation.rotate(dir);
        int axis = -1;
        const double s = p.sphere ? sphere_enter(o, d, p.half.x())
                                  : box_enter(o, d, p.half, &axis);
        if (s >= h.s) continue;
        const Vec3 pl = o + s * d;
        Vec3 nl;
        if (p.sphere) {
            nl = pl / p.half.x();
        } else {
            nl = Vec3::Zero();
            nl[axis] = pl[axis] > 0 ? 1.0 : -1.0;
        }
        h.s = s;
        h.prim = static_cast<int>(i);
        h.id = p.id;
        h.point = fp.world_from_local[i].apply(pl);
        h.normal = fp.world_from_local[i].rotation.rotate(nl);
    }
    return h;
}

Vec3 shade(const Scene& sc, const FramePrims& fp, const Hit& h)
{
    const Material& m = h.prim < 0 ? sc.room_mat : sc.prims[h.prim].mat;
    // movers carry their texture with them; room and statics use world space
    const Vec3 pt =
        h.prim < 0 ? h.point : fp.local_from_world[h.prim].apply(h.point);
    const long long par = static_cast<long long>(std::floor(pt.x() / m.cell)) +
                          static_cast<long long>(std::floor(pt.y() / m.cell)) +
                          static_cast<long long>(std::floor(pt.z() / m.cell));
    const Vec3 albedo = (par & 1) ? m.b : m.a;
    const double ndl = std::max(0.0, h.normal.dot(sc.light));
    return albedo * (0.3 + 0.5 * ndl);
}

void render_hits(const Scene& sc, const FramePrims& fp, const SE3Pose& pose,
                 std::vector<Hit>& hits)
{
    const PinholeCamera& cam = sc.camera;
    hits.resize(static_cast<size_t>(cam.width) * cam.height);
    parallel_for(static_cast<size_t>(cam.height), [&](size_t y) {
        for (int x = 0; x < cam.width; ++x) {
            // unit z in the camera frame, so the ray parameter equals z-depth
            const Vec3 dir_cam((x + 0.5 - cam.cx) / cam.fx,
                               (y + 0.5 - cam.cy) / cam.fy, 1.0);
            const Vec3 dir = pose.rotation.rotate(dir_cam);
            hits[y * cam.width + x] = cast_ray(sc, fp, pose.translation, dir);
        }
    });
}

Image color_image(const SyntheticSpec& spec, const Scene& sc,
                  const SE3Pose& open, const SE3Pose& close, double time,
                  double log_gain, double offset)
{
    const FramePrims fp = prims_at(sc, time);
    Image acc(spec.width, spec.height, 3, 0.0);
    std::vector<Hit> hits;
    const int n = spec.blur_samples;
    for (int k = 0; k < n; ++k) {
        const double f = n > 1 ? static_cast<double>(k) / (n - 1) : 0.0;
        const SE3Pose pose = open * interpolate_pose(open, close, f);
        render_hits(sc, fp, pose, hits);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                const Vec3 c = shade(sc, fp, hits[y * spec.width + x]);
                for (int ch = 0; ch < 3; ++ch) acc.at(x, y, ch) += c[ch];
            }
    }
    const double gain = std::exp(log_gain);
    for (double& v : acc.storage()) v = gain * (v / n) + offset;
    return acc;
}

}  // namespace

PinholeCamera synthetic_camera(const SyntheticSpec& spec)
{
    return build_scene(spec).camera;
}

SE3Pose synthetic_camera_pose(const SyntheticSpec& spec, double time)
{
    const Scene sc = build_scene(spec);
    return camera_pose(spec, sc, time);
}

SE3Pose synthetic_object_pose(const SyntheticSpec& spec, int id, double time)
{
    const Scene sc = build_scene(spec);
    for (const Prim& p : sc.prims)
        if (p.mover && p.id == id) return prim_pose(p, time);
    throw InvalidSpec("no mover with id " + std::to_string(id));
}

Image synthetic_color(const SyntheticSpec& spec, const SE3Pose& open,
                      const SE3Pose& close, double time, double log_gain,
                      double offset)
{
    const Scene sc = build_scene(spec);
    return color_image(spec, sc, open, close, time, log_gain, offset);
}

Image synthetic_depth(const SyntheticSpec& spec, const SE3Pose& pose, double time)
{
    const Scene sc = build_scene(spec);
    const FramePrims fp = prims_at(sc, time);
    std::vector<Hit> hits;
    render_hits(sc, fp, pose, hits);
    Image depth(spec.width, spec.height, 1, 0.0);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            depth.at(x, y) = hits[y * spec.width + x].s;
    return depth;
}

Image synthetic_objects(const SyntheticSpec& spec, const SE3Pose& pose,
                        double time)
{
    const Scene sc = build_scene(spec);
    const FramePrims fp = prims_at(sc, time);
    std::vector<Hit> hits;
    render_hits(sc, fp, pose, hits);
    Image ids(spec.width, spec.height, 1, 0.0);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            ids.at(x, y) = hits[y * spec.width + x].id;
    return ids;
}

void write_synthetic_dataset(const SyntheticSpec& spec, const std::string& root)
{
    const Scene sc = build_scene(spec);
    for (const char* sub : {"", "/rgb", "/depth", "/depth32", "/flow", "/objects"})
        fs::create_directories(root + sub);

    {
        std::ofstream out(root + "/camera.txt");
        if (!out) throw IoError("cannot write " + root + "/camera.txt");
        out << "# width height fx fy cx cy\n"
            << sc.camera.width << ' ' << sc.camera.height << ' '
            << std::setprecision(17) << sc.camera.fx << ' ' << sc.camera.fy
            << ' ' << sc.camera.cx << ' ' << sc.camera.cy << '\n';
    }

    std::ofstream rgb_list(root + "/rgb.txt");
    std::ofstream depth_list(root + "/depth.txt");
    std::ofstream exposure(root + "/exposure.txt");
    if (!rgb_list || !depth_list || !exposure)
        throw IoError("cannot write frame lists in " + root);
    rgb_list << "# time path\n" << std::setprecision(17);
    depth_list << "# time path\n" << std::setprecision(17);
    exposure << "# time log_gain offset\n" << std::setprecision(17);

    Trajectory gt_open, gt_close;
    std::vector<Hit> hits;

    for (int i = 0; i < spec.frames; ++i) {
        const double t = i * spec.dt;
        const double t_next = (i + 1) * spec.dt;
        const std::string stamp = frame_stamp(t);
        const SE3Pose open = camera_pose(spec, sc, t);
        const SE3Pose close =
            camera_pose(spec, sc, t + spec.shutter_fraction * spec.dt);
        const double log_gain =
            spec.gain_amplitude * std::sin(2.1 * t + 0.4);
        const double offset =
            spec.offset_amplitude * std::sin(1.7 * t + 1.3);

        save_png_rgb(root + "/rgb/" + stamp + ".png",
                     color_image(spec, sc, open, close, t, log_gain, offset));

        const FramePrims fp = prims_at(sc, t);
        render_hits(sc, fp, open, hits);
        Image depth(spec.width, spec.height, 1, 0.0);
        Image ids(spec.width, spec.height, 1, 0.0);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                depth.at(x, y) = hits[y * spec.width + x].s;
                ids.at(x, y) = hits[y * spec.width + x].id;
            }
        save_png_depth(root + "/depth/" + stamp + ".png", depth);
        save_float_image(root + "/depth32/" + stamp + ".bin", depth);
        save_float_image(root + "/objects/" + stamp + ".bin", ids);

        if (i + 1 < spec.frames) {
            // forward flow: carry each hit with its mover (statics stay put),
            // reproject into the next shutter-open pose
            const SE3Pose next_inv = camera_pose(spec, sc, t_next).inverse();
            std::vector<SE3Pose> advect(sc.prims.size());
            for (size_t p = 0; p < sc.prims.size(); ++p)
                advect[p] = prim_pose(sc.prims[p], t_next)
                                .compose(fp.local_from_world[p]);
            Image flow(spec.width, spec.height, 2, 0.0);
            for (int y = 0; y < spec.height; ++y)
                for (int x = 0; x < spec.width; ++x) {
                    const Hit& h = hits[y * spec.width + x];
                    Vec3 pt = h.point;
                    if (h.prim >= 0 && sc.prims[h.prim].mover)
                        pt = advect[h.prim].apply(pt);
                    const Vec3 p_cam = next_inv.apply(pt);
                    if (p_cam.z() < 1e-6) continue;  // leaves flow at zero
                    const Vec2 px = sc.camera.project(p_cam);
                    flow.at(x, y, 0) = px.x() - (x + 0.5);
                    flow.at(x, y, 1) = px.y() - (y + 0.5);
                }
            save_float_image(root + "/flow/" + stamp + ".bin", flow);
        }

        rgb_list << t << " rgb/" << stamp << ".png\n";
        depth_list << t << " depth/" << stamp << ".png\n";
        exposure << t << ' ' << log_gain << ' ' << offset << '\n';
        gt_open.push_back({t, open});
        gt_close.push_back({t, close});
    }

    save_trajectory(root + "/groundtruth.txt", gt_open);
    save_trajectory(root + "/groundtruth_end.txt", gt_close);

    // lifted point tracks on mover faces; visibility by occlusion test
    std::ofstream tracks(root + "/tracks.txt");
    if (!tracks) throw IoError("cannot write " + root + "/tracks.txt");
    tracks << "# track_id time x y z visible (id = mover * 1000 + point)\n"
           << std::setprecision(17);
    const int n = spec.tracks_per_face;
    for (size_t pi = 0; pi < sc.prims.size(); ++pi) {
        const Prim& p = sc.prims[pi];
        if (!p.mover) continue;
        std::vector<Vec3> local;
        for (int face = 0; face < 6; ++face) {
            const int axis = face / 2;
            const double sign = face % 2 ? -1.0 : 1.0;
            const int b = (axis + 1) % 3, c = (axis + 2) % 3;
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    Vec3 q = Vec3::Zero();
                    q[axis] = sign * p.half[axis];
                    q[b] = ((j + 0.5) / n - 0.5) * 2.0 * p.half[b];
                    q[c] = ((k + 0.5) / n - 0.5) * 2.0 * p.half[c];
                    local.push_back(q);
                }
        }
        for (int i = 0; i < spec.frames; ++i) {
            const double t = i * spec.dt;
            const SE3Pose cam = camera_pose(spec, sc, t);
            const SE3Pose cam_inv = cam.inverse();
            const FramePrims fp = prims_at(sc, t);
            const SE3Pose obj = fp.world_from_local[pi];
            for (size_t k = 0; k < local.size(); ++k) {
                const Vec3 world = obj.apply(local[k]);
                const Vec3 p_cam = cam_inv.apply(world);
                bool vis = p_cam.z() > 1e-6;
                if (vis) {
                    const Vec2 px = sc.camera.project(p_cam);
                    vis = px.x() >= 0 && px.x() < spec.width && px.y() >= 0 &&
                          px.y() < spec.height;
                }
                if (vis) {
                    // the ray toward the point must hit this mover at the point
                    const Hit h =
                        cast_ray(sc, fp, cam.translation,
                                 cam.rotation.rotate(p_cam / p_cam.z()));
                    vis = h.prim == static_cast<int>(pi) &&
                          std::abs(h.s - p_cam.z()) < 1e-6 * p_cam.z();
                }
                tracks << p.id * 1000 + k << ' ' << t << ' ' << world.x() << ' '
                       << world.y() << ' ' << world.z() << ' ' << (vis ? 1 : 0)
                       << '\n';
            }
        }
    }
}

}  // namespace splat4d
