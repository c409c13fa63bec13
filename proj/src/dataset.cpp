#include "splat4d/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "splat4d/errors.hpp"
#include "splat4d/io.hpp"

namespace fs = std::filesystem;

namespace splat4d {

namespace {

constexpr double kAssociationTolerance = 0.02;

std::vector<std::string> data_lines(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        const size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        out.push_back(line);
    }
    return out;
}

std::vector<std::pair<double, std::string>> parse_list(const std::string& path)
{
    std::vector<std::pair<double, std::string>> out;
    for (const std::string& line : data_lines(path)) {
        std::istringstream in(line);
        double time = 0.0;
        std::string file;
        if (!(in >> time >> file))
            throw IoError("bad frame list line in " + path + ": '" + line + "'");
        out.emplace_back(time, file);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::string frame_stamp(double time)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", time);
    return buf;
}

Trajectory load_trajectory(const std::string& path)
{
    Trajectory out;
    std::vector<std::string> lines;
    try {
        lines = data_lines(path);
    } catch (const IoError& e) {
        throw MalformedTrajectory(e.what());
    }
    for (const std::string& line : lines) {
        std::istringstream in(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(in >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
            throw MalformedTrajectory("bad trajectory line in " + path + ": '" +
                                      line + "'");
        TrajectoryPose tp;
        tp.time = t;
        tp.pose = SE3Pose(Quat(qw, qx, qy, qz), Vec3(tx, ty, tz));
        out.push_back(tp);
    }
    std::sort(out.begin(), out.end(),
              [](const TrajectoryPose& a, const TrajectoryPose& b) {
                  return a.time < b.time;
              });
    return out;
}

void save_trajectory(const std::string& path, const Trajectory& trajectory)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "# time tx ty tz qx qy qz qw\n" << std::setprecision(17);
    for (const TrajectoryPose& tp : trajectory) {
        const Quat q = tp.pose.rotation;
        const Vec3& t = tp.pose.translation;
        out << tp.time << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' '
            << q.x << ' ' << q.y << ' ' << q.z << ' ' << q.w << '\n';
    }
}

Dataset open_dataset(const std::string& root)
{
    if (!fs::is_directory(root)) throw IoError("no dataset at " + root);

    Dataset ds;
    ds.root = root;

    {
        std::ifstream in(root + "/camera.txt");
        if (!in) throw IoError("missing camera.txt in " + root);
        std::string line;
        do {
            if (!std::getline(in, line)) line.clear();
        } while (!line.empty() && line[0] == '#');
        std::istringstream ls(line);
        if (!(ls >> ds.camera.width >> ds.camera.height >> ds.camera.fx >>
              ds.camera.fy >> ds.camera.cx >> ds.camera.cy) ||
            ds.camera.width <= 0 || ds.camera.height <= 0)
            throw IoError("bad camera.txt in " + root);
    }

    const auto rgb = parse_list(root + "/rgb.txt");
    if (rgb.empty()) throw MissingAssociation("empty rgb list in " + root);

    if (fs::exists(root + "/depth.txt")) {
        const auto depth = parse_list(root + "/depth.txt");
        // greedy nearest-timestamp pairing, same policy as the evaluator
        std::vector<std::tuple<double, size_t, size_t>> cand;
        for (size_t i = 0; i < rgb.size(); ++i)
            for (size_t j = 0; j < depth.size(); ++j) {
                const double dt = std::abs(rgb[i].first - depth[j].first);
                if (dt <= kAssociationTolerance) cand.emplace_back(dt, i, j);
            }
        std::sort(cand.begin(), cand.end());
        std::vector<uint8_t> used_r(rgb.size(), 0), used_d(depth.size(), 0);
        std::vector<std::pair<size_t, size_t>> pairs;
        for (const auto& [dt, i, j] : cand) {
            (void)dt;
            if (used_r[i] || used_d[j]) continue;
            used_r[i] = used_d[j] = 1;
            pairs.emplace_back(i, j);
        }
        if (pairs.empty())
            throw MissingAssociation("no rgb/depth pairs within tolerance in " +
                                     root);
        std::sort(pairs.begin(), pairs.end());
        for (const auto& [i, j] : pairs)
            ds.frames.push_back({rgb[i].first, rgb[i].second, depth[j].second});
    } else {
        for (const auto& [time, file] : rgb) ds.frames.push_back({time, file, ""});
    }

    if (fs::exists(root + "/groundtruth.txt"))
        ds.groundtruth = load_trajectory(root + "/groundtruth.txt");
    if (fs::exists(root + "/groundtruth_end.txt"))
        ds.groundtruth_end = load_trajectory(root + "/groundtruth_end.txt");
    if (fs::exists(root + "/exposure.txt")) {
        for (const std::string& line : data_lines(root + "/exposure.txt")) {
            std::istringstream in(line);
            ExposureRecord rec;
            if (!(in >> rec.time >> rec.log_gain >> rec.offset))
                throw IoError("bad exposure line in " + root + ": '" + line + "'");
            ds.exposure.push_back(rec);
        }
    }
    return ds;
}

Image dataset_rgb(const Dataset& ds, size_t frame)
{
    return load_png_rgb(ds.root + "/" + ds.frames.at(frame).rgb_path);
}

Image dataset_depth(const Dataset& ds, size_t frame)
{
    const std::string& rel = ds.frames.at(frame).depth_path;
    if (rel.empty()) return Image();
    return load_png_depth(ds.root + "/" + rel);
}

Image dataset_depth_exact(const Dataset& ds, size_t frame)
{
    const std::string path =
        ds.root + "/depth32/" + frame_stamp(ds.frames.at(frame).time) + ".bin";
    if (!fs::exists(path)) return Image();
    Image depth = load_float_image(path);
    if (depth.channels() != 1)
        throw IoError("depth raster is not single channel: " + path);
    return depth;
}

Image dataset_flow(const Dataset& ds, size_t frame)
{
    const std::string path =
        ds.root + "/flow/" + frame_stamp(ds.frames.at(frame).time) + ".bin";
    Image flow = load_float_image(path);
    if (flow.channels() != 2)
        throw IoError("flow raster is not two-channel: " + path);
    return flow;
}

Image dataset_objects(const Dataset& ds, size_t frame)
{
    const std::string path =
        ds.root + "/objects/" + frame_stamp(ds.frames.at(frame).time) + ".bin";
    if (!fs::exists(path)) return Image();
    Image ids = load_float_image(path);
    if (ids.channels() != 1)
        throw IoError("object-id raster is not single channel: " + path);
    return ids;
}

PointTracks load_tracks(const std::string& path,
                        const std::vector<double>& timestamps)
{
    PointTracks out;
    out.timestamps = timestamps;

    std::vector<long> ids;  // insertion order of first appearance
    auto track_slot = [&](long id) -> size_t {
        for (size_t k = 0; k < ids.size(); ++k)
            if (ids[k] == id) return k;
        ids.push_back(id);
        out.positions.emplace_back(timestamps.size(), Vec3::Zero());
        out.visible.emplace_back(timestamps.size(), 0);
        return ids.size() - 1;
    };
    // Samples at times outside the requested grid are skipped, so a table
    // covering every frame can be loaded on a keyframe subset.
    auto time_slot = [&](double t) -> long {
        for (size_t m = 0; m < timestamps.size(); ++m)
            if (std::abs(timestamps[m] - t) < 1e-6) return static_cast<long>(m);
        return -1;
    };

    for (const std::string& line : data_lines(path)) {
        std::istringstream in(line);
        long id;
        double t, x, y, z;
        int vis;
        if (!(in >> id >> t >> x >> y >> z >> vis))
            throw IoError("bad track line in " + path + ": '" + line + "'");
        const long m = time_slot(t);
        if (m < 0) continue;
        const size_t k = track_slot(id);
        out.positions[k][m] = Vec3(x, y, z);
        out.visible[k][m] = vis ? 1 : 0;
    }
    return out;
}

}  // namespace splat4d
