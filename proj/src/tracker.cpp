#include "splat4d/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "splat4d/errors.hpp"
#include "splat4d/rasterizer.hpp"

namespace splat4d {

int dba_grid_dim(int size, int stride)
{
    if (stride < 1 || size < stride)
        throw Error("image too small for the bundle-adjustment grid");
    return size / stride;
}

Vec2 dba_grid_center(int gx, int gy, int stride)
{
    return Vec2(gx * stride + stride * 0.5, gy * stride + stride * 0.5);
}

namespace {

Vec3 grid_ray(const PinholeCamera& cam, int gx, int gy, int stride)
{
    const Vec2 px = dba_grid_center(gx, gy, stride);
    return Vec3((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0);
}

}  // namespace

Correspondences induced_correspondences(const PinholeCamera& camera,
                                        const SE3Pose& cam_to_world_i,
                                        const SE3Pose& cam_to_world_j,
                                        const Eigen::VectorXd& inv_depth_i,
                                        int stride)
{
    const int gw = dba_grid_dim(camera.width, stride);
    const int gh = dba_grid_dim(camera.height, stride);
    if (inv_depth_i.size() != static_cast<Eigen::Index>(gw) * gh)
        throw ShapeMismatch("inverse depth grid does not match the camera");

    const SE3Pose rel = cam_to_world_j.inverse() * cam_to_world_i;
    Correspondences out;
    out.pixels.resize(static_cast<size_t>(gw) * gh, Vec2::Zero());
    out.valid.assign(static_cast<size_t>(gw) * gh, 0);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            const size_t p = static_cast<size_t>(gy) * gw + gx;
            const double lambda = inv_depth_i[static_cast<Eigen::Index>(p)];
            if (lambda <= 0.0) continue;
            const Vec3 y = rel.apply(grid_ray(camera, gx, gy, stride) / lambda);
            if (y.z() < raster::kNearClip) continue;
            out.pixels[p] = camera.project(y);
            out.valid[p] = 1;
        }
    return out;
}

double mean_induced_flow(const PinholeCamera& camera,
                         const SE3Pose& cam_to_world_i,
                         const SE3Pose& cam_to_world_j,
                         const Eigen::VectorXd& inv_depth_i, int stride)
{
    Correspondences c = induced_correspondences(camera, cam_to_world_i,
                                                cam_to_world_j, inv_depth_i, stride);
    const int gw = dba_grid_dim(camera.width, stride);
    double acc = 0.0;
    size_t n = 0;
    for (size_t p = 0; p < c.pixels.size(); ++p) {
        if (!c.valid[p]) continue;
        const Vec2 src = dba_grid_center(static_cast<int>(p) % gw,
                                         static_cast<int>(p) / gw, stride);
        acc += (c.pixels[p] - src).norm();
        ++n;
    }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

namespace {

struct DepthEntry {            // one inverse-depth variable during an iteration
    double c = 0.0;            // diagonal of H
    double rhs = 0.0;          // -J^T W r
    std::map<int, Vec6> e;     // coupling into each free pose block
};

}  // namespace

DbaReport dba_solve(DbaProblem& problem, const DbaOptions& options)
{
    const int frames = static_cast<int>(problem.poses.size());
    if (frames < 2) throw Error("bundle adjustment needs at least two poses");
    const int gw = dba_grid_dim(problem.camera.width, problem.stride);
    const int gh = dba_grid_dim(problem.camera.height, problem.stride);
    const Eigen::Index grid = static_cast<Eigen::Index>(gw) * gh;
    if (static_cast<int>(problem.inv_depth.size()) != frames)
        throw ShapeMismatch("one inverse-depth grid per pose");
    for (const Eigen::VectorXd& d : problem.inv_depth)
        if (d.size() != grid) throw ShapeMismatch("inverse-depth grid size");
    if (!problem.depth_prior.empty() &&
        static_cast<int>(problem.depth_prior.size()) != frames)
        throw ShapeMismatch("one depth prior per pose when priors are given");
    if (!problem.beta_sq.empty() &&
        static_cast<int>(problem.beta_sq.size()) != frames)
        throw ShapeMismatch("one variance grid per pose when variances are given");
    for (const DbaEdge& e : problem.edges) {
        if (e.i < 0 || e.j < 0 || e.i >= frames || e.j >= frames || e.i == e.j)
            throw Error("bundle-adjustment edge indexes a missing pose");
        if (e.target.size() != static_cast<size_t>(grid) ||
            e.confidence.size() != static_cast<size_t>(grid))
            throw ShapeMismatch("edge targets must cover the grid");
    }

    const PinholeCamera& cam = problem.camera;
    auto beta_at = [&](int frame, Eigen::Index p) {
        return problem.beta_sq.empty() ? 1.0
                                       : problem.beta_sq[static_cast<size_t>(frame)][p];
    };
    auto prior_at = [&](int frame, Eigen::Index p) {
        return problem.depth_prior.empty()
                   ? 0.0
                   : problem.depth_prior[static_cast<size_t>(frame)][p];
    };

    // pose block index for every non-anchored frame
    const int free = frames - 1;
    auto block_of = [](int frame) { return frame - 1; };

    DbaReport report;
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        Eigen::MatrixXd b_mat = Eigen::MatrixXd::Zero(6 * free, 6 * free);
        Eigen::VectorXd b_rhs = Eigen::VectorXd::Zero(6 * free);
        std::vector<DepthEntry> depth(static_cast<size_t>(frames) * grid);
        double cost = 0.0;

        for (const DbaEdge& edge : problem.edges) {
            const SE3Pose rel =
                problem.poses[static_cast<size_t>(edge.j)].inverse() *
                problem.poses[static_cast<size_t>(edge.i)];
            const Mat3 r_rel = rel.rotation_matrix();
            for (Eigen::Index p = 0; p < grid; ++p) {
                const double conf = edge.confidence[static_cast<size_t>(p)];
                if (conf <= 0.0) continue;
                const double lambda = problem.inv_depth[static_cast<size_t>(edge.i)][p];
                if (lambda <= 0.0) continue;
                const Vec3 x_i =
                    grid_ray(cam, static_cast<int>(p) % gw, static_cast<int>(p) / gw,
                             problem.stride) /
                    lambda;
                const Vec3 y = rel.apply(x_i);
                if (y.z() < raster::kNearClip) continue;

                const Vec2 r = cam.project(y) - edge.target[static_cast<size_t>(p)];
                const double w = 1.0 / (conf * beta_at(edge.i, p));
                cost += w * r.squaredNorm();

                Eigen::Matrix<double, 2, 3> du;
                const double iz = 1.0 / y.z();
                du << cam.fx * iz, 0.0, -cam.fx * y.x() * iz * iz,
                    0.0, cam.fy * iz, -cam.fy * y.y() * iz * iz;

                Eigen::Matrix<double, 2, 6> j_i, j_j;
                j_i.block<2, 3>(0, 0) = du * (r_rel * (-skew(x_i)));
                j_i.block<2, 3>(0, 3) = du * r_rel;
                j_j.block<2, 3>(0, 0) = du * skew(y);
                j_j.block<2, 3>(0, 3) = -du;

                const Vec2 j_lambda = du * (r_rel * (-x_i / lambda));

                DepthEntry& d = depth[static_cast<size_t>(edge.i) * grid + p];
                d.c += w * j_lambda.squaredNorm();
                d.rhs -= w * j_lambda.dot(r);

                const bool free_i = edge.i != 0;
                const bool free_j = edge.j != 0;
                if (free_i) {
                    const int bi = block_of(edge.i);
                    b_mat.block<6, 6>(6 * bi, 6 * bi) += w * j_i.transpose() * j_i;
                    b_rhs.segment<6>(6 * bi) -= w * j_i.transpose() * r;
                    d.e.try_emplace(bi, Vec6::Zero()).first->second +=
                        w * j_i.transpose() * j_lambda;
                }
                if (free_j) {
                    const int bj = block_of(edge.j);
                    b_mat.block<6, 6>(6 * bj, 6 * bj) += w * j_j.transpose() * j_j;
                    b_rhs.segment<6>(6 * bj) -= w * j_j.transpose() * r;
                    d.e.try_emplace(bj, Vec6::Zero()).first->second +=
                        w * j_j.transpose() * j_lambda;
                }
                if (free_i && free_j) {
                    const int bi = block_of(edge.i), bj = block_of(edge.j);
                    const Mat6 cross = w * j_i.transpose() * j_j;
                    b_mat.block<6, 6>(6 * bi, 6 * bj) += cross;
                    b_mat.block<6, 6>(6 * bj, 6 * bi) += cross.transpose();
                }
            }
        }

        if (options.depth_prior_weight > 0.0 && !problem.depth_prior.empty()) {
            for (int f = 0; f < frames; ++f)
                for (Eigen::Index p = 0; p < grid; ++p) {
                    const double prior = prior_at(f, p);
                    if (prior <= 0.0) continue;
                    const double w = options.depth_prior_weight / beta_at(f, p);
                    const double r = problem.inv_depth[static_cast<size_t>(f)][p] - prior;
                    cost += w * r * r;
                    DepthEntry& d = depth[static_cast<size_t>(f) * grid + p];
                    d.c += w;
                    d.rhs -= w * r;
                }
        }

        if (iter == 0) report.initial_cost = cost;
        report.final_cost = cost;

        // Marquardt damping, then eliminate the (diagonal) depth block.
        b_mat.diagonal() *= 1.0 + options.damping;
        for (DepthEntry& d : depth) d.c *= 1.0 + options.damping;

        for (const DepthEntry& d : depth) {
            if (d.c <= 0.0) continue;
            const double inv_c = 1.0 / d.c;
            for (const auto& [ba, ea] : d.e) {
                b_rhs.segment<6>(6 * ba) -= ea * (inv_c * d.rhs);
                for (const auto& [bb, eb] : d.e)
                    b_mat.block<6, 6>(6 * ba, 6 * bb) -= ea * inv_c * eb.transpose();
            }
        }

        const Eigen::VectorXd delta_pose = b_mat.ldlt().solve(b_rhs);

        for (size_t idx = 0; idx < depth.size(); ++idx) {
            const DepthEntry& d = depth[idx];
            if (d.c <= 0.0) continue;
            double num = d.rhs;
            for (const auto& [ba, ea] : d.e)
                num -= ea.dot(delta_pose.segment<6>(6 * ba));
            const int f = static_cast<int>(idx / static_cast<size_t>(grid));
            const Eigen::Index p = static_cast<Eigen::Index>(idx % static_cast<size_t>(grid));
            double& lambda = problem.inv_depth[static_cast<size_t>(f)][p];
            lambda = std::max(options.min_inv_depth, lambda + num / d.c);
        }

        double max_step = 0.0;
        for (int f = 1; f < frames; ++f) {
            const Vec6 d = delta_pose.segment<6>(6 * block_of(f));
            problem.poses[static_cast<size_t>(f)] =
                problem.poses[static_cast<size_t>(f)] * se3_exp(Twist::from_coeffs(d));
            max_step = std::max(max_step, d.cwiseAbs().maxCoeff());
        }

        report.iterations = iter + 1;
        if (max_step < options.pose_tolerance) {
            report.converged = true;
            break;
        }
    }
    return report;
}

}  // namespace splat4d
