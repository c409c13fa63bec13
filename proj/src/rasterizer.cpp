#include "splat4d/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "splat4d/errors.hpp"
#include "splat4d/parallel.hpp"

namespace splat4d {

using namespace raster;

namespace {

// 2x3 perspective Jacobian at a camera-space point.
Eigen::Matrix<double, 2, 3> proj_jacobian(const PinholeCamera& cam, const Vec3& p) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> J;
  J << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz,
      0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  return J;
}

RenderCache::Projected project_one(const PosedGaussian& g, const PinholeCamera& cam,
                                   const Mat3& R_wc, const Vec3& t_wc) {
  RenderCache::Projected p;
  p.p_cam = R_wc * g.center + t_wc;
  if (p.p_cam.z() <= kNearClip) return p;
  if (g.opacity < kMinAlpha) return p;  // cannot pass the per-pixel threshold

  p.z = p.p_cam.z();
  p.mean2d = cam.project(p.p_cam);

  const Quat q = Quat::from_coeffs(g.rotation).normalized();
  const Mat3 R3 = q.to_matrix();
  const Vec3 s2 = (2.0 * g.log_scale).array().exp();
  const Mat3 cov_world = R3 * s2.asDiagonal() * R3.transpose();
  const Mat3 cov_cam = R_wc * cov_world * R_wc.transpose();
  const Eigen::Matrix<double, 2, 3> J = proj_jacobian(cam, p.p_cam);
  p.cov2d = J * cov_cam * J.transpose() + kLowpass * Mat2::Identity();

  const double det = p.cov2d.determinant();
  if (!(det > 0.0)) return p;
  const double inv_det = 1.0 / det;
  p.conic << p.cov2d(1, 1) * inv_det, -p.cov2d(0, 1) * inv_det,
      -p.cov2d(1, 0) * inv_det, p.cov2d(0, 0) * inv_det;

  const double mid = 0.5 * (p.cov2d(0, 0) + p.cov2d(1, 1));
  const double disc = std::sqrt(
      std::max(0.0, mid * mid - det));
  const double lambda_max = mid + disc;
  p.radius = 3.0 * std::sqrt(lambda_max) + 1e-6;
  p.valid = true;
  return p;
}

// Shared between forward and backward so replay is bit exact.
// Returns true when the splat contributes at this pixel center.
inline bool eval_splat(const RenderCache::Projected& p, double opacity, double px,
                       double py, double* alpha_out, double* gexp_out) {
  const double dx = px - p.mean2d.x();
  const double dy = py - p.mean2d.y();
  const double power =
      -0.5 * (p.conic(0, 0) * dx * dx + 2.0 * p.conic(0, 1) * dx * dy +
              p.conic(1, 1) * dy * dy);
  if (power < kPowerCutoff) return false;
  const double gexp = std::exp(power);
  const double alpha = std::min(kMaxAlpha, opacity * gexp);
  if (alpha < kMinAlpha) return false;
  *alpha_out = alpha;
  *gexp_out = gexp;
  return true;
}

struct TileRange {
  int x0, x1, y0, y1;  // inclusive tile indices; empty when x0 > x1
};

TileRange tile_range(const RenderCache::Projected& p, int tiles_x, int tiles_y) {
  TileRange r{0, -1, 0, -1};
  const double lo_x = p.mean2d.x() - p.radius, hi_x = p.mean2d.x() + p.radius;
  const double lo_y = p.mean2d.y() - p.radius, hi_y = p.mean2d.y() + p.radius;
  int x0 = static_cast<int>(std::floor(lo_x / kTileSize));
  int x1 = static_cast<int>(std::floor(hi_x / kTileSize));
  int y0 = static_cast<int>(std::floor(lo_y / kTileSize));
  int y1 = static_cast<int>(std::floor(hi_y / kTileSize));
  if (x1 < 0 || y1 < 0 || x0 >= tiles_x || y0 >= tiles_y) return r;
  r.x0 = std::max(x0, 0);
  r.x1 = std::min(x1, tiles_x - 1);
  r.y0 = std::max(y0, 0);
  r.y1 = std::min(y1, tiles_y - 1);
  return r;
}

void build_cache(const std::vector<PosedGaussian>& gaussians,
                 const PinholeCamera& cam, const SE3Pose& world_to_camera,
                 RenderCache& cache) {
  cache.width = cam.width;
  cache.height = cam.height;
  cache.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
  cache.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
  cache.proj.assign(gaussians.size(), {});
  cache.tile_lists.assign(static_cast<size_t>(cache.tiles_x) * cache.tiles_y, {});
  cache.n_contrib.assign(static_cast<size_t>(cam.width) * cam.height, 0);
  cache.t_final.assign(static_cast<size_t>(cam.width) * cam.height, 1.0);

  const Mat3 R_wc = world_to_camera.rotation_matrix();
  const Vec3& t_wc = world_to_camera.translation;
  parallel_for(gaussians.size(), [&](size_t i) {
    cache.proj[i] = project_one(gaussians[i], cam, R_wc, t_wc);
  });

  for (size_t i = 0; i < gaussians.size(); ++i) {
    const auto& p = cache.proj[i];
    if (!p.valid) continue;
    const TileRange r = tile_range(p, cache.tiles_x, cache.tiles_y);
    for (int ty = r.y0; ty <= r.y1; ++ty)
      for (int tx = r.x0; tx <= r.x1; ++tx)
        cache.tile_lists[static_cast<size_t>(ty) * cache.tiles_x + tx].push_back(
            static_cast<int>(i));
  }

  parallel_for(cache.tile_lists.size(), [&](size_t t) {
    auto& list = cache.tile_lists[t];
    std::sort(list.begin(), list.end(), [&](int a, int b) {
      if (cache.proj[a].z != cache.proj[b].z) return cache.proj[a].z < cache.proj[b].z;
      return a < b;
    });
  });
}

}  // namespace

RenderOutput render(const std::vector<PosedGaussian>& gaussians,
                    const PinholeCamera& cam, const SE3Pose& world_to_camera,
                    const Vec3& background, RenderCache* cache_out) {
  RenderCache local;
  RenderCache& cache = cache_out ? *cache_out : local;
  build_cache(gaussians, cam, world_to_camera, cache);

  RenderOutput out;
  out.color = Image(cam.width, cam.height, 3);
  out.depth = Image(cam.width, cam.height, 1);
  out.alpha = Image(cam.width, cam.height, 1);

  parallel_for(cache.tile_lists.size(), [&](size_t t) {
    const auto& list = cache.tile_lists[t];
    const int tx = static_cast<int>(t) % cache.tiles_x;
    const int ty = static_cast<int>(t) / cache.tiles_x;
    const int x_end = std::min((tx + 1) * kTileSize, cam.width);
    const int y_end = std::min((ty + 1) * kTileSize, cam.height);
    for (int y = ty * kTileSize; y < y_end; ++y) {
      for (int x = tx * kTileSize; x < x_end; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        double T = 1.0;
        Vec3 C = Vec3::Zero();
        double D = 0.0;
        int n = 0;
        for (int idx : list) {
          const auto& p = cache.proj[idx];
          double alpha, gexp;
          if (!eval_splat(p, gaussians[idx].opacity, px, py, &alpha, &gexp)) continue;
          const double T_next = T * (1.0 - alpha);
          if (T_next < kMinTransmittance) break;
          C += T * alpha * gaussians[idx].color;
          D += T * alpha * p.z;
          T = T_next;
          ++n;
        }
        const size_t pix = static_cast<size_t>(y) * cam.width + x;
        cache.n_contrib[pix] = n;
        cache.t_final[pix] = T;
        for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = C[c] + T * background[c];
        out.depth.at(x, y) = D;
        out.alpha.at(x, y) = 1.0 - T;
      }
    }
  });
  return out;
}

namespace {

// Pixel-space adjoints accumulated per splat before the projection backward.
struct PixelGrad {
  Vec2 mean2d = Vec2::Zero();
  Mat2 conic = Mat2::Zero();
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  double z = 0.0;
  bool touched = false;
};

}  // namespace

RenderGrads render_backward(const std::vector<PosedGaussian>& gaussians,
                            const PinholeCamera& cam,
                            const SE3Pose& world_to_camera, const Vec3& background,
                            const RenderCache& cache, const Image& d_color,
                            const Image& d_depth) {
  if (cache.width != cam.width || cache.height != cam.height ||
      cache.proj.size() != gaussians.size() ||
      cache.n_contrib.size() != static_cast<size_t>(cam.width) * cam.height) {
    throw MissingForwardCache("render_backward: cache does not match inputs");
  }
  if (d_color.width() != cam.width || d_color.height() != cam.height ||
      d_color.channels() != 3) {
    throw ShapeMismatch("render_backward: d_color shape");
  }
  const bool use_depth = !d_depth.empty();
  if (use_depth &&
      (d_depth.width() != cam.width || d_depth.height() != cam.height ||
       d_depth.channels() != 1)) {
    throw ShapeMismatch("render_backward: d_depth shape");
  }

  // Pass 1: per-tile compositing adjoints, reduced over tiles in fixed order.
  std::vector<std::vector<PixelGrad>> tile_grads(cache.tile_lists.size());
  parallel_for(cache.tile_lists.size(), [&](size_t t) {
    const auto& list = cache.tile_lists[t];
    if (list.empty()) return;
    auto& local = tile_grads[t];
    local.assign(list.size(), {});
    const int tx = static_cast<int>(t) % cache.tiles_x;
    const int ty = static_cast<int>(t) / cache.tiles_x;
    const int x_end = std::min((tx + 1) * kTileSize, cam.width);
    const int y_end = std::min((ty + 1) * kTileSize, cam.height);

    std::vector<int> hit;       // list positions composited at this pixel
    std::vector<double> hit_a;  // their alphas
    std::vector<double> hit_g;  // their exp(power) values
    hit.reserve(64);
    hit_a.reserve(64);
    hit_g.reserve(64);

    for (int y = ty * kTileSize; y < y_end; ++y) {
      for (int x = tx * kTileSize; x < x_end; ++x) {
        const size_t pix = static_cast<size_t>(y) * cam.width + x;
        const int n = cache.n_contrib[pix];
        if (n == 0) continue;
        const double px = x + 0.5, py = y + 0.5;

        hit.clear();
        hit_a.clear();
        hit_g.clear();
        for (size_t pos = 0; pos < list.size() && static_cast<int>(hit.size()) < n;
             ++pos) {
          const auto& p = cache.proj[list[pos]];
          double alpha, gexp;
          if (!eval_splat(p, gaussians[list[pos]].opacity, px, py, &alpha, &gexp))
            continue;
          hit.push_back(static_cast<int>(pos));
          hit_a.push_back(alpha);
          hit_g.push_back(gexp);
        }

        Vec3 dC;
        for (int c = 0; c < 3; ++c) dC[c] = d_color.at(x, y, c);
        const double dD = use_depth ? d_depth.at(x, y) : 0.0;

        // Replay back to front: suffix sums start at the background term.
        double T_run = cache.t_final[pix];
        Vec3 S_c = T_run * background;
        double S_d = 0.0;
        for (int h = static_cast<int>(hit.size()) - 1; h >= 0; --h) {
          const int pos = hit[h];
          const int idx = list[pos];
          const auto& p = cache.proj[idx];
          const double alpha = hit_a[h];
          const double om = 1.0 - alpha;
          const double T_i = T_run / om;

          double d_alpha = 0.0;
          for (int c = 0; c < 3; ++c)
            d_alpha += dC[c] * (T_i * gaussians[idx].color[c] - S_c[c] / om);
          d_alpha += dD * (T_i * p.z - S_d / om);

          PixelGrad& g = local[pos];
          g.touched = true;
          for (int c = 0; c < 3; ++c) g.color[c] += dC[c] * alpha * T_i;
          g.z += dD * alpha * T_i;

          if (alpha < kMaxAlpha) {  // the clamp zeroes these paths
            g.opacity += hit_g[h] * d_alpha;
            const double d_power = alpha * d_alpha;
            const double dx = px - p.mean2d.x();
            const double dy = py - p.mean2d.y();
            // power = -0.5 d^T conic d with d = pixel - mean2d
            g.mean2d.x() += d_power * (p.conic(0, 0) * dx + p.conic(0, 1) * dy);
            g.mean2d.y() += d_power * (p.conic(0, 1) * dx + p.conic(1, 1) * dy);
            g.conic(0, 0) += -0.5 * dx * dx * d_power;
            g.conic(0, 1) += -0.5 * dx * dy * d_power;
            g.conic(1, 0) += -0.5 * dx * dy * d_power;
            g.conic(1, 1) += -0.5 * dy * dy * d_power;
          }

          S_c += alpha * T_i * gaussians[idx].color;
          S_d += alpha * T_i * p.z;
          T_run = T_i;
        }
      }
    }
  });

  // Deterministic reduction: tiles in index order.
  std::vector<PixelGrad> acc(gaussians.size());
  for (size_t t = 0; t < cache.tile_lists.size(); ++t) {
    const auto& list = cache.tile_lists[t];
    const auto& local = tile_grads[t];
    for (size_t pos = 0; pos < local.size(); ++pos) {
      if (!local[pos].touched) continue;
      PixelGrad& g = acc[list[pos]];
      g.mean2d += local[pos].mean2d;
      g.conic += local[pos].conic;
      g.opacity += local[pos].opacity;
      g.color += local[pos].color;
      g.z += local[pos].z;
      g.touched = true;
    }
  }

  // Pass 2: projection backward, independent per splat.
  RenderGrads out;
  out.gaussians.assign(gaussians.size(), {});
  std::vector<Vec6> pose_parts(gaussians.size(), Vec6::Zero());
  const Mat3 R_wc = world_to_camera.rotation_matrix();

  parallel_for(gaussians.size(), [&](size_t i) {
    const PixelGrad& g = acc[i];
    if (!g.touched || !cache.proj[i].valid) return;
    const auto& p = cache.proj[i];
    const PosedGaussian& in = gaussians[i];
    PosedGaussianGrad& og = out.gaussians[i];

    og.color = g.color;
    og.opacity = g.opacity;

    // conic = cov2d^-1
    const Mat2 d_cov2d = -p.conic * g.conic * p.conic;

    // cov2d = J cov_cam J^T + lowpass I
    const Quat q = Quat::from_coeffs(in.rotation).normalized();
    const Mat3 R3 = q.to_matrix();
    const Vec3 s2 = (2.0 * in.log_scale).array().exp();
    const Mat3 cov_world = R3 * s2.asDiagonal() * R3.transpose();
    const Mat3 cov_cam = R_wc * cov_world * R_wc.transpose();
    const Eigen::Matrix<double, 2, 3> J = proj_jacobian(cam, p.p_cam);

    const Eigen::Matrix<double, 2, 3> d_J = 2.0 * d_cov2d * J * cov_cam;
    const Mat3 d_cov_cam = J.transpose() * d_cov2d * J;
    const Mat3 d_cov_world = R_wc.transpose() * d_cov_cam * R_wc;

    // cov_world = R3 diag(s2) R3^T
    const Mat3 d_R3 = 2.0 * d_cov_world * R3 * s2.asDiagonal();
    const Mat3 rtgr = R3.transpose() * d_cov_world * R3;
    for (int k = 0; k < 3; ++k) og.log_scale[k] = 2.0 * s2[k] * rtgr(k, k);
    og.rotation = normalize_backward(Quat::from_coeffs(in.rotation),
                                     matrix_jacobian_contract(q, d_R3));

    // J and mean2d depend on the camera-space point.
    const double iz = 1.0 / p.p_cam.z();
    const double iz2 = iz * iz;
    Vec3 d_pcam = Vec3::Zero();
    d_pcam.x() += d_J(0, 2) * (-cam.fx * iz2);
    d_pcam.y() += d_J(1, 2) * (-cam.fy * iz2);
    d_pcam.z() += d_J(0, 0) * (-cam.fx * iz2) + d_J(1, 1) * (-cam.fy * iz2) +
                  d_J(0, 2) * (2.0 * cam.fx * p.p_cam.x() * iz2 * iz) +
                  d_J(1, 2) * (2.0 * cam.fy * p.p_cam.y() * iz2 * iz);

    d_pcam.x() += g.mean2d.x() * cam.fx * iz;
    d_pcam.y() += g.mean2d.y() * cam.fy * iz;
    d_pcam.z() += -g.mean2d.x() * cam.fx * p.p_cam.x() * iz2 -
                  g.mean2d.y() * cam.fy * p.p_cam.y() * iz2;

    d_pcam.z() += g.z;  // compositing depth

    og.center = R_wc.transpose() * d_pcam;

    // Camera-pose twist (left perturbation of world_to_camera): the point
    // route plus the rotation of the camera-space covariance.
    Vec6 dpose;
    dpose.head<3>() = p.p_cam.cross(d_pcam);
    dpose.tail<3>() = d_pcam;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e[k] = 1.0;
      const Mat3 M = skew(e) * cov_cam - cov_cam * skew(e);
      dpose[k] += (d_cov_cam.array() * M.array()).sum();
    }
    pose_parts[i] = dpose;
  });

  for (const Vec6& part : pose_parts) out.camera_pose += part;
  return out;
}

}  // namespace splat4d
