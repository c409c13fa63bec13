#include "splat4d/metrics.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "splat4d/errors.hpp"
#include "splat4d/ssim.hpp"

namespace splat4d {

double psnr(const Image& a, const Image& b)
{
    a.require_shape(b, "psnr operands");
    if (a.empty()) throw ShapeMismatch("psnr of empty images");
    double mse = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.storage()[i] - b.storage()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

double psnr(const Image& a, const Image& b, const BinaryMask& mask)
{
    a.require_shape(b, "psnr operands");
    if (mask.width() != a.width() || mask.height() != a.height())
        throw ShapeMismatch("psnr mask shape");
    if (mask.count() == 0) throw EmptyMask("psnr over an empty mask");
    double mse = 0.0;
    size_t n = 0;
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
            if (!mask.at(x, y)) continue;
            for (int c = 0; c < a.channels(); ++c) {
                const double d = a.at(x, y, c) - b.at(x, y, c);
                mse += d * d;
                ++n;
            }
        }
    mse /= static_cast<double>(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

double ssim_mean(const Image& a, const Image& b)
{
    const Image d = dissimilarity_map(a, b);
    double sum = 0.0;
    for (double v : d.storage()) sum += v;
    return 1.0 - 2.0 * sum / static_cast<double>(d.size());
}

double ssim_mean(const Image& a, const Image& b, const BinaryMask& mask)
{
    const Image d = dissimilarity_map(a, b);
    if (mask.width() != d.width() || mask.height() != d.height())
        throw ShapeMismatch("ssim mask shape");
    if (mask.count() == 0) throw EmptyMask("ssim over an empty mask");
    double sum = 0.0;
    for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < d.width(); ++x)
            if (mask.at(x, y)) sum += d.at(x, y);
    return 1.0 - 2.0 * sum / static_cast<double>(mask.count());
}

std::vector<std::pair<size_t, size_t>> associate_trajectories(
    const Trajectory& estimate, const Trajectory& reference,
    double max_time_diff)
{
    std::vector<std::tuple<double, size_t, size_t>> candidates;
    for (size_t i = 0; i < estimate.size(); ++i)
        for (size_t j = 0; j < reference.size(); ++j) {
            const double dt = std::abs(estimate[i].time - reference[j].time);
            if (dt <= max_time_diff) candidates.emplace_back(dt, i, j);
        }
    std::sort(candidates.begin(), candidates.end());

    std::vector<uint8_t> used_e(estimate.size(), 0), used_r(reference.size(), 0);
    std::vector<std::pair<size_t, size_t>> pairs;
    for (const auto& [dt, i, j] : candidates) {
        (void)dt;
        if (used_e[i] || used_r[j]) continue;
        used_e[i] = used_r[j] = 1;
        pairs.emplace_back(i, j);
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

double ate_rmse(const Trajectory& estimate, const Trajectory& reference,
                double max_time_diff)
{
    const auto pairs = associate_trajectories(estimate, reference, max_time_diff);
    if (pairs.size() < 3)
        throw InsufficientPoses("trajectory alignment needs at least 3 pairs");

    const int n = static_cast<int>(pairs.size());
    Eigen::Matrix3Xd src(3, n), dst(3, n);
    for (int c = 0; c < n; ++c) {
        src.col(c) = estimate[pairs[c].first].pose.translation;
        dst.col(c) = reference[pairs[c].second].pose.translation;
    }
    const Eigen::Matrix4d align = Eigen::umeyama(src, dst, false);
    const Mat3 rot = align.topLeftCorner<3, 3>();
    const Vec3 trans = align.topRightCorner<3, 1>();

    double sq = 0.0;
    for (int c = 0; c < n; ++c)
        sq += (rot * src.col(c) + trans - dst.col(c)).squaredNorm();
    return std::sqrt(sq / n);
}

}  // namespace splat4d
