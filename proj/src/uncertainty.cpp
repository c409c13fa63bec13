#include "splat4d/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "splat4d/parallel.hpp"

namespace splat4d {

namespace {

constexpr int kWindowRadius = 2;  // 5x5 statistics window

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void write_tensor(std::ofstream& out, const Eigen::MatrixXd& m)
{
    const int64_t rows = m.rows(), cols = m.cols();
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Eigen::MatrixXd read_tensor(std::ifstream& in, int64_t want_rows, int64_t want_cols)
{
    int64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in || rows != want_rows || cols != want_cols)
        throw IoError("uncertainty net file has unexpected tensor shapes");
    Eigen::MatrixXd m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw IoError("uncertainty net file is truncated");
    return m;
}

}  // namespace

Eigen::MatrixXd extract_uncertainty_features(const Image& observed,
                                             const Image& rendered)
{
    if (observed.channels() != 3)
        throw ShapeMismatch("uncertainty features need an rgb observation");
    observed.require_shape(rendered, "rendered frame vs observation");

    const int w = observed.width(), h = observed.height();
    Eigen::MatrixXd features(kUncertaintyFeatureDim, static_cast<Eigen::Index>(w) * h);

    parallel_for(static_cast<size_t>(h), [&](size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < w; ++x) {
            const Eigen::Index p = static_cast<Eigen::Index>(y) * w + x;
            auto col = features.col(p);
            for (int c = 0; c < 3; ++c) col[c] = observed.at(x, y, c);

            const int x0 = std::max(0, x - kWindowRadius);
            const int x1 = std::min(w - 1, x + kWindowRadius);
            const int y0 = std::max(0, y - kWindowRadius);
            const int y1 = std::min(h - 1, y + kWindowRadius);
            const double inv_n = 1.0 / ((x1 - x0 + 1) * (y1 - y0 + 1));
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0, acc_sq = 0.0;
                for (int yy = y0; yy <= y1; ++yy)
                    for (int xx = x0; xx <= x1; ++xx) {
                        const double v = observed.at(xx, yy, c);
                        acc += v;
                        acc_sq += v * v;
                    }
                const double mean = acc * inv_n;
                col[3 + c] = mean;
                col[6 + c] = std::sqrt(std::max(0.0, acc_sq * inv_n - mean * mean));
            }

            const double u = (x + 0.5) / w;
            const double v = (y + 0.5) / h;
            col[9] = u;
            col[10] = v;
            col[11] = std::hypot(u - 0.5, v - 0.5);

            for (int c = 0; c < 3; ++c)
                col[12 + c] = std::abs(rendered.at(x, y, c) - observed.at(x, y, c));
        }
    });
    return features;
}

Eigen::VectorXd photometric_residuals(const Image& rendered, const Image& observed)
{
    rendered.require_shape(observed, "rendered frame vs observation");
    const int w = rendered.width(), h = rendered.height(), ch = rendered.channels();
    Eigen::VectorXd res(static_cast<Eigen::Index>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int c = 0; c < ch; ++c) {
                const double d = rendered.at(x, y, c) - observed.at(x, y, c);
                acc += d * d;
            }
            res[static_cast<Eigen::Index>(y) * w + x] = acc / ch;
        }
    return res;
}

NetTensors NetTensors::zeros()
{
    NetTensors t;
    t.w1 = Eigen::MatrixXd::Zero(kUncertaintyHidden, kUncertaintyFeatureDim);
    t.w2 = Eigen::MatrixXd::Zero(kUncertaintyHidden, kUncertaintyHidden);
    t.w3 = Eigen::MatrixXd::Zero(1, kUncertaintyHidden);
    t.b1 = Eigen::VectorXd::Zero(kUncertaintyHidden);
    t.b2 = Eigen::VectorXd::Zero(kUncertaintyHidden);
    t.b3 = Eigen::VectorXd::Zero(1);
    return t;
}

UncertaintyNet::UncertaintyNet(uint64_t seed)
    : params(NetTensors::zeros()), m_(NetTensors::zeros()), v_(NetTensors::zeros())
{
    std::mt19937_64 rng(seed);
    auto he_fill = [&rng](Eigen::MatrixXd& w) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / w.cols()));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    };
    he_fill(params.w1);
    he_fill(params.w2);
    he_fill(params.w3);
}

Eigen::VectorXd UncertaintyNet::predict(const Eigen::MatrixXd& features) const
{
    if (features.rows() != kUncertaintyFeatureDim)
        throw ShapeMismatch("uncertainty features have the wrong dimension");
    Eigen::MatrixXd a1 =
        ((params.w1 * features).colwise() + params.b1).cwiseMax(0.0);
    Eigen::MatrixXd a2 = ((params.w2 * a1).colwise() + params.b2).cwiseMax(0.0);
    Eigen::RowVectorXd z3 = (params.w3 * a2).row(0);
    z3.array() += params.b3[0];
    Eigen::VectorXd beta_sq(features.cols());
    for (Eigen::Index i = 0; i < z3.size(); ++i)
        beta_sq[i] = softplus(z3[i]) + kUncertaintyFloor;
    return beta_sq;
}

double UncertaintyNet::loss_with_gradients(const Eigen::MatrixXd& features,
                                           const Eigen::VectorXd& residuals,
                                           double reg_weight,
                                           NetTensors* grads) const
{
    if (features.rows() != kUncertaintyFeatureDim)
        throw ShapeMismatch("uncertainty features have the wrong dimension");
    if (features.cols() != residuals.size())
        throw ShapeMismatch("one residual per feature column");
    const Eigen::Index n = features.cols();
    if (n == 0) return 0.0;

    const Eigen::MatrixXd z1 = (params.w1 * features).colwise() + params.b1;
    const Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
    const Eigen::MatrixXd z2 = (params.w2 * a1).colwise() + params.b2;
    const Eigen::MatrixXd a2 = z2.cwiseMax(0.0);
    Eigen::RowVectorXd z3 = (params.w3 * a2).row(0);
    z3.array() += params.b3[0];

    double loss = 0.0;
    Eigen::RowVectorXd dz3(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double bsq = softplus(z3[i]) + kUncertaintyFloor;
        loss += residuals[i] / bsq + reg_weight * std::log(bsq);
        const double d_bsq =
            (reg_weight / bsq - residuals[i] / (bsq * bsq)) / static_cast<double>(n);
        dz3[i] = d_bsq * sigmoid(z3[i]);
    }
    loss /= static_cast<double>(n);
    if (!grads) return loss;

    grads->w3 = dz3 * a2.transpose();
    grads->b3 = Eigen::VectorXd::Constant(1, dz3.sum());
    const Eigen::MatrixXd dz2 = ((params.w3.transpose() * dz3).array() *
                                 (z2.array() > 0.0).cast<double>())
                                    .matrix();
    grads->w2 = dz2 * a1.transpose();
    grads->b2 = dz2.rowwise().sum();
    const Eigen::MatrixXd dz1 = ((params.w2.transpose() * dz2).array() *
                                 (z1.array() > 0.0).cast<double>())
                                    .matrix();
    grads->w1 = dz1 * features.transpose();
    grads->b1 = dz1.rowwise().sum();
    return loss;
}

double UncertaintyNet::train_step(const Eigen::MatrixXd& features,
                                  const Eigen::VectorXd& residuals,
                                  double reg_weight, double learning_rate)
{
    NetTensors g = NetTensors::zeros();
    const double loss = loss_with_gradients(features, residuals, reg_weight, &g);
    ++step_;
    const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(step_));
    auto update = [&](auto& w, auto& m, auto& v, const auto& grad) {
        m = 0.9 * m + 0.1 * grad;
        v = (0.999 * v.array() + 0.001 * grad.array().square()).matrix();
        w.array() -=
            learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + 1e-8);
    };
    update(params.w1, m_.w1, v_.w1, g.w1);
    update(params.w2, m_.w2, v_.w2, g.w2);
    update(params.w3, m_.w3, v_.w3, g.w3);
    update(params.b1, m_.b1, v_.b1, g.b1);
    update(params.b2, m_.b2, v_.b2, g.b2);
    update(params.b3, m_.b3, v_.b3, g.b3);
    return loss;
}

void UncertaintyNet::save(const std::string& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write("splat4d-unet 1\n", 15);
    const int64_t step = step_;
    out.write(reinterpret_cast<const char*>(&step), sizeof(step));
    for (const NetTensors* t : {&params, &m_, &v_}) {
        write_tensor(out, t->w1);
        write_tensor(out, t->w2);
        write_tensor(out, t->w3);
        write_tensor(out, t->b1);
        write_tensor(out, t->b2);
        write_tensor(out, t->b3);
    }
    if (!out) throw IoError("failed while writing " + path);
}

UncertaintyNet UncertaintyNet::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    char magic[15];
    in.read(magic, 15);
    if (!in || std::string(magic, 15) != "splat4d-unet 1\n")
        throw IoError(path + " is not an uncertainty net file");
    UncertaintyNet net(0);
    int64_t step = 0;
    in.read(reinterpret_cast<char*>(&step), sizeof(step));
    net.step_ = step;
    for (NetTensors* t : {&net.params, &net.m_, &net.v_}) {
        t->w1 = read_tensor(in, kUncertaintyHidden, kUncertaintyFeatureDim);
        t->w2 = read_tensor(in, kUncertaintyHidden, kUncertaintyHidden);
        t->w3 = read_tensor(in, 1, kUncertaintyHidden);
        t->b1 = read_tensor(in, kUncertaintyHidden, 1);
        t->b2 = read_tensor(in, kUncertaintyHidden, 1);
        t->b3 = read_tensor(in, 1, 1);
    }
    return net;
}

Image uncertainty_map(const UncertaintyNet& net, const Image& observed,
                      const Image& rendered)
{
    const Eigen::MatrixXd features = extract_uncertainty_features(observed, rendered);
    const Eigen::VectorXd beta_sq = net.predict(features);
    Image out(observed.width(), observed.height(), 1);
    for (size_t i = 0; i < out.size(); ++i)
        out.storage()[i] = beta_sq[static_cast<Eigen::Index>(i)];
    return out;
}

BinaryMask threshold_uncertainty(const Image& beta_sq, double threshold)
{
    if (beta_sq.channels() != 1)
        throw ShapeMismatch("variance map must have a single channel");
    BinaryMask mask(beta_sq.width(), beta_sq.height());
    for (int y = 0; y < beta_sq.height(); ++y)
        for (int x = 0; x < beta_sq.width(); ++x)
            mask.set(x, y, beta_sq.at(x, y) > threshold);
    return mask;
}

double mask_overlap_ratio(const BinaryMask& candidate, const BinaryMask& reference)
{
    if (!candidate.same_shape(reference))
        throw ShapeMismatch("masks must share a shape");
    size_t total = 0, hit = 0;
    const std::vector<uint8_t>& c = candidate.raw();
    const std::vector<uint8_t>& r = reference.raw();
    for (size_t i = 0; i < c.size(); ++i) {
        if (!c[i]) continue;
        ++total;
        if (r[i]) ++hit;
    }
    return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

BinaryMask refine_uncertainty_mask(const BinaryMask& seed,
                                   const std::vector<BinaryMask>& candidates,
                                   double overlap_threshold)
{
    BinaryMask out = seed;
    for (const BinaryMask& cand : candidates) {
        if (mask_overlap_ratio(cand, seed) <= overlap_threshold) continue;
        for (size_t i = 0; i < out.raw().size(); ++i)
            if (cand.raw()[i]) out.raw()[i] = 1;
    }
    return out;
}

std::vector<std::pair<int, int>> farthest_point_prompts(const BinaryMask& mask,
                                                        int count)
{
    std::vector<std::pair<int, int>> pixels;
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            if (mask.at(x, y)) pixels.emplace_back(x, y);
    if (pixels.empty() || count <= 0) return {};

    double cx = 0.0, cy = 0.0;
    for (auto [x, y] : pixels) {
        cx += x;
        cy += y;
    }
    cx /= static_cast<double>(pixels.size());
    cy /= static_cast<double>(pixels.size());

    size_t first = 0;
    double best = std::numeric_limits<double>::max();
    for (size_t i = 0; i < pixels.size(); ++i) {
        const double d = (pixels[i].first - cx) * (pixels[i].first - cx) +
                         (pixels[i].second - cy) * (pixels[i].second - cy);
        if (d < best) {
            best = d;
            first = i;
        }
    }

    std::vector<std::pair<int, int>> prompts{pixels[first]};
    std::vector<double> min_dist(pixels.size());
    auto sq_dist = [](const std::pair<int, int>& a, const std::pair<int, int>& b) {
        const double dx = a.first - b.first, dy = a.second - b.second;
        return dx * dx + dy * dy;
    };
    for (size_t i = 0; i < pixels.size(); ++i)
        min_dist[i] = sq_dist(pixels[i], pixels[first]);

    const size_t want = std::min(static_cast<size_t>(count), pixels.size());
    while (prompts.size() < want) {
        size_t next = 0;
        double far = -1.0;
        for (size_t i = 0; i < pixels.size(); ++i)
            if (min_dist[i] > far) {
                far = min_dist[i];
                next = i;
            }
        prompts.push_back(pixels[next]);
        for (size_t i = 0; i < pixels.size(); ++i)
            min_dist[i] = std::min(min_dist[i], sq_dist(pixels[i], pixels[next]));
    }
    return prompts;
}

}  // namespace splat4d
