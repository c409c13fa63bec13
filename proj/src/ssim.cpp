#include "splat4d/ssim.hpp"

#include <array>
#include <cmath>

#include "splat4d/parallel.hpp"

namespace splat4d {

namespace {

constexpr int kRadius = 5;  // 11-tap window
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, 2 * kRadius + 1>& window() {
  static const auto w = [] {
    std::array<double, 2 * kRadius + 1> k{};
    double sum = 0.0;
    for (int i = -kRadius; i <= kRadius; ++i) {
      k[i + kRadius] = std::exp(-0.5 * i * i / (kSigma * kSigma));
      sum += k[i + kRadius];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return w;
}

// Separable blur with border renormalization: near the edge the window is
// rescaled by the in-bounds weight so constants stay constants.
Image blur(const Image& src) {
  const auto& k = window();
  const int W = src.width(), H = src.height(), C = src.channels();
  Image tmp(W, H, C), out(W, H, C);

  parallel_for(static_cast<size_t>(H), [&](size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0, norm = 0.0;
        for (int i = -kRadius; i <= kRadius; ++i) {
          const int xs = x + i;
          if (xs < 0 || xs >= W) continue;
          acc += k[i + kRadius] * src.at(xs, y, c);
          norm += k[i + kRadius];
        }
        tmp.at(x, y, c) = acc / norm;
      }
    }
  });
  parallel_for(static_cast<size_t>(H), [&](size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0, norm = 0.0;
        for (int i = -kRadius; i <= kRadius; ++i) {
          const int ys = y + i;
          if (ys < 0 || ys >= H) continue;
          acc += k[i + kRadius] * tmp.at(x, ys, c);
          norm += k[i + kRadius];
        }
        out.at(x, y, c) = acc / norm;
      }
    }
  });
  return out;
}

// Adjoint of blur(): divide by the local renormalizer first, then convolve
// with the raw (unnormalized) kernel.
Image blur_adjoint(const Image& g) {
  const auto& k = window();
  const int W = g.width(), H = g.height(), C = g.channels();

  Image tmp(W, H, C), out(W, H, C);
  // Adjoint of the second (vertical) pass.
  parallel_for(static_cast<size_t>(H), [&](size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = -kRadius; i <= kRadius; ++i) {
          const int ys = y + i;
          if (ys < 0 || ys >= H) continue;
          double norm = 0.0;
          for (int j = -kRadius; j <= kRadius; ++j) {
            const int yb = ys + j;
            if (yb >= 0 && yb < H) norm += k[j + kRadius];
          }
          acc += k[i + kRadius] * g.at(x, ys, c) / norm;
        }
        tmp.at(x, y, c) = acc;
      }
    }
  });
  // Adjoint of the first (horizontal) pass.
  parallel_for(static_cast<size_t>(H), [&](size_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = -kRadius; i <= kRadius; ++i) {
          const int xs = x + i;
          if (xs < 0 || xs >= W) continue;
          double norm = 0.0;
          for (int j = -kRadius; j <= kRadius; ++j) {
            const int xb = xs + j;
            if (xb >= 0 && xb < W) norm += k[j + kRadius];
          }
          acc += k[i + kRadius] * tmp.at(xs, y, c) / norm;
        }
        out.at(x, y, c) = acc;
      }
    }
  });
  return out;
}

Image multiply(const Image& a, const Image& b) {
  Image out(a.width(), a.height(), a.channels());
  for (size_t i = 0; i < out.size(); ++i)
    out.storage()[i] = a.storage()[i] * b.storage()[i];
  return out;
}

struct SsimTerms {
  Image mu_x, mu_y, chi2, omega, psi_y;  // blurred x, y, x*x, x*y, y*y
};

SsimTerms terms(const Image& x, const Image& y) {
  SsimTerms t;
  t.mu_x = blur(x);
  t.mu_y = blur(y);
  t.chi2 = blur(multiply(x, x));
  t.omega = blur(multiply(x, y));
  t.psi_y = blur(multiply(y, y));
  return t;
}

}  // namespace

Image dissimilarity_map(const Image& rendered, const Image& target) {
  rendered.require_shape(target, "dissimilarity_map: image shapes differ");
  const int W = rendered.width(), H = rendered.height(), C = rendered.channels();
  const SsimTerms t = terms(rendered, target);

  Image map(W, H, 1);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int c = 0; c < C; ++c) {
        const double mx = t.mu_x.at(x, y, c), my = t.mu_y.at(x, y, c);
        const double sx = t.chi2.at(x, y, c) - mx * mx;
        const double sy = t.psi_y.at(x, y, c) - my * my;
        const double sxy = t.omega.at(x, y, c) - mx * my;
        const double a1 = 2.0 * mx * my + kC1, a2 = 2.0 * sxy + kC2;
        const double b1 = mx * mx + my * my + kC1, b2 = sx + sy + kC2;
        acc += (1.0 - (a1 * a2) / (b1 * b2)) * 0.5;
      }
      map.at(x, y) = acc / C;
    }
  }
  return map;
}

Image dissimilarity_backward(const Image& rendered, const Image& target,
                             const Image& weight) {
  rendered.require_shape(target, "dissimilarity_backward: image shapes differ");
  if (weight.width() != rendered.width() || weight.height() != rendered.height() ||
      weight.channels() != 1) {
    throw ShapeMismatch("dissimilarity_backward: weight shape");
  }
  const int W = rendered.width(), H = rendered.height(), C = rendered.channels();
  const SsimTerms t = terms(rendered, target);

  // dL/dS per pixel/channel, then the three adjoint routes through the blurs.
  Image g_chi(W, H, C), g_psi(W, H, C), g_omega(W, H, C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double ds = -weight.at(x, y) * 0.5 / C;  // map = mean_c (1-S)/2
      for (int c = 0; c < C; ++c) {
        const double mx = t.mu_x.at(x, y, c), my = t.mu_y.at(x, y, c);
        const double sx = t.chi2.at(x, y, c) - mx * mx;
        const double sy = t.psi_y.at(x, y, c) - my * my;
        const double sxy = t.omega.at(x, y, c) - mx * my;
        const double a1 = 2.0 * mx * my + kC1, a2 = 2.0 * sxy + kC2;
        const double b1 = mx * mx + my * my + kC1, b2 = sx + sy + kC2;
        const double s = (a1 * a2) / (b1 * b2);
        const double ib = 1.0 / (b1 * b2);
        // S depends on chi (= mu_x) directly and through sxy and sx.
        g_chi.at(x, y, c) =
            ds * (2.0 * my * (a2 - a1) * ib - 2.0 * mx * s * (b2 - b1) * ib);
        g_psi.at(x, y, c) = ds * (-s / b2);
        g_omega.at(x, y, c) = ds * (2.0 * a1 * ib);
      }
    }
  }

  const Image r_chi = blur_adjoint(g_chi);
  const Image r_psi = blur_adjoint(g_psi);
  const Image r_omega = blur_adjoint(g_omega);

  Image out(W, H, C);
  for (size_t i = 0; i < out.size(); ++i) {
    out.storage()[i] = r_chi.storage()[i] +
                       2.0 * rendered.storage()[i] * r_psi.storage()[i] +
                       target.storage()[i] * r_omega.storage()[i];
  }
  return out;
}

}  // namespace splat4d
