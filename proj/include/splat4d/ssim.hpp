#pragma once

#include "splat4d/image.hpp"

namespace splat4d {

// Windowed structural dissimilarity between a rendered image and its target:
// per pixel (1 - SSIM)/2 averaged over channels, so 0 means identical and 1
// is maximal disagreement. 11x11 Gaussian window (sigma 1.5), stability
// constants (0.01)^2 and (0.03)^2; windows are renormalized where they hang
// over the border.
Image dissimilarity_map(const Image& rendered, const Image& target);

// d(sum(weight .* dissimilarity_map)) / d(rendered), same shape as rendered.
Image dissimilarity_backward(const Image& rendered, const Image& target,
                             const Image& weight);

}  // namespace splat4d
