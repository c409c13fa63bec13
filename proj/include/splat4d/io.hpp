#pragma once

#include <string>

#include "splat4d/image.hpp"

namespace splat4d {

// Depth PNGs store metres * this factor as 16-bit integers; 0 means invalid.
inline constexpr double kDepthPngScale = 5000.0;

// 8-bit RGB PNG; values are clamped to [0, 1] and quantized on save. Loading
// converts whatever color layout the file uses to RGB in [0, 1].
void save_png_rgb(const std::string& path, const Image& img);
Image load_png_rgb(const std::string& path);

// 16-bit grayscale PNG holding scaled depth in metres (clamped to the
// representable range on save). Loading rejects files that are not 16-bit
// single channel.
void save_png_depth(const std::string& path, const Image& depth);
Image load_png_depth(const std::string& path);

// Little-endian float32 raster with a short header. Lossless for
// float-representable data; used for flow fields and other sidecars.
void save_float_image(const std::string& path, const Image& img);
Image load_float_image(const std::string& path);

}  // namespace splat4d
