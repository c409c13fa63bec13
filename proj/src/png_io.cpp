#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "splat4d/errors.hpp"
#include "splat4d/io.hpp"

namespace splat4d {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

uint16_t quantize16(double v)
{
    const double scaled = std::round(v * kDepthPngScale);
    return static_cast<uint16_t>(std::clamp(scaled, 0.0, 65535.0));
}

uint8_t quantize8(double v)
{
    return static_cast<uint8_t>(std::clamp(std::round(v * 255.0), 0.0, 255.0));
}

void write_png(const std::string& path, int width, int height, int color_type,
               int bit_depth, const std::vector<std::vector<png_byte>>& rows)
{
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png writer setup failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (const auto& row : rows)
        png_write_row(png, const_cast<png_bytep>(row.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct PngData {
    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<std::vector<png_byte>> rows;
};

// transform_to_rgb8: palette/gray/alpha/16-bit inputs all land as 8-bit RGB
PngData read_png(const std::string& path, bool transform_to_rgb8)
{
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot read " + path);

    png_byte sig[8] = {};
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw IoError("not a png file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png reader setup failed for " + path);
    }

    PngData out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png read failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    if (transform_to_rgb8) {
        png_set_expand(png);
        if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
        png_set_strip_alpha(png);
        if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
            png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        png_read_update_info(png, info);
    }

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.bit_depth = png_get_bit_depth(png, info);
    out.color_type = png_get_color_type(png, info);

    const size_t row_bytes = png_get_rowbytes(png, info);
    out.rows.assign(static_cast<size_t>(out.height),
                    std::vector<png_byte>(row_bytes));
    for (auto& row : out.rows) png_read_row(png, row.data(), nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace

void save_png_rgb(const std::string& path, const Image& img)
{
    if (img.channels() != 3 || img.empty())
        throw ShapeMismatch("save_png_rgb expects an HxWx3 image");
    std::vector<std::vector<png_byte>> rows(
        static_cast<size_t>(img.height()),
        std::vector<png_byte>(static_cast<size_t>(img.width()) * 3));
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c)
                rows[y][3 * x + c] = quantize8(img.at(x, y, c));
    write_png(path, img.width(), img.height(), PNG_COLOR_TYPE_RGB, 8, rows);
}

Image load_png_rgb(const std::string& path)
{
    const PngData data = read_png(path, true);
    if (data.color_type != PNG_COLOR_TYPE_RGB || data.bit_depth != 8)
        throw IoError("unexpected layout after rgb conversion: " + path);
    Image img(data.width, data.height, 3);
    for (int y = 0; y < data.height; ++y)
        for (int x = 0; x < data.width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = data.rows[y][3 * x + c] / 255.0;
    return img;
}

void save_png_depth(const std::string& path, const Image& depth)
{
    if (depth.channels() != 1 || depth.empty())
        throw ShapeMismatch("save_png_depth expects an HxWx1 image");
    std::vector<std::vector<png_byte>> rows(
        static_cast<size_t>(depth.height()),
        std::vector<png_byte>(static_cast<size_t>(depth.width()) * 2));
    for (int y = 0; y < depth.height(); ++y)
        for (int x = 0; x < depth.width(); ++x) {
            const uint16_t v = quantize16(depth.at(x, y));
            rows[y][2 * x] = static_cast<png_byte>(v >> 8);  // network order
            rows[y][2 * x + 1] = static_cast<png_byte>(v & 0xff);
        }
    write_png(path, depth.width(), depth.height(), PNG_COLOR_TYPE_GRAY, 16, rows);
}

Image load_png_depth(const std::string& path)
{
    const PngData data = read_png(path, false);
    if (data.color_type != PNG_COLOR_TYPE_GRAY || data.bit_depth != 16)
        throw IoError("not a 16-bit depth png: " + path);
    Image depth(data.width, data.height, 1);
    for (int y = 0; y < data.height; ++y)
        for (int x = 0; x < data.width; ++x) {
            const uint16_t v = static_cast<uint16_t>(
                (data.rows[y][2 * x] << 8) | data.rows[y][2 * x + 1]);
            depth.at(x, y) = v / kDepthPngScale;
        }
    return depth;
}

namespace {
constexpr char kFloatMagic[8] = {'s', 'p', 'l', 'a', 't', '4', 'd', 'f'};
}

void save_float_image(const std::string& path, const Image& img)
{
    if (img.empty()) throw ShapeMismatch("save_float_image of an empty image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kFloatMagic, sizeof(kFloatMagic));
    const uint32_t dims[3] = {static_cast<uint32_t>(img.width()),
                              static_cast<uint32_t>(img.height()),
                              static_cast<uint32_t>(img.channels())};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> buf(img.size());
    for (size_t i = 0; i < img.size(); ++i)
        buf[i] = static_cast<float>(img.storage()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw IoError("short write to " + path);
}

Image load_float_image(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    char magic[8] = {};
    uint32_t dims[3] = {};
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in || std::memcmp(magic, kFloatMagic, sizeof(magic)) != 0)
        throw IoError("not a float raster: " + path);
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 ||
        static_cast<uint64_t>(dims[0]) * dims[1] * dims[2] > (1u << 30))
        throw IoError("implausible raster dimensions in " + path);
    Image img(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
              static_cast<int>(dims[2]));
    std::vector<float> buf(img.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw IoError("truncated float raster: " + path);
    for (size_t i = 0; i < img.size(); ++i) img.storage()[i] = buf[i];
    return img;
}

}  // namespace splat4d
