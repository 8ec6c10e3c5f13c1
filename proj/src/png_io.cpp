#include "blurforge/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace blurforge {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

// Decoded samples normalized to [0,1], interleaved.
struct RawImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<float> samples;
};

RawImage decode(const std::filesystem::path& path) {
    FilePtr file = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    RawImage raw;
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_byte color_type = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    raw.width = static_cast<int>(png_get_image_width(png, info));
    raw.height = static_cast<int>(png_get_image_height(png, info));
    raw.channels = png_get_channels(png, info);
    raw.bit_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * static_cast<std::size_t>(raw.height));
    rows.resize(static_cast<std::size_t>(raw.height));
    for (int y = 0; y < raw.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t count = static_cast<std::size_t>(raw.width) * static_cast<std::size_t>(raw.height) *
                              static_cast<std::size_t>(raw.channels);
    raw.samples.resize(count);
    if (raw.bit_depth == 16) {
        for (std::size_t i = 0; i < count; ++i) {
            const unsigned v = (static_cast<unsigned>(buffer[2 * i]) << 8) | buffer[2 * i + 1];
            raw.samples[i] = static_cast<float>(v / 65535.0);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) raw.samples[i] = static_cast<float>(buffer[i] / 255.0);
    }
    return raw;
}

void encode(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
            const std::vector<png_byte>& buffer) {
    FilePtr file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    const std::size_t rowbytes = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels) *
                                 static_cast<std::size_t>(bit_depth / 8);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(buffer.data()) + rowbytes * static_cast<std::size_t>(y);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(file.get()) != 0) throw IoError("failed flushing " + path.string());
}

float luma(float r, float g, float b) { return 0.2126f * r + 0.7152f * g + 0.0722f * b; }

}  // namespace

float srgb_to_linear(float v) {
    return v <= 0.04045f ? v / 12.92f : static_cast<float>(std::pow((v + 0.055) / 1.055, 2.4));
}

float linear_to_srgb(float v) {
    return v <= 0.0031308f ? v * 12.92f : static_cast<float>(1.055 * std::pow(v, 1.0 / 2.4) - 0.055);
}

unsigned quantize(float v, unsigned max_code) {
    const double scaled = std::floor(static_cast<double>(std::clamp(v, 0.0f, 1.0f)) * max_code + 0.5);
    return static_cast<unsigned>(std::min(scaled, static_cast<double>(max_code)));
}

RgbImage read_rgb(const std::filesystem::path& path, const ColorOptions& opts) {
    const RawImage raw = decode(path);
    RgbImage out(raw.width, raw.height);
    const bool gray = raw.channels <= 2;
    for (int y = 0; y < raw.height; ++y) {
        for (int x = 0; x < raw.width; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * raw.width + x) * raw.channels;
            for (int c = 0; c < 3; ++c) {
                float v = raw.samples[base + (gray ? 0 : c)];
                if (opts.linearize_srgb) v = srgb_to_linear(v);
                out.at(x, y, c) = v;
            }
        }
    }
    return out;
}

GrayMask read_gray(const std::filesystem::path& path) {
    const RawImage raw = decode(path);
    GrayMask out(raw.width, raw.height);
    for (int y = 0; y < raw.height; ++y) {
        for (int x = 0; x < raw.width; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * raw.width + x) * raw.channels;
            out.at(x, y) = raw.channels >= 3 ? luma(raw.samples[base], raw.samples[base + 1], raw.samples[base + 2])
                                             : raw.samples[base];
        }
    }
    return out;
}

GrayMask read_mask(const std::filesystem::path& path) { return threshold(read_gray(path), 0.5f); }

void write_rgb8(const std::filesystem::path& path, const RgbImage& img, const ColorOptions& opts) {
    std::vector<png_byte> buffer(img.data().size());
    auto src = img.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const float v = opts.linearize_srgb ? linear_to_srgb(std::clamp(src[i], 0.0f, 1.0f)) : src[i];
        buffer[i] = static_cast<png_byte>(quantize(v, 255));
    }
    encode(path, img.width(), img.height(), PNG_COLOR_TYPE_RGB, 8, buffer);
}

void write_gray8(const std::filesystem::path& path, const GrayMask& m) {
    std::vector<png_byte> buffer(m.data().size());
    auto src = m.data();
    for (std::size_t i = 0; i < src.size(); ++i) buffer[i] = static_cast<png_byte>(quantize(src[i], 255));
    encode(path, m.width(), m.height(), PNG_COLOR_TYPE_GRAY, 8, buffer);
}

void write_gray16(const std::filesystem::path& path, const GrayMask& m) {
    std::vector<png_byte> buffer(m.data().size() * 2);
    auto src = m.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const unsigned q = quantize(src[i], 65535);
        buffer[2 * i] = static_cast<png_byte>(q >> 8);
        buffer[2 * i + 1] = static_cast<png_byte>(q & 0xFF);
    }
    encode(path, m.width(), m.height(), PNG_COLOR_TYPE_GRAY, 16, buffer);
}

PngInfo read_png_info(const std::filesystem::path& path) {
    const RawImage raw = decode(path);
    return {raw.width, raw.height, raw.channels, raw.bit_depth};
}

}  // namespace blurforge
