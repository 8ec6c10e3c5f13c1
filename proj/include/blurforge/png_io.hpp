#pragma once

#include <filesystem>

#include "blurforge/image.hpp"

namespace blurforge {

// Optional sRGB transfer handling; off by default (files are treated as
// already linear).
struct ColorOptions {
    bool linearize_srgb = false;
};

float srgb_to_linear(float v);
float linear_to_srgb(float v);

/// Round-half-up quantization of [0,1] to [0, max_code].
unsigned quantize(float v, unsigned max_code);

/// Any PNG color type is accepted; gray inputs are replicated to RGB,
/// alpha channels are dropped.
RgbImage read_rgb(const std::filesystem::path& path, const ColorOptions& opts = {});

/// Reads an 8- or 16-bit PNG as a single [0,1] plane (luma of color inputs).
GrayMask read_gray(const std::filesystem::path& path);

/// Reads an instance mask and binarizes it at 0.5.
GrayMask read_mask(const std::filesystem::path& path);

void write_rgb8(const std::filesystem::path& path, const RgbImage& img, const ColorOptions& opts = {});
/// Binary masks are written as 0/255.
void write_gray8(const std::filesystem::path& path, const GrayMask& m);
void write_gray16(const std::filesystem::path& path, const GrayMask& m);

struct PngInfo {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
};

PngInfo read_png_info(const std::filesystem::path& path);

}  // namespace blurforge
