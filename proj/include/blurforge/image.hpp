#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "blurforge/error.hpp"

namespace blurforge {

/// Interleaved float image with a fixed channel count. Values are linear
/// intensities; pixel (x, y) has its center at integer coordinates.
template <std::size_t Channels>
class Image {
public:
    static constexpr std::size_t channels = Channels;

    Image() = default;
    Image(int width, int height, float fill = 0.0f) : width_(width), height_(height) {
        if (width < 1 || height < 1) {
            throw InvalidArgument("image dimensions must be positive, got " + std::to_string(width) +
                                  "x" + std::to_string(height));
        }
        data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * Channels, fill);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_); }
    bool empty() const { return data_.empty(); }

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    std::size_t index(int x, int y) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * Channels;
    }

    float& at(int x, int y, std::size_t c = 0) { return data_[index(x, y) + c]; }
    float at(int x, int y, std::size_t c = 0) const { return data_[index(x, y) + c]; }

    std::span<float, Channels> pixel(int x, int y) { return std::span<float, Channels>(data_.data() + index(x, y), Channels); }
    std::span<const float, Channels> pixel(int x, int y) const {
        return std::span<const float, Channels>(data_.data() + index(x, y), Channels);
    }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }

    bool operator==(const Image&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

using RgbImage = Image<3>;
using GrayMask = Image<1>;
/// Channels 0..2 hold alpha-premultiplied color, channel 3 holds alpha.
using RgbaPremultiplied = Image<4>;

template <std::size_t A, std::size_t B>
bool same_size(const Image<A>& a, const Image<B>& b) {
    return a.width() == b.width() && a.height() == b.height();
}

template <std::size_t A, std::size_t B>
void require_same_size(const Image<A>& a, const Image<B>& b, const char* what) {
    if (!same_size(a, b)) {
        throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) + "x" +
                             std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                             std::to_string(b.height()) + ")");
    }
}

/// Square, odd-sized, non-negative convolution kernel. Weights are stored
/// row-major with the center at (size/2, size/2).
class Kernel2D {
public:
    Kernel2D(int size, std::vector<float> weights);

    static Kernel2D delta();
    /// Scales weights to sum to one. Throws if the weights sum to zero.
    static Kernel2D normalized(int size, std::vector<double> weights);

    int size() const { return size_; }
    int radius() const { return size_ / 2; }
    float weight(int u, int v) const { return weights_[static_cast<std::size_t>(v * size_ + u)]; }
    std::span<const float> weights() const { return weights_; }
    double sum() const;
    bool is_normalized(double tol = 1e-6) const;

    bool operator==(const Kernel2D&) const = default;

private:
    int size_;
    std::vector<float> weights_;
};

/// x' = a*x + b*y + tx,  y' = c*x + d*y + ty  (pixel coordinates, forward map).
struct AffineTransform {
    double a = 1.0, b = 0.0, tx = 0.0;
    double c = 0.0, d = 1.0, ty = 0.0;

    static AffineTransform identity() { return {}; }
    static AffineTransform translation(double dx, double dy);
    /// Rotation by `angle` radians and uniform `scale` about `(cx, cy)`.
    static AffineTransform rotate_scale_about(double cx, double cy, double angle, double scale);

    double determinant() const { return a * d - b * c; }
    bool is_invertible() const;
    AffineTransform inverse() const;
    std::array<double, 2> apply(double x, double y) const { return {a * x + b * y + tx, c * x + d * y + ty}; }
};

RgbaPremultiplied premultiply(const RgbImage& image, const GrayMask& alpha);

/// Standard "over": fg.color + bg * (1 - fg.alpha), clamped to [0, 1].
RgbImage unpremultiply_over(const RgbaPremultiplied& fg, const RgbImage& bg);

/// Bilinear inverse-mapped resampling; samples outside the source are
/// transparent. The identity transform reproduces the input exactly.
RgbaPremultiplied warp(const RgbaPremultiplied& src, const AffineTransform& t);

/// Resamples with a per-row horizontal shift added to the transform:
/// output row y samples the source at inverse(t)(x - row_shift[y], y).
RgbaPremultiplied warp_rows(const RgbaPremultiplied& src, const AffineTransform& t, std::span<const double> row_shift);

/// True 2D convolution of all four planes with zero (transparent) padding.
RgbaPremultiplied convolve(const RgbaPremultiplied& src, const Kernel2D& k);

/// Discrete normalized 1D Gaussian with radius ceil(3 sigma).
std::vector<double> gaussian_weights(double sigma);

/// Separable Gaussian blur with clamp-to-edge borders; sigma = 0 is identity.
GrayMask gaussian_blur_mask(const GrayMask& m, double sigma);

/// Binary morphology with a square structuring element of the given radius.
/// Only in-bounds pixels participate, so the image border is neutral.
GrayMask dilate(const GrayMask& m, int radius);
GrayMask erode(const GrayMask& m, int radius);

/// Grey-level max filter over a square window.
GrayMask max_filter(const GrayMask& m, int radius);

/// 1 where m >= threshold, else 0.
GrayMask threshold(const GrayMask& m, float threshold = 0.5f);

GrayMask alpha_plane(const RgbaPremultiplied& img);

template <std::size_t C>
Image<C> crop(const Image<C>& src, int x0, int y0, int width, int height) {
    if (x0 < 0 || y0 < 0 || width < 1 || height < 1 || x0 + width > src.width() || y0 + height > src.height()) {
        throw InvalidArgument("crop rectangle outside image");
    }
    Image<C> out(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < C; ++c) out.at(x, y, c) = src.at(x0 + x, y0 + y, c);
        }
    }
    return out;
}

double mask_sum(const GrayMask& m);

}  // namespace blurforge
