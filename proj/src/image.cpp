#include "blurforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace blurforge {

namespace {

constexpr float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

struct Tap {
    int dx;
    int dy;
    double w;
};

// 1D max/min filter along one axis, restricted to in-bounds samples.
template <typename Pick>
GrayMask rank_filter_1d(const GrayMask& m, int radius, bool horizontal, Pick pick) {
    GrayMask out(m.width(), m.height());
    const int w = m.width();
    const int h = m.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = m.at(x, y);
            for (int k = -radius; k <= radius; ++k) {
                const int sx = horizontal ? x + k : x;
                const int sy = horizontal ? y : y + k;
                if (!m.contains(sx, sy)) continue;
                acc = pick(acc, m.at(sx, sy));
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

template <typename Pick>
GrayMask rank_filter(const GrayMask& m, int radius, Pick pick) {
    if (radius < 0) throw InvalidArgument("morphology radius must be non-negative");
    if (radius == 0) return m;
    return rank_filter_1d(rank_filter_1d(m, radius, true, pick), radius, false, pick);
}

void sample_bilinear(const RgbaPremultiplied& src, double sx, double sy, std::span<float, 4> out) {
    const double fx0 = std::floor(sx);
    const double fy0 = std::floor(sy);
    const double fx = sx - fx0;
    const double fy = sy - fy0;
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    const double wts[4] = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    for (int i = 0; i < 4; ++i) {
        if (wts[i] == 0.0 || !src.contains(xs[i], ys[i])) continue;
        const auto p = src.pixel(xs[i], ys[i]);
        for (int c = 0; c < 4; ++c) acc[c] += wts[i] * static_cast<double>(p[c]);
    }
    for (int c = 0; c < 4; ++c) out[c] = static_cast<float>(acc[c]);
}

}  // namespace

Kernel2D::Kernel2D(int size, std::vector<float> weights) : size_(size), weights_(std::move(weights)) {
    if (size < 1 || size % 2 == 0) throw InvalidArgument("kernel size must be a positive odd integer");
    if (weights_.size() != static_cast<std::size_t>(size) * static_cast<std::size_t>(size)) {
        throw DimensionError("kernel weight count does not match size*size");
    }
    for (float w : weights_) {
        if (!(w >= 0.0f) || !std::isfinite(w)) throw InvalidArgument("kernel weights must be finite and non-negative");
    }
}

Kernel2D Kernel2D::delta() { return Kernel2D(1, {1.0f}); }

Kernel2D Kernel2D::normalized(int size, std::vector<double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) throw InvalidArgument("cannot normalize a kernel with zero mass");
    std::vector<float> out(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) out[i] = static_cast<float>(weights[i] / total);
    return Kernel2D(size, std::move(out));
}

double Kernel2D::sum() const {
    double s = 0.0;
    for (float w : weights_) s += w;
    return s;
}

bool Kernel2D::is_normalized(double tol) const { return std::abs(sum() - 1.0) <= tol; }

AffineTransform AffineTransform::translation(double dx, double dy) {
    AffineTransform t;
    t.tx = dx;
    t.ty = dy;
    return t;
}

AffineTransform AffineTransform::rotate_scale_about(double cx, double cy, double angle, double scale) {
    const double cs = std::cos(angle) * scale;
    const double sn = std::sin(angle) * scale;
    AffineTransform t;
    t.a = cs;
    t.b = -sn;
    t.c = sn;
    t.d = cs;
    t.tx = cx - (cs * cx - sn * cy);
    t.ty = cy - (sn * cx + cs * cy);
    return t;
}

bool AffineTransform::is_invertible() const {
    const double det = determinant();
    return std::isfinite(det) && std::abs(det) > 1e-12;
}

AffineTransform AffineTransform::inverse() const {
    if (!is_invertible()) throw InvalidArgument("affine transform is singular");
    // Pure translations invert exactly.
    if (a == 1.0 && b == 0.0 && c == 0.0 && d == 1.0) return translation(-tx, -ty);
    const double det = determinant();
    AffineTransform inv;
    inv.a = d / det;
    inv.b = -b / det;
    inv.c = -c / det;
    inv.d = a / det;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
}

RgbaPremultiplied premultiply(const RgbImage& image, const GrayMask& alpha) {
    require_same_size(image, alpha, "premultiply");
    RgbaPremultiplied out(image.width(), image.height());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const float a = alpha.at(x, y);
            const auto src = image.pixel(x, y);
            auto dst = out.pixel(x, y);
            for (int c = 0; c < 3; ++c) dst[c] = src[c] * a;
            dst[3] = a;
        }
    }
    return out;
}

RgbImage unpremultiply_over(const RgbaPremultiplied& fg, const RgbImage& bg) {
    require_same_size(fg, bg, "unpremultiply_over");
    RgbImage out(bg.width(), bg.height());
    for (int y = 0; y < bg.height(); ++y) {
        for (int x = 0; x < bg.width(); ++x) {
            const auto f = fg.pixel(x, y);
            const auto b = bg.pixel(x, y);
            auto o = out.pixel(x, y);
            const float inv_alpha = 1.0f - f[3];
            for (int c = 0; c < 3; ++c) o[c] = clamp01(f[c] + b[c] * inv_alpha);
        }
    }
    return out;
}

RgbaPremultiplied warp(const RgbaPremultiplied& src, const AffineTransform& t) {
    const std::vector<double> no_shift(static_cast<std::size_t>(src.height()), 0.0);
    return warp_rows(src, t, no_shift);
}

RgbaPremultiplied warp_rows(const RgbaPremultiplied& src, const AffineTransform& t, std::span<const double> row_shift) {
    if (row_shift.size() != static_cast<std::size_t>(src.height())) {
        throw DimensionError("warp_rows: one shift per row required");
    }
    const AffineTransform inv = t.inverse();
    RgbaPremultiplied out(src.width(), src.height());
    for (int y = 0; y < src.height(); ++y) {
        const double shift = row_shift[static_cast<std::size_t>(y)];
        for (int x = 0; x < src.width(); ++x) {
            const auto [sx, sy] = inv.apply(static_cast<double>(x) - shift, static_cast<double>(y));
            sample_bilinear(src, sx, sy, out.pixel(x, y));
        }
    }
    return out;
}

RgbaPremultiplied convolve(const RgbaPremultiplied& src, const Kernel2D& k) {
    if (!k.is_normalized()) throw InvalidArgument("convolve: kernel weights must sum to 1");
    const int r = k.radius();
    std::vector<Tap> taps;
    for (int v = 0; v < k.size(); ++v) {
        for (int u = 0; u < k.size(); ++u) {
            const float w = k.weight(u, v);
            if (w > 0.0f) taps.push_back({u - r, v - r, static_cast<double>(w)});
        }
    }
    RgbaPremultiplied out(src.width(), src.height());
    for (int y = 0; y < src.height(); ++y) {
        for (int x = 0; x < src.width(); ++x) {
            double acc[4] = {0.0, 0.0, 0.0, 0.0};
            for (const Tap& tap : taps) {
                const int sx = x - tap.dx;
                const int sy = y - tap.dy;
                if (!src.contains(sx, sy)) continue;
                const auto p = src.pixel(sx, sy);
                for (int c = 0; c < 4; ++c) acc[c] += tap.w * static_cast<double>(p[c]);
            }
            auto o = out.pixel(x, y);
            for (int c = 0; c < 4; ++c) o[c] = static_cast<float>(acc[c]);
        }
    }
    return out;
}

std::vector<double> gaussian_weights(double sigma) {
    if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be non-negative");
    if (sigma == 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        w[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (double& v : w) v /= total;
    return w;
}

GrayMask gaussian_blur_mask(const GrayMask& m, double sigma) {
    if (!(sigma >= 0.0)) throw InvalidArgument("gaussian_blur_mask: sigma must be non-negative");
    if (sigma == 0.0) return m;
    const std::vector<double> g = gaussian_weights(sigma);
    const int radius = static_cast<int>(g.size() / 2);
    const int w = m.width();
    const int h = m.height();

    std::vector<double> tmp(m.pixel_count());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int sx = std::clamp(x + k, 0, w - 1);
                acc += g[static_cast<std::size_t>(k + radius)] * m.at(sx, y);
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    GrayMask out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int sy = std::clamp(y + k, 0, h - 1);
                acc += g[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(sy) * w + x];
            }
            out.at(x, y) = clamp01(static_cast<float>(acc));
        }
    }
    return out;
}

GrayMask dilate(const GrayMask& m, int radius) {
    return threshold(rank_filter(threshold(m), radius, [](float a, float b) { return std::max(a, b); }));
}

GrayMask erode(const GrayMask& m, int radius) {
    return threshold(rank_filter(threshold(m), radius, [](float a, float b) { return std::min(a, b); }));
}

GrayMask max_filter(const GrayMask& m, int radius) {
    return rank_filter(m, radius, [](float a, float b) { return std::max(a, b); });
}

GrayMask threshold(const GrayMask& m, float thr) {
    GrayMask out(m.width(), m.height());
    auto src = m.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= thr ? 1.0f : 0.0f;
    return out;
}

GrayMask alpha_plane(const RgbaPremultiplied& img) {
    GrayMask out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) out.at(x, y) = img.at(x, y, 3);
    }
    return out;
}

double mask_sum(const GrayMask& m) {
    double s = 0.0;
    for (float v : m.data()) s += v;
    return s;
}

}  // namespace blurforge
