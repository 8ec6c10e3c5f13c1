// Shared fixtures and brute-force reference implementations for the tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "blurforge/blur.hpp"
#include "blurforge/image.hpp"
#include "blurforge/png_io.hpp"
#include "blurforge/rng.hpp"

namespace support {

using namespace blurforge;
namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        const auto stamp = static_cast<std::uint64_t>(::getpid());
        path_ = fs::temp_directory_path() /
                ("blurforge_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

inline GrayMask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    GrayMask m(w, h);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.at(x, y) = 1.0f;
    return m;
}

inline GrayMask disk_mask(int w, int h, double cx, double cy, double r) {
    GrayMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.at(x, y) = 1.0f;
    return m;
}

inline RgbImage random_rgb(int w, int h, std::uint64_t seed) {
    CounterRng rng(seed);
    RgbImage img(w, h);
    for (float& v : img.data()) v = static_cast<float>(rng.uniform());
    return img;
}

inline RgbImage constant_rgb(int w, int h, float r, float g, float b) {
    RgbImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    return img;
}

/// Random blob foreground: union of a few disks and rectangles kept at least
/// `margin` pixels from the image border, with random colors and soft or
/// hard alpha.
inline RgbaPremultiplied random_foreground(int w, int h, std::uint64_t seed, int margin, bool soft_alpha = false) {
    CounterRng rng(seed);
    GrayMask alpha(w, h);
    const int shapes = static_cast<int>(rng.uniform_int(1, 4));
    for (int s = 0; s < shapes; ++s) {
        const double cx = rng.uniform(margin + 6, w - margin - 6);
        const double cy = rng.uniform(margin + 6, h - margin - 6);
        const double r = rng.uniform(4.0, std::min({cx - margin, w - margin - 1 - cx, cy - margin, h - margin - 1 - cy, 24.0}));
        const bool disk = rng.bernoulli(0.5);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const bool inside = disk ? (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r
                                         : std::abs(x - cx) <= r && std::abs(y - cy) <= r * 0.7;
                if (inside) alpha.at(x, y) = 1.0f;
            }
    }
    if (soft_alpha) {
        for (float& a : alpha.data())
            if (a > 0.0f) a = static_cast<float>(rng.uniform(0.2, 1.0));
    }
    return premultiply(random_rgb(w, h, seed ^ 0x5A5A5A5AULL), alpha);
}

inline RgbaPremultiplied single_pixel(int w, int h, int x, int y) {
    RgbaPremultiplied img(w, h);
    for (int c = 0; c < 4; ++c) img.at(x, y, static_cast<std::size_t>(c)) = 1.0f;
    return img;
}

inline double alpha_sum(const RgbaPremultiplied& img) {
    double s = 0.0;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) s += img.at(x, y, 3);
    return s;
}

template <std::size_t C>
double max_abs_diff(const Image<C>& a, const Image<C>& b) {
    double m = 0.0;
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, static_cast<double>(std::abs(da[i] - db[i])));
    return m;
}

// ---------------------------------------------------------------------------
// Reference implementations written independently of the library code paths.

/// Bilinear sample with transparent outside, evaluated from first principles.
inline double bilinear_oracle(const RgbaPremultiplied& src, double x, double y, std::size_t c) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    double total = 0.0;
    for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
            const int px = x0 + dx;
            const int py = y0 + dy;
            const double wx = dx == 0 ? 1.0 - (x - x0) : (x - x0);
            const double wy = dy == 0 ? 1.0 - (y - y0) : (y - y0);
            if (px < 0 || py < 0 || px >= src.width() || py >= src.height()) continue;
            total += wx * wy * src.at(px, py, c);
        }
    return total;
}

/// Mean of translated copies, each sampled by the bilinear oracle.
inline RgbaPremultiplied translate_average_oracle(const RgbaPremultiplied& src, const std::vector<Offset>& offsets) {
    RgbaPremultiplied out(src.width(), src.height());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x)
            for (std::size_t c = 0; c < 4; ++c) {
                double acc = 0.0;
                for (const Offset& o : offsets) acc += bilinear_oracle(src, x - o.x, y - o.y, c);
                out.at(x, y, c) = static_cast<float>(acc / static_cast<double>(offsets.size()));
            }
    return out;
}

/// Direct-summation true convolution with zero padding.
inline RgbaPremultiplied convolve_oracle(const RgbaPremultiplied& src, const Kernel2D& k) {
    RgbaPremultiplied out(src.width(), src.height());
    const int r = k.radius();
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x)
            for (std::size_t c = 0; c < 4; ++c) {
                double acc = 0.0;
                for (int v = -r; v <= r; ++v)
                    for (int u = -r; u <= r; ++u) {
                        const int sx = x - u;
                        const int sy = y - v;
                        if (!src.contains(sx, sy)) continue;
                        acc += static_cast<double>(k.weight(u + r, v + r)) * src.at(sx, sy, c);
                    }
                out.at(x, y, c) = static_cast<float>(acc);
            }
    return out;
}

/// Square-element morphology by exhaustive neighborhood scan.
inline GrayMask morph_oracle(const GrayMask& m, int r, bool dilation) {
    GrayMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            bool any = false;
            bool all = true;
            for (int v = -r; v <= r; ++v)
                for (int u = -r; u <= r; ++u) {
                    if (!m.contains(x + u, y + v)) continue;
                    const bool on = m.at(x + u, y + v) >= 0.5f;
                    any = any || on;
                    all = all && on;
                }
            out.at(x, y) = (dilation ? any : all) ? 1.0f : 0.0f;
        }
    return out;
}

}  // namespace support
