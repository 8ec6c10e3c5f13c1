#include "blurforge/composite.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "blurforge/rng.hpp"

namespace blurforge {

double feather_sigma(double strength) {
    if (!(strength >= 0.0)) throw InvalidArgument("feather strength must be >= 0");
    return std::clamp(0.25 * strength, 0.5, 4.0);
}

int feather_radius(double strength) { return static_cast<int>(std::ceil(3.0 * feather_sigma(strength))); }

GrayMask feather_alpha(const GrayMask& alpha, double strength) {
    return gaussian_blur_mask(alpha, feather_sigma(strength));
}

RgbImage sharp_composite(const RgbImage& bg, const RgbaPremultiplied& fg) { return unpremultiply_over(fg, bg); }

CompositeOutput composite(const RgbImage& bg, const RgbaPremultiplied& fg, const BlurResult& blur,
                          const GrayMask& region, double strength, double max_extent) {
    require_same_size(fg, bg, "composite");
    require_same_size(blur.blurred, bg, "composite");
    require_same_size(blur.extent_map, bg, "composite");
    require_same_size(region, bg, "composite");
    if (!(max_extent > 0.0)) throw InvalidArgument("max_extent must be positive");

    const int w = bg.width();
    const int h = bg.height();
    GrayMask applied(w, h);
    bool any = false;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (region.at(x, y) <= 0.5f) continue;
            if (fg.at(x, y, 3) <= 0.0f) throw InvalidArgument("composite: region extends outside the instance support");
            if (blur.extent_map.at(x, y) >= kMinVisibleExtent) {
                applied.at(x, y) = 1.0f;
                any = true;
            }
        }
    }

    RgbImage sharp = sharp_composite(bg, fg);
    if (!any) return {std::move(sharp), GrayMask(w, h), GrayMask(w, h)};

    const int radius = feather_radius(strength);
    GrayMask gt_mask = dilate(applied, radius);
    const GrayMask weight = feather_alpha(gt_mask, strength);

    GrayMask applied_extent(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (applied.at(x, y) > 0.5f) applied_extent.at(x, y) = blur.extent_map.at(x, y);
        }
    }
    const GrayMask spread = max_filter(applied_extent, radius);
    GrayMask gt_intensity(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (gt_mask.at(x, y) > 0.5f) {
                gt_intensity.at(x, y) = static_cast<float>(std::clamp(spread.at(x, y) / max_extent, 0.0, 1.0));
            }
        }
    }

    const RgbImage blurred = unpremultiply_over(blur.blurred, bg);
    RgbImage image = sharp;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float a = weight.at(x, y);
            if (a <= 0.0f) continue;
            auto o = image.pixel(x, y);
            const auto b = blurred.pixel(x, y);
            if (a >= 1.0f) {
                for (int c = 0; c < 3; ++c) o[c] = b[c];
            } else {
                for (int c = 0; c < 3; ++c) o[c] = std::clamp(o[c] + a * (b[c] - o[c]), 0.0f, 1.0f);
            }
        }
    }
    return {std::move(image), std::move(gt_mask), std::move(gt_intensity)};
}

GrayMask partial_region(const GrayMask& instance, std::uint64_t seed, double min_fraction, double max_fraction) {
    if (!(min_fraction > 0.0 && min_fraction <= max_fraction && max_fraction <= 1.0)) {
        throw InvalidArgument("partial_region: need 0 < min_fraction <= max_fraction <= 1");
    }
    GrayMask out(instance.width(), instance.height());
    double cx = 0.0, cy = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < instance.height(); ++y) {
        for (int x = 0; x < instance.width(); ++x) {
            if (instance.at(x, y) > 0.5f) {
                cx += x;
                cy += y;
                ++count;
            }
        }
    }
    if (count == 0) return out;
    cx /= static_cast<double>(count);
    cy /= static_cast<double>(count);

    CounterRng rng(hash_combine(seed, 0x9A47ULL));
    const int cuts = static_cast<int>(rng.uniform_int(1, 3));
    const double target = rng.uniform(min_fraction, max_fraction);
    std::vector<std::array<double, 2>> normals;
    for (int k = 0; k < cuts; ++k) {
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        normals.push_back({std::cos(theta), std::sin(theta)});
    }

    // A pixel lies in the intersection of half-planes {n.(p-c) <= d} iff its
    // largest projection is <= d; pick d at the target area quantile.
    auto score = [&](int x, int y) {
        double s = -1e300;
        for (const auto& n : normals) s = std::max(s, n[0] * (x - cx) + n[1] * (y - cy));
        return s;
    };
    std::vector<double> scores;
    scores.reserve(count);
    for (int y = 0; y < instance.height(); ++y) {
        for (int x = 0; x < instance.width(); ++x) {
            if (instance.at(x, y) > 0.5f) scores.push_back(score(x, y));
        }
    }
    std::sort(scores.begin(), scores.end());
    const auto keep = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(target * static_cast<double>(count))),
                                              1, count);
    const double cutoff = scores[keep - 1];
    for (int y = 0; y < instance.height(); ++y) {
        for (int x = 0; x < instance.width(); ++x) {
            if (instance.at(x, y) > 0.5f && score(x, y) <= cutoff) out.at(x, y) = 1.0f;
        }
    }
    return out;
}

}  // namespace blurforge
