#pragma once

#include <cstdint>

#include "blurforge/blur.hpp"
#include "blurforge/image.hpp"

namespace blurforge {

struct CompositeOutput {
    RgbImage image;
    GrayMask gt_mask;       // binary: where blur counts as applied
    GrayMask gt_intensity;  // continuous blur intensity in [0,1], zero outside gt_mask
};

inline constexpr double kDefaultMaxExtent = 32.0;
// Motion below this many pixels is treated as sharp.
inline constexpr double kMinVisibleExtent = 0.5;

/// clamp(0.25 * strength, 0.5, 4.0)
double feather_sigma(double strength);
/// Support radius of the feather kernel, ceil(3 * sigma).
int feather_radius(double strength);

GrayMask feather_alpha(const GrayMask& alpha, double strength);

/// Plain over-composite of the unblurred foreground.
RgbImage sharp_composite(const RgbImage& bg, const RgbaPremultiplied& fg);

/// Blends the blurred foreground onto `bg` inside `region` with a feathered
/// transition and emits the matching ground truth. `fg` is the unblurred
/// foreground that `blur` was produced from; `region` must lie inside its
/// alpha support.
CompositeOutput composite(const RgbImage& bg, const RgbaPremultiplied& fg, const BlurResult& blur,
                          const GrayMask& region, double strength, double max_extent = kDefaultMaxExtent);

/// Seeded sub-region of an instance: the intersection of 1-3 random
/// half-planes through the instance centroid, sized to cover a uniformly
/// drawn fraction in [min_fraction, max_fraction] of the instance area.
GrayMask partial_region(const GrayMask& instance, std::uint64_t seed, double min_fraction = 0.3,
                        double max_fraction = 0.7);

}  // namespace blurforge
