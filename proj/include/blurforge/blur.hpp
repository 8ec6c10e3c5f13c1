#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "blurforge/image.hpp"

namespace blurforge {

enum class BlurType { Straight, Curved, ZoomRotation, RandomWalk, EdgeRing, Rolling };

inline constexpr std::array<BlurType, 6> kAllBlurTypes = {BlurType::Straight,   BlurType::Curved,
                                                          BlurType::ZoomRotation, BlurType::RandomWalk,
                                                          BlurType::EdgeRing,   BlurType::Rolling};

std::string_view to_string(BlurType t);
std::optional<BlurType> parse_blur_type(std::string_view name);

/// Curve control point relative to the chord of a Curved trajectory:
/// `along` is the fraction of the chord, `across` the perpendicular offset
/// in units of strength. Collinear thirds {(1/3,0), (2/3,0)} give a
/// uniformly parameterized straight segment.
struct ControlPoint {
    double along = 0.0;
    double across = 0.0;
    bool operator==(const ControlPoint&) const = default;
};

struct BlurSpec {
    BlurType blur_type = BlurType::Straight;
    double strength = 0.0;  // total trajectory path length, pixels
    int n_frames = 3;
    double angle = 0.0;  // radians; Straight, Curved chord and Rolling direction
    std::vector<ControlPoint> curve_controls;  // 0-2 entries; missing ones are drawn from seed
    double max_rotation = 0.0;  // radians
    double max_scale = 1.0;     // scale at the end of the exposure; (0, sqrt 2)
    int walk_steps = 0;
    int ring_width = 1;  // pixels
    double shear_rate = 0.0;  // pixels per row
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const BlurSpec&) const = default;
};

/// clamp(round(strength) + 1, 3, 21)
int default_frame_count(double strength);

struct Offset {
    double x = 0.0;
    double y = 0.0;
};

struct BlurResult {
    RgbaPremultiplied blurred;
    GrayMask extent_map;  // motion extent in pixels
};

/// Per-frame displacements, zero-mean, with polyline length = strength.
/// ZoomRotation keeps its pivot fixed and therefore yields zero offsets.
std::vector<Offset> generate_trajectory(const BlurSpec& spec);

/// Cubic Bezier control polygon (P0..P3) of a Curved BlurSpec before
/// arc-length normalization and centering.
std::array<Offset, 4> curve_control_polygon(const BlurSpec& spec);

struct RandomWalkPsf {
    Kernel2D kernel;
    double path_length = 0.0;
};

RandomWalkPsf generate_random_walk_psf(int walk_steps, double strength, std::uint64_t seed);
Kernel2D generate_random_walk_kernel(int walk_steps, double strength, std::uint64_t seed);

BlurResult blur_straight(const RgbaPremultiplied& fg, const BlurSpec& spec);
BlurResult blur_curved(const RgbaPremultiplied& fg, const BlurSpec& spec);
BlurResult blur_zoom_rotation(const RgbaPremultiplied& fg, const BlurSpec& spec);
BlurResult blur_random_walk(const RgbaPremultiplied& fg, const BlurSpec& spec);
BlurResult blur_edge_ring(const RgbaPremultiplied& fg, const BlurSpec& spec);
BlurResult blur_rolling(const RgbaPremultiplied& fg, const BlurSpec& spec);

BlurResult apply_blur(const RgbaPremultiplied& fg, const BlurSpec& spec);

/// dilate(alpha > 0.5, r) AND NOT erode(alpha > 0.5, r)
GrayMask edge_band(const GrayMask& alpha, int ring_width);

/// Alpha-weighted centroid; nullopt when the alpha plane is empty.
std::optional<Offset> alpha_centroid(const RgbaPremultiplied& fg);

}  // namespace blurforge
