#include "blurforge/blur.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "blurforge/rng.hpp"

namespace blurforge {

namespace {

constexpr double kPi = std::numbers::pi;
// Arc-length spacing used when stamping the random-walk path.
constexpr double kStampSpacing = 0.25;

void require_type(const BlurSpec& spec, BlurType expected, const char* op) {
    if (spec.blur_type != expected) {
        throw InvalidArgument(std::string(op) + ": expected blur type " + std::string(to_string(expected)) + ", got " +
                              std::string(to_string(spec.blur_type)));
    }
}

// Normalized exposure time of frame i in [-0.5, 0.5].
double frame_time(int i, int n) {
    return static_cast<double>(2 * i - (n - 1)) / static_cast<double>(2 * (n - 1));
}

// Temporal integration: arithmetic mean of n frames, accumulated in double.
template <typename FrameFn>
RgbaPremultiplied average_frames(const RgbaPremultiplied& fg, int n, FrameFn&& frame) {
    std::vector<double> acc(fg.data().size(), 0.0);
    for (int i = 0; i < n; ++i) {
        const RgbaPremultiplied f = frame(i);
        auto src = f.data();
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += src[k];
    }
    RgbaPremultiplied out(fg.width(), fg.height());
    auto dst = out.data();
    for (std::size_t k = 0; k < acc.size(); ++k) dst[k] = static_cast<float>(acc[k] / n);
    return out;
}

// Pixels touched by the foreground before or after blurring.
bool in_support(const RgbaPremultiplied& fg, const RgbaPremultiplied& out, int x, int y) {
    return fg.at(x, y, 3) > 0.0f || out.at(x, y, 3) > 0.0f;
}

GrayMask uniform_extent(const RgbaPremultiplied& fg, const RgbaPremultiplied& out, double extent) {
    GrayMask e(fg.width(), fg.height());
    if (extent <= 0.0) return e;
    for (int y = 0; y < fg.height(); ++y) {
        for (int x = 0; x < fg.width(); ++x) {
            if (in_support(fg, out, x, y)) e.at(x, y) = static_cast<float>(extent);
        }
    }
    return e;
}

BlurResult translate_and_average(const RgbaPremultiplied& fg, const BlurSpec& spec, const std::vector<Offset>& offsets) {
    RgbaPremultiplied out = average_frames(fg, spec.n_frames, [&](int i) {
        const Offset o = offsets[static_cast<std::size_t>(i)];
        return warp(fg, AffineTransform::translation(o.x, o.y));
    });
    GrayMask extent = uniform_extent(fg, out, spec.strength);
    return {std::move(out), std::move(extent)};
}

std::vector<Offset> straight_offsets(const BlurSpec& spec) {
    const double dx = std::cos(spec.angle);
    const double dy = std::sin(spec.angle);
    std::vector<Offset> out(static_cast<std::size_t>(spec.n_frames));
    for (int i = 0; i < spec.n_frames; ++i) {
        const double s = spec.strength * frame_time(i, spec.n_frames);
        out[static_cast<std::size_t>(i)] = {s * dx, s * dy};
    }
    return out;
}

Offset bezier(const std::array<Offset, 4>& p, double t) {
    const double u = 1.0 - t;
    const double b0 = u * u * u;
    const double b1 = 3.0 * u * u * t;
    const double b2 = 3.0 * u * t * t;
    const double b3 = t * t * t;
    return {b0 * p[0].x + b1 * p[1].x + b2 * p[2].x + b3 * p[3].x, b0 * p[0].y + b1 * p[1].y + b2 * p[2].y + b3 * p[3].y};
}

std::vector<Offset> curved_offsets(const BlurSpec& spec) {
    const int n = spec.n_frames;
    std::vector<Offset> pts(static_cast<std::size_t>(n));
    if (spec.strength == 0.0) return pts;
    const auto poly = curve_control_polygon(spec);
    for (int i = 0; i < n; ++i) pts[static_cast<std::size_t>(i)] = bezier(poly, static_cast<double>(i) / (n - 1));

    double length = 0.0;
    for (int i = 1; i < n; ++i) {
        length += std::hypot(pts[static_cast<std::size_t>(i)].x - pts[static_cast<std::size_t>(i - 1)].x,
                             pts[static_cast<std::size_t>(i)].y - pts[static_cast<std::size_t>(i - 1)].y);
    }
    double mx = 0.0;
    double my = 0.0;
    for (const Offset& p : pts) {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    const double scale = length > 0.0 ? spec.strength / length : 0.0;
    for (Offset& p : pts) p = {(p.x - mx) * scale, (p.y - my) * scale};
    return pts;
}

// Apparent area grows linearly over the exposure, from 2 - m^2 to m^2 times
// the original, so the frame-averaged area (and alpha mass) is unchanged.
double zoom_scale(double max_scale, double t) {
    return std::sqrt(1.0 + (max_scale * max_scale - 1.0) * 2.0 * t);
}

bool alpha_above_half(const GrayMask& alpha, int x, int y) { return alpha.at(x, y) > 0.5f; }

}  // namespace

std::string_view to_string(BlurType t) {
    switch (t) {
        case BlurType::Straight: return "straight";
        case BlurType::Curved: return "curved";
        case BlurType::ZoomRotation: return "zoom_rotation";
        case BlurType::RandomWalk: return "random_walk";
        case BlurType::EdgeRing: return "edge_ring";
        case BlurType::Rolling: return "rolling";
    }
    return "unknown";
}

std::optional<BlurType> parse_blur_type(std::string_view name) {
    for (BlurType t : kAllBlurTypes) {
        if (to_string(t) == name) return t;
    }
    return std::nullopt;
}

void BlurSpec::validate() const {
    if (!(strength >= 0.0) || !std::isfinite(strength)) throw InvalidArgument("blur strength must be finite and >= 0");
    if (n_frames < 3 || n_frames > 21) throw InvalidArgument("n_frames must lie in [3, 21], got " + std::to_string(n_frames));
    if (!std::isfinite(angle)) throw InvalidArgument("blur angle must be finite");
    if (curve_controls.size() > 2) throw InvalidArgument("at most two curve control points");
    if (!std::isfinite(max_rotation)) throw InvalidArgument("max_rotation must be finite");
    if (!(max_scale > 0.0 && max_scale * max_scale < 2.0)) throw InvalidArgument("max_scale must lie in (0, sqrt(2))");
    if (walk_steps < 0) throw InvalidArgument("walk_steps must be >= 0");
    if (blur_type == BlurType::EdgeRing && ring_width < 1) throw InvalidArgument("ring_width must be >= 1 for edge-ring blur");
    if (!std::isfinite(shear_rate)) throw InvalidArgument("shear_rate must be finite");
}

int default_frame_count(double strength) {
    const double n = std::round(strength) + 1.0;
    return static_cast<int>(std::clamp(n, 3.0, 21.0));
}

std::array<Offset, 4> curve_control_polygon(const BlurSpec& spec) {
    const double dx = std::cos(spec.angle);
    const double dy = std::sin(spec.angle);
    const double half = 0.5 * spec.strength;
    const Offset p0{-half * dx, -half * dy};
    const Offset p3{half * dx, half * dy};

    CounterRng rng(hash_combine(spec.seed, 0xC0B7EULL));
    std::array<ControlPoint, 2> ctrl = {ControlPoint{1.0 / 3.0, rng.uniform(-0.5, 0.5)},
                                        ControlPoint{2.0 / 3.0, rng.uniform(-0.5, 0.5)}};
    for (std::size_t k = 0; k < spec.curve_controls.size() && k < 2; ++k) ctrl[k] = spec.curve_controls[k];

    // Perpendicular unit vector (left normal of the chord).
    const double nx = -dy;
    const double ny = dx;
    auto place = [&](const ControlPoint& c) {
        const double off = c.across * spec.strength;
        return Offset{p0.x + c.along * (p3.x - p0.x) + off * nx, p0.y + c.along * (p3.y - p0.y) + off * ny};
    };
    return {p0, place(ctrl[0]), place(ctrl[1]), p3};
}

std::vector<Offset> generate_trajectory(const BlurSpec& spec) {
    spec.validate();
    switch (spec.blur_type) {
        case BlurType::Straight:
        case BlurType::Rolling: return straight_offsets(spec);
        case BlurType::Curved: return curved_offsets(spec);
        case BlurType::ZoomRotation: return std::vector<Offset>(static_cast<std::size_t>(spec.n_frames));
        default: break;
    }
    throw InvalidArgument("generate_trajectory: blur type " + std::string(to_string(spec.blur_type)) +
                          " has no trajectory");
}

RandomWalkPsf generate_random_walk_psf(int walk_steps, double strength, std::uint64_t seed) {
    if (walk_steps < 0) throw InvalidArgument("walk_steps must be >= 0");
    if (!(strength >= 0.0)) throw InvalidArgument("strength must be >= 0");
    if (walk_steps == 0 || strength == 0.0) return {Kernel2D::delta(), 0.0};

    CounterRng rng(hash_combine(seed, 0x5A1CULL));
    std::vector<Offset> path{{0.0, 0.0}};
    double heading = rng.uniform(0.0, 2.0 * kPi);
    for (int i = 0; i < walk_steps; ++i) {
        heading += rng.uniform(-kPi / 3.0, kPi / 3.0);
        const Offset& last = path.back();
        path.push_back({last.x + std::cos(heading), last.y + std::sin(heading)});
    }

    double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
    for (const Offset& p : path) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const double extent = std::max(max_x - min_x, max_y - min_y);
    if (!(extent > 0.0)) return {Kernel2D::delta(), 0.0};
    const double scale = strength / extent;

    // Uniform arc-length samples along the scaled polyline (all segments
    // share the same length).
    const int sub = std::max(1, static_cast<int>(std::ceil(scale / kStampSpacing)));
    std::vector<Offset> samples;
    samples.reserve(static_cast<std::size_t>(walk_steps * sub + 1));
    for (int i = 0; i < walk_steps; ++i) {
        const Offset a = path[static_cast<std::size_t>(i)];
        const Offset b = path[static_cast<std::size_t>(i + 1)];
        for (int j = 0; j < sub; ++j) {
            const double t = static_cast<double>(j) / sub;
            samples.push_back({(a.x + t * (b.x - a.x)) * scale, (a.y + t * (b.y - a.y)) * scale});
        }
    }
    samples.push_back({path.back().x * scale, path.back().y * scale});

    // Center the stamp mass on the kernel origin so the blur does not shift the subject.
    double mx = 0.0, my = 0.0;
    for (const Offset& s : samples) {
        mx += s.x;
        my += s.y;
    }
    mx /= static_cast<double>(samples.size());
    my /= static_cast<double>(samples.size());
    double reach = 0.0;
    for (Offset& s : samples) {
        s.x -= mx;
        s.y -= my;
        reach = std::max({reach, std::abs(s.x), std::abs(s.y)});
    }
    const int radius = static_cast<int>(std::ceil(reach));
    const int size = 2 * radius + 1;
    std::vector<double> weights(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0.0);
    for (const Offset& s : samples) {
        const double px = s.x + radius;
        const double py = s.y + radius;
        const double fx0 = std::floor(px);
        const double fy0 = std::floor(py);
        const double fx = px - fx0;
        const double fy = py - fy0;
        const int x0 = static_cast<int>(fx0);
        const int y0 = static_cast<int>(fy0);
        const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int k = 0; k < 4; ++k) {
            if (w[k] == 0.0) continue;
            if (xs[k] < 0 || ys[k] < 0 || xs[k] >= size || ys[k] >= size) continue;
            weights[static_cast<std::size_t>(ys[k] * size + xs[k])] += w[k];
        }
    }
    return {Kernel2D::normalized(size, std::move(weights)), scale * walk_steps};
}

Kernel2D generate_random_walk_kernel(int walk_steps, double strength, std::uint64_t seed) {
    return generate_random_walk_psf(walk_steps, strength, seed).kernel;
}

BlurResult blur_straight(const RgbaPremultiplied& fg, const BlurSpec& spec) {
    require_type(spec, BlurType::Straight, "blur_straight");
    spec.validate();
    return translate_and_average(fg, spec, straight_offsets(spec));
}

BlurResult blur_curved(const RgbaPremultiplied& fg, const BlurSpec& spec) {
    require_type(spec, BlurType::Curved, "blur_curved");
    spec.validate();
    return translate_and_average(fg, spec, curved_offsets(spec));
}

std::optional<Offset> alpha_centroid(const RgbaPremultiplied& fg) {
    double sx = 0.0, sy = 0.0, sa = 0.0;
    for (int y = 0; y < fg.height(); ++y) {
        for (int x = 0; x < fg.width(); ++x) {
            const double a = fg.at(x, y, 3);
            sx += a * x;
            sy += a * y;
            sa += a;
        }
    }
    if (!(sa > 0.0)) return std::nullopt;
    return Offset{sx / sa, sy / sa};
}

BlurResult blur_zoom_rotation(const RgbaPremultiplied& fg, const BlurSpec& spec) {
    require_type(spec, BlurType::ZoomRotation, "blur_zoom_rotation");
    spec.validate();
    const auto centroid = alpha_centroid(fg);
    if (!centroid) throw InvalidArgument("blur_zoom_rotation: foreground has no alpha, centroid undefined");
    const Offset c = *centroid;
    RgbaPremultiplied out = average_frames(fg, spec.n_frames, [&](int i) {
        const double t = frame_time(i, spec.n_frames);
        return warp(fg, AffineTransform::rotate_scale_about(c.x, c.y, spec.max_rotation * t, zoom_scale(spec.max_scale, t)));
    });
    GrayMask extent(fg.width(), fg.height());
    const double rate = std::abs(spec.max_rotation) + std::abs(spec.max_scale - 1.0);
    if (rate > 0.0) {
        for (int y = 0; y < fg.height(); ++y) {
            for (int x = 0; x < fg.width(); ++x) {
                if (in_support(fg, out, x, y)) extent.at(x, y) = static_cast<float>(std::hypot(x - c.x, y - c.y) * rate);
            }
        }
    }
    return {std::move(out), std::move(extent)};
}

BlurResult blur_random_walk(const RgbaPremultiplied& fg, const BlurSpec& spec) {
    require_type(spec, BlurType::RandomWalk, "blur_random_walk");
    spec.validate();
    const RandomWalkPsf psf = generate_random_walk_psf(spec.walk_steps, spec.strength, spec.seed);
    if (psf.kernel.size() == 1) return {fg, GrayMask(fg.width(), fg.height())};
    RgbaPremultiplied out = convolve(fg, psf.kernel);
    GrayMask extent = uniform_extent(fg, out, psf.path_length);
    return {std::move(out), std::move(extent)};
}

GrayMask edge_band(const GrayMask& alpha, int ring_width) {
    if (ring_width < 0) throw InvalidArgument("ring_width must be >= 0");
    GrayMask solid(alpha.width(), alpha.height());
    for (int y = 0; y < alpha.height(); ++y) {
        for (int x = 0; x < alpha.width(); ++x) solid.at(x, y) = alpha_above_half(alpha, x, y) ? 1.0f : 0.0f;
    }
    const GrayMask outer = dilate(solid, ring_width);
    const GrayMask inner = erode(solid, ring_width);
    GrayMask band(alpha.width(), alpha.height());
    for (int y = 0; y < alpha.height(); ++y) {
        for (int x = 0; x < alpha.width(); ++x) band.at(x, y) = (outer.at(x, y) > 0.5f && inner.at(x, y) < 0.5f) ? 1.0f : 0.0f;
    }
    return band;
}

BlurResult blur_edge_ring(const RgbaPremultiplied& fg, const BlurSpec& spec) {
    require_type(spec, BlurType::EdgeRing, "blur_edge_ring");
    spec.validate();
    BlurSpec straight = spec;
    straight.blur_type = BlurType::Straight;
    const BlurResult smeared = blur_straight(fg, straight);
    const GrayMask band = edge_band(alpha_plane(fg), spec.ring_width);

    RgbaPremultiplied out = fg;
    GrayMask extent(fg.width(), fg.height());
    for (int y = 0; y < fg.height(); ++y) {
        for (int x = 0; x < fg.width(); ++x) {
            if (band.at(x, y) < 0.5f) continue;
            // Band pixels touching the outside of the band get half weight.
            bool border = false;
            for (int dy = -1; dy <= 1 && !border; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (band.contains(nx, ny) && band.at(nx, ny) < 0.5f) {
                        border = true;
                        break;
                    }
                }
            }
            const auto s = smeared.blurred.pixel(x, y);
            auto o = out.pixel(x, y);
            if (border) {
                for (int c = 0; c < 4; ++c) o[c] = 0.5f * o[c] + 0.5f * s[c];
            } else {
                for (int c = 0; c < 4; ++c) o[c] = s[c];
            }
            if (spec.strength > 0.0 && in_support(fg, out, x, y)) extent.at(x, y) = static_cast<float>(spec.strength);
        }
    }
    return {std::move(out), std::move(extent)};
}

BlurResult blur_rolling(const RgbaPremultiplied& fg, const BlurSpec& spec) {
    require_type(spec, BlurType::Rolling, "blur_rolling");
    spec.validate();
    const std::vector<Offset> offsets = straight_offsets(spec);
    const double mid = 0.5 * fg.height();
    RgbaPremultiplied out = average_frames(fg, spec.n_frames, [&](int i) {
        const double t = frame_time(i, spec.n_frames);
        std::vector<double> shift(static_cast<std::size_t>(fg.height()));
        for (int y = 0; y < fg.height(); ++y) shift[static_cast<std::size_t>(y)] = spec.shear_rate * (y - mid) * t;
        const Offset o = offsets[static_cast<std::size_t>(i)];
        return warp_rows(fg, AffineTransform::translation(o.x, o.y), shift);
    });
    GrayMask extent(fg.width(), fg.height());
    const double dx = spec.strength * std::cos(spec.angle);
    const double dy = spec.strength * std::sin(spec.angle);
    for (int y = 0; y < fg.height(); ++y) {
        const double len = std::hypot(dx + spec.shear_rate * (y - mid), dy);
        if (len <= 0.0) continue;
        for (int x = 0; x < fg.width(); ++x) {
            if (in_support(fg, out, x, y)) extent.at(x, y) = static_cast<float>(len);
        }
    }
    return {std::move(out), std::move(extent)};
}

BlurResult apply_blur(const RgbaPremultiplied& fg, const BlurSpec& spec) {
    switch (spec.blur_type) {
        case BlurType::Straight: return blur_straight(fg, spec);
        case BlurType::Curved: return blur_curved(fg, spec);
        case BlurType::ZoomRotation: return blur_zoom_rotation(fg, spec);
        case BlurType::RandomWalk: return blur_random_walk(fg, spec);
        case BlurType::EdgeRing: return blur_edge_ring(fg, spec);
        case BlurType::Rolling: return blur_rolling(fg, spec);
    }
    throw InvalidArgument("apply_blur: unknown blur type");
}

}  // namespace blurforge
