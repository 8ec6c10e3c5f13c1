// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Usage: blurforge_acceptance [criterion-name ...]

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "blurforge/composite.hpp"
#include "blurforge/dataset.hpp"
#include "blurforge/loss.hpp"
#include "blurforge/metrics.hpp"
#include "support.hpp"

using namespace blurforge;
using namespace support;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double instance_radius(const RgbaPremultiplied& fg) {
    return std::sqrt(alpha_sum(fg) / 3.141592653589793);
}

// ---------------------------------------------------------------------------

Outcome identity_suite() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 50; ++k) {
        const RgbaPremultiplied fg = random_foreground(128, 128, 1000 + k, 8, k % 2 == 1);
        for (BlurType t : kAllBlurTypes) {
            const BlurSpec spec = dataset::instance_blur_spec(t, 0.0, k * 31 + 7, instance_radius(fg), 128);
            worst = std::max(worst, max_abs_diff(apply_blur(fg, spec).blurred, fg));
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-6 && secs < 30.0,
            fmt("50 foregrounds x 6 types at 128x128, max |diff| %.3g (<= 1e-6), %.1f s (< 30 s)", worst, secs)};
}

Outcome conservation_suite() {
    const double strengths[] = {2.0, 4.0, 6.0, 9.0, 12.0};
    double worst = 0.0;
    std::string worst_case = "none";
    for (std::uint64_t k = 0; k < 4; ++k) {
        const RgbaPremultiplied fg = random_foreground(128, 128, 77 + k, 34, k % 2 == 1);
        const double before = alpha_sum(fg);
        for (BlurType t : kAllBlurTypes)
            for (double s : strengths) {
                const BlurSpec spec = dataset::instance_blur_spec(t, s, 500 + k, instance_radius(fg), 128);
                const double rel = std::abs(alpha_sum(apply_blur(fg, spec).blurred) - before) / before;
                if (rel > worst) {
                    worst = rel;
                    worst_case = fmt("%s s=%.0f fg=%d", std::string(to_string(t)).c_str(), s, static_cast<int>(k));
                }
            }
    }
    double kernel_err = 0.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        CounterRng rng(seed);
        const int steps = static_cast<int>(rng.uniform_int(8, 32));
        const Kernel2D k = generate_random_walk_kernel(steps, rng.uniform(0.0, 20.0), seed);
        double sum = 0.0;
        for (float w : k.weights()) sum += w;
        kernel_err = std::max(kernel_err, std::abs(sum - 1.0));
    }
    return {worst <= 1e-3 && kernel_err <= 1e-6,
            fmt("alpha mass max rel change %.3g at %s (<= 1e-3) over 6 types x 5 strengths x 4 foregrounds; "
                "1000 random-walk kernels max |sum-1| %.3g (<= 1e-6)",
                worst, worst_case.c_str(), kernel_err)};
}

Outcome degeneracy_suite() {
    double curved = 0.0, rolling = 0.0, tversky = 0.0;
    for (std::uint64_t k = 0; k < 6; ++k) {
        const RgbaPremultiplied fg = random_foreground(96, 96, 300 + k, 20, k % 2 == 0);
        CounterRng rng(k);
        BlurSpec straight;
        straight.strength = rng.uniform(1.0, 14.0);
        straight.n_frames = default_frame_count(straight.strength);
        straight.angle = rng.uniform(0.0, 6.283185307179586);
        const RgbaPremultiplied ref = blur_straight(fg, straight).blurred;
        BlurSpec c = straight;
        c.blur_type = BlurType::Curved;
        c.curve_controls = {{1.0 / 3.0, 0.0}, {2.0 / 3.0, 0.0}};
        curved = std::max(curved, max_abs_diff(blur_curved(fg, c).blurred, ref));
        BlurSpec r = straight;
        r.blur_type = BlurType::Rolling;
        r.shear_rate = 0.0;
        rolling = std::max(rolling, max_abs_diff(blur_rolling(fg, r).blurred, ref));
    }
    CounterRng rng(4242);
    for (int k = 0; k < 100; ++k) {
        loss::DenseMap p(8, 8), y(8, 8);
        for (double& v : p.values()) v = rng.uniform();
        const double density = rng.uniform(0.05, 0.95);
        for (double& v : y.values()) v = rng.bernoulli(density) ? 1.0 : 0.0;
        tversky = std::max(tversky, std::abs(loss::tversky_index(p, y, 0.5, 0.5, 0.0) - (1.0 - loss::dice_loss(p, y, 0.0))));
    }
    return {curved <= 1e-5 && rolling <= 1e-6 && tversky <= 1e-9,
            fmt("curved(collinear) vs straight %.3g (<= 1e-5); rolling(shear 0) vs straight %.3g (<= 1e-6); "
                "tversky(0.5,0.5) vs dice coefficient, unsmoothed, %.3g (<= 1e-9) on 100 maps",
                curved, rolling, tversky)};
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("BLURFORGE_LOG=warn '") + BLURFORGE_CLI + "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
    return out;
}

Outcome determinism() {
    TempDir dir("accept_det");
    nlohmann::json cfg;
    cfg["sources"] = nlohmann::json::array();
    for (int i = 0; i < 20; ++i) {
        const std::string img = "s" + std::to_string(i) + ".png";
        write_rgb8(dir / img, random_rgb(256, 256, 900 + static_cast<std::uint64_t>(i)));
        nlohmann::json masks = nlohmann::json::array();
        for (int m = 0; m < 3; ++m) {
            CounterRng rng(hash_combine(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(m)));
            const double r = rng.uniform(14.0, 40.0);
            const GrayMask mask = m == 1 ? rect_mask(256, 256, static_cast<int>(rng.uniform(10, 120)), static_cast<int>(rng.uniform(10, 120)),
                                                     static_cast<int>(rng.uniform(140, 246)), static_cast<int>(rng.uniform(140, 246)))
                                         : disk_mask(256, 256, rng.uniform(r, 256 - r), rng.uniform(r, 256 - r), r);
            const std::string name = "s" + std::to_string(i) + "_m" + std::to_string(m) + ".png";
            write_gray8(dir / name, mask);
            masks.push_back(name);
        }
        cfg["sources"].push_back({{"image", img}, {"masks", masks}});
    }
    cfg["samples_per_source"] = 5;
    cfg["global_seed"] = 2025;
    write_file(dir / "config.json", cfg.dump(2));

    const auto t0 = Clock::now();
    const int a = run_cli("generate -c '" + (dir / "config.json").string() + "' -o '" + (dir / "w1").string() + "' -j 1",
                          dir / "w1.log");
    const int b = run_cli("generate -c '" + (dir / "config.json").string() + "' -o '" + (dir / "w8").string() + "' -j 8",
                          dir / "w8.log");
    const double secs = seconds_since(t0);
    if (a != 0 || b != 0) return {false, fmt("generate exited with %d / %d", a, b)};
    const auto t1 = tree(dir / "w1");
    const auto t8 = tree(dir / "w8");
    std::size_t records = 0;
    for (char ch : t1.at("manifest.jsonl")) records += ch == '\n';
    const std::size_t pngs = t1.size() - 1;
    const bool same = t1 == t8;
    return {same && records == 101 && pngs == 300 && secs < 300.0,
            fmt("100 samples at 256x256, workers 1 vs 8: %s manifests and %zu PNGs, %zu manifest lines, %.1f s for both runs (< 300 s)",
                same ? "byte-identical" : "DIFFERENT", pngs, records, secs)};
}

Outcome gradient_checks() {
    loss::LossCheckOptions opts;
    opts.size = 8;
    opts.h = 1e-4;
    double worst = 0.0;
    bool all = true;
    for (const auto& e : loss::run_loss_checks(opts)) {
        if (e.kind != "gradient") continue;
        worst = std::max(worst, e.error);
        all = all && e.error < 1e-3;
    }
    TempDir dir("accept_lc");
    const int code = run_cli("losscheck", dir / "lc.log");
    return {all && code == 0, fmt("max relative gradient error %.3g (< 1e-3) for bce, dice, focal tversky, masked huber, "
                                  "prevalence on 8x8 maps; losscheck exit %d",
                                  worst, code)};
}

Outcome hand_arithmetic() {
    using loss::DenseMap;
    const double d = 0.1;
    const DenseMap y1100(1, 4, std::vector<double>{1, 1, 0, 0});
    const double errs[] = {
        std::abs(loss::bce_loss(DenseMap(2, 2, 0.5), DenseMap(2, 2, std::vector<double>{1, 0, 0, 1})) - 0.6931471805599453),
        std::abs(loss::dice_loss(DenseMap(1, 4, std::vector<double>{1, 0, 0, 0}), y1100, 0.0) - 1.0 / 3.0),
        std::abs(loss::tversky_index(DenseMap(1, 4, std::vector<double>{1, 0, 1, 0}), y1100, 0.7, 0.3, 0.0) - 0.5),
        std::abs(loss::masked_huber_loss(DenseMap(1, 1, 2 * d), DenseMap(1, 1, 0.0), DenseMap(1, 1, 1.0), d) - 1.5 * d * d),
        std::abs(loss::prevalence_loss(DenseMap(3, 3, 1.0), 0.3) - 0.49),
    };
    const double worst = *std::max_element(std::begin(errs), std::end(errs));
    return {worst <= 1e-6, fmt("ln 2 BCE, 1/3 Dice, 0.5 Tversky, 1.5 delta^2 Huber, 0.49 prevalence: max error %.3g (<= 1e-6)", worst)};
}

Outcome metric_oracles() {
    CounterRng rng(8080);
    int seg_mismatch = 0;
    for (int k = 0; k < 200; ++k) {
        GrayMask gt(16, 16), pred(16, 16);
        const double pg = rng.uniform(0.0, 0.7), pp = rng.uniform(0.0, 0.7);
        for (float& v : gt.data()) v = rng.bernoulli(pg) ? 1.0f : 0.0f;
        for (float& v : pred.data()) v = static_cast<float>(rng.bernoulli(pp) ? rng.uniform(0.5, 1.0) : rng.uniform(0.0, 0.499));
        std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (int yy = 0; yy < 16; ++yy)
            for (int xx = 0; xx < 16; ++xx) {
                const bool p = pred.at(xx, yy) >= 0.5f, g = gt.at(xx, yy) >= 0.5f;
                tp += p && g;
                fp += p && !g;
                fn += !p && g;
                tn += !p && !g;
            }
        const metrics::SegmentationReport r = metrics::segmentation_report(metrics::confusion(pred, gt, 0.5));
        const double iou_b = tp + fp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fp + fn) : 1.0;
        const double iou_s = tn + fp + fn ? static_cast<double>(tn) / static_cast<double>(tn + fp + fn) : 1.0;
        const double acc = static_cast<double>(tp + tn) / 256.0;
        const bool same = r.counts == metrics::ConfusionCounts{tp, fp, fn, tn} && r.pixel_accuracy == acc &&
                          r.blur.iou == iou_b && r.sharp.iou == iou_s;
        seg_mismatch += !same;
    }
    double roc_err = 0.0;
    for (int k = 0; k < 100; ++k) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(4, 80));
        std::vector<double> s(n);
        std::vector<int> l(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = k % 3 == 0 ? std::round(rng.uniform() * 8.0) / 8.0 : rng.uniform();
            l[i] = rng.bernoulli(0.5) ? 1 : 0;
        }
        l[0] = 1;
        l[1] = 0;
        double wins = 0, pairs = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (l[i] == 1 && l[j] == 0) {
                    pairs += 1;
                    wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
                }
        roc_err = std::max(roc_err, std::abs(metrics::roc_auc(s, l) - wins / pairs));
    }
    int grid_mismatch = 0;
    for (int k = 0; k < 100; ++k) {
        std::vector<double> s(30);
        std::vector<int> l(30);
        for (std::size_t i = 0; i < 30; ++i) {
            l[i] = rng.bernoulli(0.5) ? 1 : 0;
            s[i] = std::round(std::clamp(rng.uniform() * 0.7 + (l[i] ? 0.3 : 0.0), 0.0, 1.0) * 20) / 20;
        }
        const auto grid = metrics::default_grid();
        double best = -1.0, best_tau = -1.0;
        for (double tau : grid) {
            std::uint64_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < 30; ++i) {
                const bool pos = s[i] >= tau;
                tp += pos && l[i];
                fp += pos && !l[i];
                fn += !pos && l[i];
            }
            const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
            const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
            const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
            if (f1 > best) {
                best = f1;
                best_tau = tau;
            }
        }
        auto shuffled = grid;
        std::reverse(shuffled.begin(), shuffled.end());
        grid_mismatch += metrics::grid_search_threshold(s, l, metrics::Objective::F1, shuffled) != best_tau;
    }
    const bool flat_ok = metrics::grid_search({0.7, 0.2, 0.9}, [](double) { return 1.0; }) == 0.2;
    return {seg_mismatch == 0 && roc_err <= 1e-9 && grid_mismatch == 0 && flat_ok,
            fmt("segmentation vs pixel loop: %d/200 mismatches; roc_auc vs pairwise Mann-Whitney max err %.3g (<= 1e-9); "
                "grid search vs exhaustive argmax: %d/100 mismatches; flat objective picks smallest tau: %s",
                seg_mismatch, roc_err, grid_mismatch, flat_ok ? "yes" : "no")};
}

Outcome curriculum_gating() {
    std::string detail;
    bool ok = true;
    for (int stage : {1, 2, 3}) {
        dataset::BuildConfig cfg;
        cfg.curriculum_stage = stage;
        const auto allowed = dataset::curriculum_stage(stage).allowed;
        std::size_t disallowed = 0, mixed = 0, instances = 0;
        std::array<double, 3> counts{};
        for (std::size_t i = 0; i < 10000; ++i) {
            dataset::SourceEntry src;
            src.image_ref = "source_" + std::to_string(i % 97);
            dataset::SourceInfo info{320, 240, {}};
            for (int m = 0; m < 4; ++m) {
                src.mask_refs.push_back(src.image_ref + "_" + std::to_string(m));
                src.mask_paths.push_back(src.mask_refs.back());
                info.instances.push_back({static_cast<std::uint64_t>(900 + 10 * m), 20 + 60 * m, 30, 60 + 60 * m, 90});
            }
            const dataset::SampleRecord rec = dataset::plan_sample(src, info, cfg, i / 97, i);
            std::set<BlurType> types;
            for (const auto& p : rec.instances) {
                ++instances;
                counts[static_cast<std::size_t>(p.coverage)] += 1;
                if (std::find(allowed.begin(), allowed.end(), p.spec.blur_type) == allowed.end()) ++disallowed;
                if (p.coverage != dataset::CoverageMode::Sharp) types.insert(p.spec.blur_type);
            }
            mixed += types.size() > 1;
        }
        double dev = 0.0;
        for (std::size_t c = 0; c < 3; ++c) dev = std::max(dev, std::abs(counts[c] / static_cast<double>(instances) - cfg.coverage_probs[c]));
        const bool stage_ok = disallowed == 0 && dev <= 0.02 && (stage == 3 || mixed == 0);
        ok = ok && stage_ok;
        detail += fmt("%sstage %d: %zu disallowed, %zu mixed records, coverage max dev %.4f", detail.empty() ? "" : "; ",
                      stage, disallowed, mixed, dev);
    }
    return {ok, detail + " (10,000 plans per stage, dev <= 0.02)"};
}

Outcome locality() {
    std::size_t fixtures = 0, violations = 0;
    for (int size : {64, 96})
        for (double s : {1.0, 3.0, 6.0, 10.0, 14.0})
            for (std::uint64_t seed = 0; seed < 3; ++seed) {
                const int lo = size / 4, hi = size - size / 4;
                const GrayMask mask = rect_mask(size, size, lo, lo + static_cast<int>(seed), hi, hi);
                const RgbImage bg = random_rgb(size, size, seed + 40);
                const RgbaPremultiplied fg = premultiply(random_rgb(size, size, seed + 80), mask);
                const RgbImage sharp = sharp_composite(bg, fg);
                const double radius = std::sqrt(mask_sum(mask) / 3.141592653589793);
                auto check = [&](const CompositeOutput& out) {
                    ++fixtures;
                    const GrayMask zone = dilate(out.gt_mask, feather_radius(s) + 1);
                    for (int y = 0; y < size; ++y)
                        for (int x = 0; x < size; ++x) {
                            if (zone.at(x, y) > 0.5f) continue;
                            for (std::size_t c = 0; c < 3; ++c)
                                if (out.image.at(x, y, c) != sharp.at(x, y, c)) {
                                    ++violations;
                                    return;
                                }
                        }
                };
                const BlurSpec ring = dataset::instance_blur_spec(BlurType::EdgeRing, s, seed, radius, size);
                check(composite(bg, fg, apply_blur(fg, ring), mask, s));
                for (BlurType t : kAllBlurTypes) {
                    const BlurSpec spec = dataset::instance_blur_spec(t, s, seed + 11, radius, size);
                    check(composite(bg, fg, apply_blur(fg, spec), partial_region(mask, seed * 7 + 1), s));
                }
            }
    return {violations == 0,
            fmt("%zu edge-ring and partial-mask composites on square fixtures, %zu with pixels changed outside "
                "dilate(gt_mask, feather radius + 1)",
                fixtures, violations)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"identity", identity_suite},       {"conservation", conservation_suite}, {"degeneracy", degeneracy_suite},
        {"determinism", determinism},       {"gradients", gradient_checks},       {"hand-arithmetic", hand_arithmetic},
        {"metric-oracles", metric_oracles}, {"curriculum", curriculum_gating},    {"locality", locality},
    };
    std::set<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && !only.count(name)) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.passed;
        std::cout << (o.passed ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : std::string("acceptance: all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
