#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "blurforge/composite.hpp"
#include "blurforge/dataset.hpp"
#include "blurforge/error.hpp"
#include "blurforge/loss.hpp"
#include "blurforge/metrics.hpp"
#include "blurforge/png_io.hpp"
#include "blurforge/rng.hpp"

namespace blurforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

LogLevel log_level_from_env() {
    const char* v = std::getenv("BLURFORGE_LOG");
    if (!v) return LogLevel::Info;
    const std::string s(v);
    if (s == "quiet" || s == "off") return LogLevel::Quiet;
    if (s == "error") return LogLevel::Error;
    if (s == "warn" || s == "warning") return LogLevel::Warn;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Info;
}

namespace {

bool enabled(LogLevel level) {
    static const LogLevel current = log_level_from_env();
    return static_cast<int>(level) <= static_cast<int>(current);
}

void log_error(const std::string& msg) {
    if (enabled(LogLevel::Error)) std::cerr << "error: " << msg << '\n';
}
void log_warn(const std::string& msg) {
    if (enabled(LogLevel::Warn)) std::cerr << "warning: " << msg << '\n';
}
void log_debug(const std::string& msg) {
    if (enabled(LogLevel::Debug)) std::cerr << "debug: " << msg << '\n';
}

// Human-readable lines go to stdout unless logging is silenced entirely.
std::ostream& out() {
    static std::ostringstream sink;
    if (!enabled(LogLevel::Error)) {
        sink.str({});
        return sink;
    }
    return std::cout;
}

void write_json_report(const std::string& path, const json& j) {
    if (path.empty()) return;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write report " + path);
    f << j.dump(2) << '\n';
    if (!f) throw IoError("failed writing report " + path);
}

// Maps the library's exception hierarchy onto exit codes.
template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        log_error(e.what());
        return kConfigError;
    } catch (const InvalidArgument& e) {
        log_error(e.what());
        return kConfigError;
    } catch (const DimensionError& e) {
        log_error(e.what());
        return kConfigError;
    } catch (const IoError& e) {
        log_error(e.what());
        return kIoError;
    } catch (const fs::filesystem_error& e) {
        log_error(e.what());
        return kIoError;
    } catch (const std::exception& e) {
        log_error(e.what());
        return kCheckFailed;
    }
}

void print_counts(const char* title, const std::map<std::string, std::size_t>& counts) {
    out() << "  " << title << ':';
    if (counts.empty()) out() << " none";
    for (const auto& [k, v] : counts) out() << ' ' << k << '=' << v;
    out() << '\n';
}

}  // namespace

int cmd_generate(const GenerateArgs& args) {
    return guarded([&] {
        dataset::BuildConfig cfg = dataset::load_config(args.config);
        if (args.seed) cfg.global_seed = *args.seed;
        if (args.workers < 1) throw ConfigError("--workers must be >= 1");
        log_debug("loaded " + std::to_string(cfg.sources.size()) + " sources from " + args.config);

        const dataset::BuildReport report = dataset::build_dataset(cfg, {args.out, args.workers, args.resume});
        for (const auto& w : report.warnings) log_warn(w);

        out() << "wrote " << report.records.size() << " samples to " << report.manifest_path.string() << '\n';
        if (report.resumed > 0) out() << "  reused " << report.resumed << " existing samples\n";
        print_counts("blur types", report.summary.blur_types);
        print_counts("coverage", report.summary.coverage_modes);
        print_counts("sampling", report.summary.sampling_modes);
        print_counts("splits", report.summary.splits);

        if (!report.failures.empty()) {
            for (const auto& [id, reason] : report.failures) log_error(id + ": " + reason);
            out() << report.failures.size() << " samples failed\n";
            return static_cast<int>(kPartialFailure);
        }
        return static_cast<int>(kOk);
    });
}

int cmd_preview(const PreviewArgs& args) {
    return guarded([&] {
        const auto type = parse_blur_type(args.blur_type);
        if (!type) throw ConfigError("unknown blur type: " + args.blur_type);
        if (args.coverage != "full" && args.coverage != "partial") {
            throw ConfigError("coverage must be 'full' or 'partial'");
        }
        if (!(args.strength >= 0.0)) throw ConfigError("strength must be non-negative");

        const ColorOptions color{args.linearize_srgb};
        const RgbImage image = read_rgb(args.image, color);
        const GrayMask mask = read_mask(args.mask);
        require_same_size(image, mask, "preview mask");
        if (mask_sum(mask) == 0.0) throw ConfigError("preview mask is empty");

        const double radius = std::sqrt(mask_sum(mask) / std::numbers::pi);
        const BlurSpec spec = dataset::instance_blur_spec(*type, args.strength, args.seed, radius, image.height());
        const RgbaPremultiplied fg = premultiply(image, mask);
        const GrayMask region =
            args.coverage == "full" ? mask : partial_region(mask, hash_combine(args.seed, hash_string("region")));
        const CompositeOutput result = composite(image, fg, apply_blur(fg, spec), region, spec.strength);

        const int w = image.width();
        const int h = image.height();
        RgbImage panel(3 * w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    const float v = result.image.at(x, y, c);
                    panel.at(x, y, c) = args.linearize_srgb ? linear_to_srgb(std::clamp(v, 0.0f, 1.0f)) : v;
                    panel.at(w + x, y, c) = result.gt_mask.at(x, y);
                    panel.at(2 * w + x, y, c) = result.gt_intensity.at(x, y);
                }
            }
        }

        fs::create_directories(args.out);
        const fs::path composite_path = fs::path(args.out) / "preview.png";
        const fs::path gt_path = fs::path(args.out) / "preview_gt.png";
        write_rgb8(composite_path, result.image, color);
        write_rgb8(gt_path, panel, ColorOptions{});
        out() << "wrote " << composite_path.string() << " and " << gt_path.string() << " (" << to_string(*type)
              << ", strength " << args.strength << ", blurred fraction "
              << mask_sum(result.gt_mask) / static_cast<double>(w * h) << ")\n";
        return static_cast<int>(kOk);
    });
}

namespace {

std::vector<std::string> png_names(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    return names;
}

json class_json(const metrics::ClassScores& s) {
    return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"iou", s.iou}, {"present", s.present}};
}

json counts_json(const metrics::ConfusionCounts& c) {
    return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

}  // namespace

int cmd_evaluate(const EvaluateArgs& args) {
    return guarded([&] {
        if (args.task != "seg" && args.task != "cls") throw ConfigError("--task must be 'seg' or 'cls'");
        if (args.grid && args.threshold) throw ConfigError("--threshold and --grid are mutually exclusive");
        metrics::Aggregation agg;
        if (args.aggregation == "fraction") {
            agg = metrics::Aggregation::BlurredFraction;
        } else if (args.aggregation == "mean") {
            agg = metrics::Aggregation::MeanProbability;
        } else {
            throw ConfigError("--aggregation must be 'fraction' or 'mean'");
        }

        const fs::path gt_dir(args.gt_dir);
        const fs::path pred_dir(args.pred_dir);
        if (!fs::is_directory(pred_dir)) throw IoError("not a directory: " + pred_dir.string());
        const std::vector<std::string> names = png_names(gt_dir);
        if (names.empty()) throw IoError("no PNG files in " + gt_dir.string());

        std::vector<GrayMask> preds;
        std::vector<GrayMask> gts;
        for (const auto& name : names) {
            const fs::path pred_path = pred_dir / name;
            if (!fs::exists(pred_path)) throw IoError("missing prediction for " + name);
            preds.push_back(read_gray(pred_path));
            gts.push_back(read_mask(gt_dir / name));
            require_same_size(preds.back(), gts.back(), name.c_str());
        }

        json report;
        report["task"] = args.task;
        report["images"] = names.size();
        report["threshold_selection"] = args.grid ? "grid" : "fixed";

        if (args.task == "seg") {
            const double tau = args.grid ? metrics::grid_search_threshold(preds, gts, metrics::Objective::IoU)
                                         : args.threshold.value_or(0.5);
            metrics::ConfusionCounts counts;
            for (std::size_t i = 0; i < preds.size(); ++i) counts += metrics::confusion(preds[i], gts[i], tau);
            const metrics::SegmentationReport seg = metrics::segmentation_report(counts, tau);
            const std::vector<double> grid = metrics::default_grid();
            const metrics::Curve pr = metrics::pr_curve(preds, gts, grid);
            report["threshold"] = tau;
            report["pixel_accuracy"] = seg.pixel_accuracy;
            report["mean_iou"] = seg.mean_iou;
            report["weighted_iou"] = seg.weighted_iou;
            report["mean_class_accuracy"] = seg.mean_class_accuracy;
            report["blur"] = class_json(seg.blur);
            report["sharp"] = class_json(seg.sharp);
            report["pr_auc"] = pr.auc;
            report["counts"] = counts_json(counts);

            out() << std::fixed << std::setprecision(4) << "segmentation over " << names.size()
                  << " images at threshold " << tau << '\n'
                  << "  pixel_accuracy " << seg.pixel_accuracy << "  mean_iou " << seg.mean_iou << "  weighted_iou "
                  << seg.weighted_iou << '\n'
                  << "  blur precision " << seg.blur.precision << "  recall " << seg.blur.recall << "  f1 "
                  << seg.blur.f1 << "  pr_auc " << pr.auc << '\n';
        } else {
            std::vector<double> scores;
            std::vector<int> labels;
            for (std::size_t i = 0; i < preds.size(); ++i) {
                scores.push_back(metrics::image_score(preds[i], 0.5, agg));
                labels.push_back(mask_sum(gts[i]) > 0.0 ? 1 : 0);
            }
            const double tau = args.grid ? metrics::grid_search_threshold(scores, labels, metrics::Objective::F1)
                                         : args.threshold.value_or(0.5);
            const metrics::ClassificationReport cls = metrics::classification_report(scores, labels, tau);
            report["threshold"] = tau;
            report["aggregation"] = agg == metrics::Aggregation::BlurredFraction ? "blurred_fraction" : "mean_probability";
            report["accuracy"] = cls.accuracy;
            report["precision"] = cls.precision;
            report["recall"] = cls.recall;
            report["specificity"] = cls.specificity;
            report["f1"] = cls.f1;
            report["roc_auc"] = cls.roc_defined ? json(cls.roc_auc) : json(nullptr);
            report["sharp_accuracy"] = cls.sharp_accuracy;
            report["blur_accuracy"] = cls.blur_accuracy;
            report["counts"] = counts_json(cls.counts);
            if (!cls.roc_defined) log_warn("roc_auc undefined: ground truth contains a single class");

            out() << std::fixed << std::setprecision(4) << "classification over " << names.size()
                  << " images at threshold " << tau << " (" << report["aggregation"].get<std::string>() << ")\n"
                  << "  accuracy " << cls.accuracy << "  precision " << cls.precision << "  recall " << cls.recall
                  << "  specificity " << cls.specificity << "  f1 " << cls.f1 << '\n';
        }
        write_json_report(args.report, report);
        return static_cast<int>(kOk);
    });
}

int cmd_losscheck(const LossCheckArgs& args) {
    return guarded([&] {
        static const char* const kFaultNames[] = {"bce", "dice", "focal_tversky", "huber", "prevalence"};
        if (!args.inject_fault.empty() &&
            std::none_of(std::begin(kFaultNames), std::end(kFaultNames),
                         [&](const char* n) { return args.inject_fault == n; })) {
            throw ConfigError("unknown --inject-fault target: " + args.inject_fault);
        }
        loss::LossCheckOptions opts;
        opts.inject_fault = args.inject_fault;
        const std::vector<loss::LossCheckEntry> entries = loss::run_loss_checks(opts);

        bool all_passed = true;
        json list = json::array();
        for (const auto& e : entries) {
            all_passed = all_passed && e.passed;
            out() << (e.passed ? "PASS " : "FAIL ") << std::left << std::setw(24) << e.name << std::right
                  << std::scientific << std::setprecision(3) << " error " << e.error << "  tolerance " << e.tolerance
                  << '\n';
            list.push_back({{"name", e.name},
                            {"kind", e.kind},
                            {"value", e.value},
                            {"expected", e.expected},
                            {"error", e.error},
                            {"tolerance", e.tolerance},
                            {"passed", e.passed}});
        }
        out() << (all_passed ? "all loss checks passed\n" : "loss checks FAILED\n");
        write_json_report(args.report, {{"passed", all_passed}, {"checks", list}});

        if (!args.export_dir.empty()) {
            if (args.count < 1) throw ConfigError("--count must be >= 1");
            loss::LossWeights weights;
            if (!args.manifest.empty()) weights.p_target = dataset::manifest_blur_prevalence(args.manifest);
            loss::export_loss_fixtures(args.export_dir, args.count, args.seed, weights);
            out() << "exported " << args.count << " fixtures to " << args.export_dir << '\n';
        }
        return static_cast<int>(all_passed ? kOk : kCheckFailed);
    });
}

int cmd_manifest_verify(const VerifyArgs& args) {
    return guarded([&] {
        if (!fs::exists(args.manifest)) throw IoError("manifest not found: " + args.manifest);
        const dataset::VerifyReport report = dataset::verify_manifest(args.manifest);
        for (const auto& p : report.problems) out() << "problem: " << p << '\n';
        out() << report.records << " records, " << report.problems.size() << " problems\n";
        write_json_report(args.report,
                          {{"ok", report.ok()}, {"records", report.records}, {"problems", report.problems}});
        return static_cast<int>(report.ok() ? kOk : kCheckFailed);
    });
}

}  // namespace blurforge::cli
