#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "blurforge/image.hpp"

namespace blurforge::metrics {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    bool operator==(const ConfusionCounts&) const = default;
};

struct ClassScores {
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
    double iou = 1.0;
    bool present = false;  // appears in ground truth or prediction
};

struct SegmentationReport {
    double pixel_accuracy = 0.0;
    double mean_iou = 0.0;
    double weighted_iou = 0.0;
    double mean_class_accuracy = 0.0;
    ClassScores blur;
    ClassScores sharp;
    double threshold = 0.5;
    ConfusionCounts counts;
};

struct CurvePoint {
    double threshold = 0.0;
    double x = 0.0;
    double y = 0.0;
};

struct Curve {
    std::vector<CurvePoint> points;  // sorted by threshold
    double auc = 0.0;
};

struct ClassificationReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double specificity = 0.0;
    double f1 = 0.0;
    double roc_auc = 0.0;
    bool roc_defined = false;  // false when only one class is present; roc_auc is then 0
    double sharp_accuracy = 0.0;  // = specificity
    double blur_accuracy = 0.0;   // = recall
    double threshold = 0.5;
    ConfusionCounts counts;
};

enum class Aggregation { BlurredFraction, MeanProbability };
enum class Objective { IoU, F1 };

/// Pixels with pred >= tau are positive; gt is positive where >= 0.5.
ConfusionCounts confusion(const GrayMask& pred_prob, const GrayMask& gt, double tau);
ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double tau);

/// Precision with no predicted positives is 1; a class absent from both
/// prediction and ground truth scores 1 but is excluded from mean_iou and
/// mean_class_accuracy.
SegmentationReport segmentation_report(const ConfusionCounts& counts, double threshold = 0.5);

double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double f1_score(double precision, double recall);

/// One (recall, precision) point per threshold, AUC by trapezoidal
/// integration over recall. Requires at least two thresholds.
Curve pr_curve(std::span<const GrayMask> pred_probs, std::span<const GrayMask> gts, std::span<const double> thresholds);

double image_score(const GrayMask& pred_prob, double tau_pix = 0.5, Aggregation agg = Aggregation::BlurredFraction);

/// Mann-Whitney U / (n_pos * n_neg); ties count 1/2.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// 101 points 0.00, 0.01, ..., 1.00
std::vector<double> default_grid();

/// Evaluates `objective` at every grid point (sorted internally) and returns
/// the argmax; ties resolve to the smallest tau.
double grid_search(std::vector<double> grid, const std::function<double(double)>& objective);

/// Pooled pixel counts over all maps; IoU is the blur-class IoU.
double grid_search_threshold(std::span<const GrayMask> pred_probs, std::span<const GrayMask> gts,
                             Objective objective, std::vector<double> grid = default_grid());
double grid_search_threshold(std::span<const double> scores, std::span<const int> labels, Objective objective,
                             std::vector<double> grid = default_grid());

ClassificationReport classification_report(std::span<const double> scores, std::span<const int> labels, double tau);

}  // namespace blurforge::metrics
