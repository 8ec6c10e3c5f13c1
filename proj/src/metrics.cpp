#include "blurforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blurforge/error.hpp"

namespace blurforge::metrics {

namespace {

double ratio_or(std::uint64_t num, std::uint64_t den, double fallback) {
    return den == 0 ? fallback : static_cast<double>(num) / static_cast<double>(den);
}

double blur_iou(const ConfusionCounts& c) { return ratio_or(c.tp, c.tp + c.fp + c.fn, 1.0); }

double objective_value(const ConfusionCounts& c, Objective objective) {
    return objective == Objective::IoU ? blur_iou(c) : f1_score(precision(c), recall(c));
}

void require_labels(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
    for (int l : labels) {
        if (l != 0 && l != 1) throw InvalidArgument("labels must be 0 or 1");
    }
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

ConfusionCounts confusion(const GrayMask& pred_prob, const GrayMask& gt, double tau) {
    require_same_size(pred_prob, gt, "confusion");
    if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("threshold must lie in [0, 1]");
    ConfusionCounts c;
    auto p = pred_prob.data();
    auto g = gt.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool pos = static_cast<double>(p[i]) >= tau;
        const bool truth = g[i] >= 0.5f;
        if (pos && truth) ++c.tp;
        else if (pos) ++c.fp;
        else if (truth) ++c.fn;
        else ++c.tn;
    }
    return c;
}

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double tau) {
    require_labels(scores, labels);
    ConfusionCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pos = scores[i] >= tau;
        const bool truth = labels[i] == 1;
        if (pos && truth) ++c.tp;
        else if (pos) ++c.fp;
        else if (truth) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double precision(const ConfusionCounts& c) { return ratio_or(c.tp, c.tp + c.fp, 1.0); }
double recall(const ConfusionCounts& c) { return ratio_or(c.tp, c.tp + c.fn, 1.0); }

double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

SegmentationReport segmentation_report(const ConfusionCounts& c, double threshold) {
    const std::uint64_t n = c.total();
    if (n == 0) throw InvalidArgument("segmentation_report: no pixels evaluated");
    SegmentationReport r;
    r.threshold = threshold;
    r.counts = c;
    r.pixel_accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(n);

    r.blur.precision = ratio_or(c.tp, c.tp + c.fp, 1.0);
    r.blur.recall = ratio_or(c.tp, c.tp + c.fn, 1.0);
    r.blur.f1 = f1_score(r.blur.precision, r.blur.recall);
    r.blur.iou = ratio_or(c.tp, c.tp + c.fp + c.fn, 1.0);
    r.blur.present = c.tp + c.fp + c.fn > 0;

    r.sharp.precision = ratio_or(c.tn, c.tn + c.fn, 1.0);
    r.sharp.recall = ratio_or(c.tn, c.tn + c.fp, 1.0);
    r.sharp.f1 = f1_score(r.sharp.precision, r.sharp.recall);
    r.sharp.iou = ratio_or(c.tn, c.tn + c.fn + c.fp, 1.0);
    r.sharp.present = c.tn + c.fn + c.fp > 0;

    double iou_sum = 0.0;
    int present = 0;
    for (const ClassScores* cls : {&r.blur, &r.sharp}) {
        if (!cls->present) continue;
        iou_sum += cls->iou;
        ++present;
    }
    r.mean_iou = present > 0 ? iou_sum / present : 1.0;

    const double blur_freq = static_cast<double>(c.tp + c.fn) / static_cast<double>(n);
    const double sharp_freq = static_cast<double>(c.tn + c.fp) / static_cast<double>(n);
    r.weighted_iou = blur_freq * r.blur.iou + sharp_freq * r.sharp.iou;

    double acc_sum = 0.0;
    int gt_classes = 0;
    if (c.tp + c.fn > 0) {
        acc_sum += r.blur.recall;
        ++gt_classes;
    }
    if (c.tn + c.fp > 0) {
        acc_sum += r.sharp.recall;
        ++gt_classes;
    }
    r.mean_class_accuracy = gt_classes > 0 ? acc_sum / gt_classes : 1.0;
    return r;
}

Curve pr_curve(std::span<const GrayMask> pred_probs, std::span<const GrayMask> gts, std::span<const double> thresholds) {
    if (pred_probs.size() != gts.size()) throw DimensionError("pr_curve: prediction and ground-truth counts differ");
    if (thresholds.size() < 2) throw InvalidArgument("pr_curve: at least two thresholds are needed for an area");
    std::vector<double> taus(thresholds.begin(), thresholds.end());
    std::sort(taus.begin(), taus.end());
    Curve curve;
    for (double tau : taus) {
        ConfusionCounts pooled;
        for (std::size_t i = 0; i < pred_probs.size(); ++i) pooled += confusion(pred_probs[i], gts[i], tau);
        curve.points.push_back({tau, recall(pooled), precision(pooled)});
    }
    // Integrate from high to low threshold (recall non-decreasing), starting
    // at the (recall 0, precision 1) anchor.
    double prev_x = 0.0;
    double prev_y = 1.0;
    double area = 0.0;
    for (auto it = curve.points.rbegin(); it != curve.points.rend(); ++it) {
        area += (it->x - prev_x) * 0.5 * (it->y + prev_y);
        prev_x = it->x;
        prev_y = it->y;
    }
    curve.auc = std::clamp(area, 0.0, 1.0);
    return curve;
}

double image_score(const GrayMask& pred_prob, double tau_pix, Aggregation agg) {
    auto p = pred_prob.data();
    if (p.empty()) throw InvalidArgument("image_score: empty map");
    double acc = 0.0;
    for (float v : p) acc += agg == Aggregation::BlurredFraction ? (static_cast<double>(v) >= tau_pix ? 1.0 : 0.0) : v;
    return acc / static_cast<double>(p.size());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    require_labels(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    double n_pos = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == 1) {
            pos_rank_sum += rank[i];
            n_pos += 1.0;
        }
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) throw InvalidArgument("roc_auc: both classes must be present");
    const double u = pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    return u / (n_pos * n_neg);
}

std::vector<double> default_grid() {
    std::vector<double> g(101);
    for (int i = 0; i <= 100; ++i) g[static_cast<std::size_t>(i)] = i / 100.0;
    return g;
}

double grid_search(std::vector<double> grid, const std::function<double(double)>& objective) {
    if (grid.empty()) throw InvalidArgument("grid_search: empty grid");
    std::sort(grid.begin(), grid.end());
    double best_tau = grid.front();
    double best = objective(best_tau);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double v = objective(grid[i]);
        if (v > best) {
            best = v;
            best_tau = grid[i];
        }
    }
    return best_tau;
}

double grid_search_threshold(std::span<const GrayMask> pred_probs, std::span<const GrayMask> gts, Objective objective,
                             std::vector<double> grid) {
    if (pred_probs.size() != gts.size()) throw DimensionError("grid_search_threshold: count mismatch");
    return grid_search(std::move(grid), [&](double tau) {
        ConfusionCounts pooled;
        for (std::size_t i = 0; i < pred_probs.size(); ++i) pooled += confusion(pred_probs[i], gts[i], tau);
        return objective_value(pooled, objective);
    });
}

double grid_search_threshold(std::span<const double> scores, std::span<const int> labels, Objective objective,
                             std::vector<double> grid) {
    require_labels(scores, labels);
    return grid_search(std::move(grid),
                       [&](double tau) { return objective_value(confusion(scores, labels, tau), objective); });
}

ClassificationReport classification_report(std::span<const double> scores, std::span<const int> labels, double tau) {
    const ConfusionCounts c = confusion(scores, labels, tau);
    if (c.total() == 0) throw InvalidArgument("classification_report: no samples");
    ClassificationReport r;
    r.threshold = tau;
    r.counts = c;
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    r.precision = precision(c);
    r.recall = recall(c);
    r.specificity = ratio_or(c.tn, c.tn + c.fp, 1.0);
    r.f1 = f1_score(r.precision, r.recall);
    r.roc_defined = c.tp + c.fn > 0 && c.tn + c.fp > 0;
    if (r.roc_defined) r.roc_auc = roc_auc(scores, labels);
    r.sharp_accuracy = r.specificity;
    r.blur_accuracy = r.recall;
    return r;
}

}  // namespace blurforge::metrics
