#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace blurforge::loss {

/// Dense row-major map of doubles (logits, probabilities, targets).
class DenseMap {
public:
    DenseMap() = default;
    DenseMap(int height, int width, double fill = 0.0);
    DenseMap(int height, int width, std::vector<double> values);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return values_.size(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool same_shape(const DenseMap& o) const { return height_ == o.height_ && width_ == o.width_; }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

inline constexpr double kProbClip = 1e-7;

struct LossWeights {
    double lambda_seg = 1.0;
    double lambda_reg = 1.0;
    double lambda_prev = 0.1;
    double lambda_aux = 0.4;
    double alpha = 0.7;  // Tversky false-negative penalty
    double beta = 0.3;   // Tversky false-positive penalty
    double gamma = 4.0 / 3.0;
    double delta = 0.1;  // Huber transition
    double epsilon = 1e-6;
    double p_target = 0.5;
    // Sub-weights inside the segmentation term.
    double bce_weight = 1.0;
    double dice_weight = 1.0;
    double focal_tversky_weight = 1.0;

    void validate() const;
};

struct LossInputs {
    DenseMap mask_prob;  // sigmoid(mask_logits)
    DenseMap y_mask;
    DenseMap reg_map;
    DenseMap y_reg;
    std::vector<DenseMap> aux_probs;  // deep-supervision predictions, coarser or equal scale
};

struct LossBreakdown {
    double total = 0.0;
    double seg = 0.0;
    double bce = 0.0;
    double dice = 0.0;
    double focal_tversky = 0.0;
    double reg = 0.0;
    double prev = 0.0;
    double aux = 0.0;
};

struct ValueAndGrad {
    double value = 0.0;
    DenseMap grad;
};

double sigmoid(double logit);

double bce_loss(const DenseMap& pred_prob, const DenseMap& target);
double dice_loss(const DenseMap& pred_prob, const DenseMap& target, double eps);
double tversky_index(const DenseMap& pred_prob, const DenseMap& target, double alpha, double beta, double eps);
double focal_tversky_loss(const DenseMap& pred_prob, const DenseMap& target, double alpha, double beta, double gamma,
                          double eps);
/// Empty mask returns 0.
double masked_huber_loss(const DenseMap& reg_map, const DenseMap& y_reg, const DenseMap& y_mask, double delta);
double huber(double residual, double delta);
double prevalence_loss(const DenseMap& pred_prob, double p_target);

/// Area-average downsampling by integer factors, re-binarized at 0.5.
DenseMap downsample_target(const DenseMap& target, int height, int width);
double aux_loss(const std::vector<DenseMap>& aux_probs, const DenseMap& target, double eps);

LossBreakdown total_loss(const LossInputs& inputs, const LossWeights& weights);

// Analytic gradients with respect to the probability map (or reg_map for Huber).
ValueAndGrad bce_loss_grad(const DenseMap& pred_prob, const DenseMap& target);
ValueAndGrad dice_loss_grad(const DenseMap& pred_prob, const DenseMap& target, double eps);
ValueAndGrad focal_tversky_loss_grad(const DenseMap& pred_prob, const DenseMap& target, double alpha, double beta,
                                     double gamma, double eps);
ValueAndGrad masked_huber_loss_grad(const DenseMap& reg_map, const DenseMap& y_reg, const DenseMap& y_mask,
                                    double delta);
ValueAndGrad prevalence_loss_grad(const DenseMap& pred_prob, double p_target);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

using ScalarFn = std::function<double(const DenseMap&)>;
using GradFn = std::function<DenseMap(const DenseMap&)>;
using SkipFn = std::function<bool(std::size_t)>;

/// Central differences with step h on every element, compared against the
/// analytic gradient; relative error uses max(|analytic|, |numeric|, 1e-6)
/// as denominator. Elements for which `skip` returns true are not checked.
GradCheckResult grad_check(const ScalarFn& loss_fn, const GradFn& grad_fn, const DenseMap& at, double h,
                           const SkipFn& skip = {});

struct LossCheckEntry {
    std::string name;
    double value = 0.0;
    double expected = 0.0;
    double error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string kind;  // "gradient" or "value"
};

struct LossCheckOptions {
    std::uint64_t seed = 7;
    int size = 8;
    double h = 1e-4;
    double grad_tolerance = 1e-3;
    double value_tolerance = 1e-6;
    int repeats = 5;
    // Test hook: name of a loss whose analytic gradient gets perturbed.
    std::string inject_fault;
};

/// Gradient checks for BCE, Dice, Focal Tversky, masked Huber and
/// prevalence plus the closed-form value checks.
std::vector<LossCheckEntry> run_loss_checks(const LossCheckOptions& opts);

/// Writes `count` random fixtures (float32 tensors + JSON header with the
/// reference loss breakdown) for cross-implementation checks.
void export_loss_fixtures(const std::filesystem::path& dir, int count, std::uint64_t seed, const LossWeights& weights);

}  // namespace blurforge::loss
