#include "blurforge/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "blurforge/error.hpp"
#include "blurforge/rng.hpp"

namespace blurforge::loss {

namespace {

void require_shape(const DenseMap& a, const DenseMap& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch (" + std::to_string(a.height()) + "x" +
                             std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                             std::to_string(b.width()) + ")");
    }
    if (a.size() == 0) throw DimensionError(std::string(op) + ": empty map");
}

double clip_prob(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }

struct TverskySums {
    double tp = 0.0;
    double fn = 0.0;
    double fp = 0.0;
};

TverskySums tversky_sums(const DenseMap& p, const DenseMap& y) {
    TverskySums s;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s.tp += p[i] * y[i];
        s.fn += (1.0 - p[i]) * y[i];
        s.fp += p[i] * (1.0 - y[i]);
    }
    return s;
}

DenseMap random_map(CounterRng& rng, int h, int w, double lo, double hi) {
    DenseMap m(h, w);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(lo, hi);
    return m;
}

DenseMap random_binary(CounterRng& rng, int h, int w, double p_one) {
    DenseMap m(h, w);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.bernoulli(p_one) ? 1.0 : 0.0;
    return m;
}

}  // namespace

DenseMap::DenseMap(int height, int width, double fill) : height_(height), width_(width) {
    if (height < 1 || width < 1) throw InvalidArgument("DenseMap dimensions must be positive");
    values_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
}

DenseMap::DenseMap(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
    if (height < 1 || width < 1) throw InvalidArgument("DenseMap dimensions must be positive");
    if (values_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
        throw DimensionError("DenseMap value count does not match shape");
    }
}

void LossWeights::validate() const {
    for (double v : {lambda_seg, lambda_reg, lambda_prev, lambda_aux, alpha, beta, bce_weight, dice_weight,
                     focal_tversky_weight}) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("loss weights must be finite and non-negative");
    }
    if (!(gamma >= 1.0)) throw InvalidArgument("gamma must be >= 1");
    if (!(delta > 0.0)) throw InvalidArgument("delta must be > 0");
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
    if (!(p_target >= 0.0 && p_target <= 1.0)) throw InvalidArgument("p_target must lie in [0, 1]");
}

double sigmoid(double logit) {
    if (logit >= 0.0) return 1.0 / (1.0 + std::exp(-logit));
    const double e = std::exp(logit);
    return e / (1.0 + e);
}

double bce_loss(const DenseMap& pred_prob, const DenseMap& target) { return bce_loss_grad(pred_prob, target).value; }

ValueAndGrad bce_loss_grad(const DenseMap& pred_prob, const DenseMap& target) {
    require_shape(pred_prob, target, "bce_loss");
    const double n = static_cast<double>(pred_prob.size());
    ValueAndGrad out{0.0, DenseMap(pred_prob.height(), pred_prob.width())};
    double sum = 0.0;
    for (std::size_t i = 0; i < pred_prob.size(); ++i) {
        const double p = clip_prob(pred_prob[i]);
        const double y = target[i];
        sum += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        const bool clipped = pred_prob[i] < kProbClip || pred_prob[i] > 1.0 - kProbClip;
        out.grad[i] = clipped ? 0.0 : (-y / p + (1.0 - y) / (1.0 - p)) / n;
    }
    out.value = -sum / n;
    return out;
}

double dice_loss(const DenseMap& pred_prob, const DenseMap& target, double eps) {
    return dice_loss_grad(pred_prob, target, eps).value;
}

ValueAndGrad dice_loss_grad(const DenseMap& pred_prob, const DenseMap& target, double eps) {
    require_shape(pred_prob, target, "dice_loss");
    if (!(eps >= 0.0)) throw InvalidArgument("dice epsilon must be >= 0");
    double inter = 0.0, sp = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < pred_prob.size(); ++i) {
        inter += pred_prob[i] * target[i];
        sp += pred_prob[i];
        sy += target[i];
    }
    ValueAndGrad out{0.0, DenseMap(pred_prob.height(), pred_prob.width())};
    const double num = 2.0 * inter + eps;
    const double den = sp + sy + eps;
    if (den == 0.0) return out;  // both maps empty with eps = 0: perfect agreement
    out.value = 1.0 - num / den;
    for (std::size_t i = 0; i < pred_prob.size(); ++i) {
        out.grad[i] = -(2.0 * target[i] * den - num) / (den * den);
    }
    return out;
}

double tversky_index(const DenseMap& pred_prob, const DenseMap& target, double alpha, double beta, double eps) {
    require_shape(pred_prob, target, "tversky_index");
    const TverskySums s = tversky_sums(pred_prob, target);
    const double den = s.tp + alpha * s.fn + beta * s.fp + eps;
    if (den == 0.0) return 1.0;
    return (s.tp + eps) / den;
}

double focal_tversky_loss(const DenseMap& pred_prob, const DenseMap& target, double alpha, double beta, double gamma,
                          double eps) {
    return std::pow(1.0 - tversky_index(pred_prob, target, alpha, beta, eps), gamma);
}

ValueAndGrad focal_tversky_loss_grad(const DenseMap& pred_prob, const DenseMap& target, double alpha, double beta,
                                     double gamma, double eps) {
    require_shape(pred_prob, target, "focal_tversky_loss");
    const TverskySums s = tversky_sums(pred_prob, target);
    const double num = s.tp + eps;
    const double den = s.tp + alpha * s.fn + beta * s.fp + eps;
    ValueAndGrad out{0.0, DenseMap(pred_prob.height(), pred_prob.width())};
    if (den == 0.0) return out;
    const double ti = num / den;
    const double gap = 1.0 - ti;
    out.value = std::pow(gap, gamma);
    const double outer = gap > 0.0 ? -gamma * std::pow(gap, gamma - 1.0) : (gamma == 1.0 ? -1.0 : 0.0);
    for (std::size_t i = 0; i < pred_prob.size(); ++i) {
        const double y = target[i];
        const double d_num = y;
        const double d_den = y - alpha * y + beta * (1.0 - y);
        const double d_ti = (d_num * den - num * d_den) / (den * den);
        out.grad[i] = outer * d_ti;
    }
    return out;
}

double huber(double residual, double delta) {
    const double a = std::abs(residual);
    return a <= delta ? 0.5 * residual * residual : delta * (a - 0.5 * delta);
}

double masked_huber_loss(const DenseMap& reg_map, const DenseMap& y_reg, const DenseMap& y_mask, double delta) {
    return masked_huber_loss_grad(reg_map, y_reg, y_mask, delta).value;
}

ValueAndGrad masked_huber_loss_grad(const DenseMap& reg_map, const DenseMap& y_reg, const DenseMap& y_mask,
                                    double delta) {
    require_shape(reg_map, y_reg, "masked_huber_loss");
    require_shape(reg_map, y_mask, "masked_huber_loss");
    if (!(delta > 0.0)) throw InvalidArgument("huber delta must be > 0");
    ValueAndGrad out{0.0, DenseMap(reg_map.height(), reg_map.width())};
    std::size_t count = 0;
    for (std::size_t i = 0; i < reg_map.size(); ++i) {
        if (y_mask[i] > 0.0) ++count;
    }
    if (count == 0) return out;
    const double inv = 1.0 / static_cast<double>(count);
    double sum = 0.0;
    for (std::size_t i = 0; i < reg_map.size(); ++i) {
        if (!(y_mask[i] > 0.0)) continue;
        const double r = reg_map[i] - y_reg[i];
        sum += huber(r, delta);
        out.grad[i] = (std::abs(r) <= delta ? r : std::copysign(delta, r)) * inv;
    }
    out.value = sum * inv;
    return out;
}

double prevalence_loss(const DenseMap& pred_prob, double p_target) {
    return prevalence_loss_grad(pred_prob, p_target).value;
}

ValueAndGrad prevalence_loss_grad(const DenseMap& pred_prob, double p_target) {
    if (pred_prob.size() == 0) throw DimensionError("prevalence_loss: empty map");
    const double n = static_cast<double>(pred_prob.size());
    double mean = 0.0;
    for (double v : pred_prob.values()) mean += v;
    mean /= n;
    const double diff = mean - p_target;
    return {diff * diff, DenseMap(pred_prob.height(), pred_prob.width(), 2.0 * diff / n)};
}

DenseMap downsample_target(const DenseMap& target, int height, int width) {
    if (height < 1 || width < 1 || target.height() % height != 0 || target.width() % width != 0) {
        throw DimensionError("downsample_target: target " + std::to_string(target.height()) + "x" +
                             std::to_string(target.width()) + " is not an integer multiple of " +
                             std::to_string(height) + "x" + std::to_string(width));
    }
    const int fy = target.height() / height;
    const int fx = target.width() / width;
    DenseMap out(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int dy = 0; dy < fy; ++dy) {
                for (int dx = 0; dx < fx; ++dx) acc += target.at(y * fy + dy, x * fx + dx);
            }
            out.at(y, x) = acc / (fx * fy) >= 0.5 ? 1.0 : 0.0;
        }
    }
    return out;
}

double aux_loss(const std::vector<DenseMap>& aux_probs, const DenseMap& target, double eps) {
    if (aux_probs.empty()) throw InvalidArgument("aux_loss: at least one auxiliary scale is required");
    double sum = 0.0;
    for (const DenseMap& pred : aux_probs) {
        const DenseMap t = downsample_target(target, pred.height(), pred.width());
        sum += bce_loss(pred, t) + dice_loss(pred, t, eps);
    }
    return sum / static_cast<double>(aux_probs.size());
}

LossBreakdown total_loss(const LossInputs& in, const LossWeights& w) {
    w.validate();
    LossBreakdown b;
    b.bce = bce_loss(in.mask_prob, in.y_mask);
    b.dice = dice_loss(in.mask_prob, in.y_mask, w.epsilon);
    b.focal_tversky = focal_tversky_loss(in.mask_prob, in.y_mask, w.alpha, w.beta, w.gamma, w.epsilon);
    b.seg = w.bce_weight * b.bce + w.dice_weight * b.dice + w.focal_tversky_weight * b.focal_tversky;
    b.reg = masked_huber_loss(in.reg_map, in.y_reg, in.y_mask, w.delta);
    b.prev = prevalence_loss(in.mask_prob, w.p_target);
    b.aux = in.aux_probs.empty() ? 0.0 : aux_loss(in.aux_probs, in.y_mask, w.epsilon);
    b.total = w.lambda_seg * b.seg + w.lambda_reg * b.reg + w.lambda_prev * b.prev + w.lambda_aux * b.aux;
    return b;
}

GradCheckResult grad_check(const ScalarFn& loss_fn, const GradFn& grad_fn, const DenseMap& at, double h,
                           const SkipFn& skip) {
    if (!(h > 0.0)) throw InvalidArgument("grad_check: step must be positive");
    const DenseMap analytic = grad_fn(at);
    if (!analytic.same_shape(at)) throw DimensionError("grad_check: gradient shape mismatch");
    GradCheckResult res;
    DenseMap probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        if (skip && skip(i)) {
            ++res.skipped;
            continue;
        }
        probe[i] = at[i] + h;
        const double up = loss_fn(probe);
        probe[i] = at[i] - h;
        const double down = loss_fn(probe);
        probe[i] = at[i];
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
        const double err = std::abs(analytic[i] - numeric) / denom;
        if (err > res.max_rel_error) {
            res.max_rel_error = err;
            res.worst_index = i;
        }
        ++res.checked;
    }
    return res;
}

std::vector<LossCheckEntry> run_loss_checks(const LossCheckOptions& opts) {
    const LossWeights w;
    std::vector<LossCheckEntry> out;
    auto faulty = [&](const char* name, DenseMap g) {
        if (opts.inject_fault == name) {
            for (double& v : g.values()) v *= 1.01;
        }
        return g;
    };

    double bce_err = 0.0, dice_err = 0.0, ft_err = 0.0, huber_err = 0.0, prev_err = 0.0;
    for (int rep = 0; rep < opts.repeats; ++rep) {
        CounterRng rng(hash_combine(opts.seed, static_cast<std::uint64_t>(rep)));
        const int n = opts.size;
        const DenseMap pred = random_map(rng, n, n, 0.05, 0.95);
        const DenseMap target = random_binary(rng, n, n, 0.4);
        const DenseMap reg = random_map(rng, n, n, 0.0, 1.0);
        const DenseMap y_reg = random_map(rng, n, n, 0.0, 1.0);
        const double p_target = rng.uniform(0.1, 0.9);

        bce_err = std::max(bce_err, grad_check([&](const DenseMap& p) { return bce_loss(p, target); },
                                                   [&](const DenseMap& p) { return faulty("bce", bce_loss_grad(p, target).grad); },
                                                   pred, opts.h)
                                            .max_rel_error);
        dice_err = std::max(
            dice_err, grad_check([&](const DenseMap& p) { return dice_loss(p, target, w.epsilon); },
                                   [&](const DenseMap& p) { return faulty("dice", dice_loss_grad(p, target, w.epsilon).grad); },
                                   pred, opts.h)
                            .max_rel_error);
        ft_err = std::max(
            ft_err,
            grad_check([&](const DenseMap& p) { return focal_tversky_loss(p, target, w.alpha, w.beta, w.gamma, w.epsilon); },
                       [&](const DenseMap& p) {
                           return faulty("focal_tversky",
                                         focal_tversky_loss_grad(p, target, w.alpha, w.beta, w.gamma, w.epsilon).grad);
                       },
                       pred, opts.h)
                .max_rel_error);
        // Residuals within 2h of the Huber kink are non-differentiable for
        // the stencil and are skipped.
        huber_err = std::max(
            huber_err,
            grad_check([&](const DenseMap& r) { return masked_huber_loss(r, y_reg, target, w.delta); },
                       [&](const DenseMap& r) { return faulty("huber", masked_huber_loss_grad(r, y_reg, target, w.delta).grad); },
                       reg, opts.h,
                       [&](std::size_t i) { return std::abs(std::abs(reg[i] - y_reg[i]) - w.delta) <= 2.0 * opts.h; })
                .max_rel_error);
        prev_err = std::max(
            prev_err, grad_check([&](const DenseMap& p) { return prevalence_loss(p, p_target); },
                                   [&](const DenseMap& p) { return faulty("prevalence", prevalence_loss_grad(p, p_target).grad); },
                                   pred, opts.h)
                            .max_rel_error);
    }
    auto grad_entry = [&](const char* name, double err) {
        out.push_back({std::string("grad_") + name, err, 0.0, err, opts.grad_tolerance, err < opts.grad_tolerance, "gradient"});
    };
    grad_entry("bce", bce_err);
    grad_entry("dice", dice_err);
    grad_entry("focal_tversky", ft_err);
    grad_entry("huber", huber_err);
    grad_entry("prevalence", prev_err);

    auto value_entry = [&](const char* name, double value, double expected) {
        const double err = std::abs(value - expected);
        out.push_back({name, value, expected, err, opts.value_tolerance, err <= opts.value_tolerance, "value"});
    };
    const DenseMap half(2, 2, 0.5);
    const DenseMap bin(2, 2, std::vector<double>{1, 0, 1, 0});
    value_entry("bce_half", bce_loss(half, bin), std::log(2.0));
    value_entry("bce_single", bce_loss(DenseMap(1, 1, 0.8), DenseMap(1, 1, 1.0)), -std::log(0.8));
    const DenseMap y1100(1, 4, std::vector<double>{1, 1, 0, 0});
    value_entry("dice_third", dice_loss(DenseMap(1, 4, std::vector<double>{1, 0, 0, 0}), y1100, 0.0), 1.0 / 3.0);
    value_entry("tversky_half", tversky_index(DenseMap(1, 4, std::vector<double>{1, 0, 1, 0}), y1100, 0.7, 0.3, 0.0), 0.5);
    value_entry("focal_tversky_quarter",
                focal_tversky_loss(DenseMap(1, 4, std::vector<double>{1, 0, 1, 0}), y1100, 0.5, 0.5, 2.0, 0.0), 0.25);
    const double d = w.delta;
    value_entry("huber_quadratic", masked_huber_loss(DenseMap(1, 1, d / 2), DenseMap(1, 1, 0.0), DenseMap(1, 1, 1.0), d),
                d * d / 8.0);
    value_entry("huber_linear", masked_huber_loss(DenseMap(1, 1, 2 * d), DenseMap(1, 1, 0.0), DenseMap(1, 1, 1.0), d),
                1.5 * d * d);
    value_entry("prevalence", prevalence_loss(DenseMap(4, 4, 1.0), 0.3), 0.49);
    return out;
}

void export_loss_fixtures(const std::filesystem::path& dir, int count, std::uint64_t seed, const LossWeights& weights) {
    weights.validate();
    if (count < 0) throw InvalidArgument("fixture count must be >= 0");
    std::filesystem::create_directories(dir);
    constexpr int kSize = 16;
    for (int k = 0; k < count; ++k) {
        CounterRng rng(hash_combine(seed, 0xF1C5ULL + static_cast<std::uint64_t>(k)));
        // Values are rounded through float32 before the reference is
        // evaluated so a reader of the float32 payload sees identical inputs.
        auto as_f32 = [](DenseMap m) {
            for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
            return m;
        };
        LossInputs in;
        in.mask_prob = random_map(rng, kSize, kSize, -4.0, 4.0);
        for (double& v : in.mask_prob.values()) v = sigmoid(v);
        in.mask_prob = as_f32(in.mask_prob);
        in.y_mask = random_binary(rng, kSize, kSize, 0.35);
        in.reg_map = as_f32(random_map(rng, kSize, kSize, 0.0, 1.0));
        in.y_reg = random_map(rng, kSize, kSize, 0.0, 1.0);
        for (std::size_t i = 0; i < in.y_reg.size(); ++i) in.y_reg[i] *= in.y_mask[i];
        in.y_reg = as_f32(in.y_reg);
        for (int scale : {kSize / 2, kSize / 4}) {
            DenseMap aux = random_map(rng, scale, scale, 0.02, 0.98);
            in.aux_probs.push_back(as_f32(aux));
        }
        const LossBreakdown ref = total_loss(in, weights);

        nlohmann::json header;
        nlohmann::json tensors = nlohmann::json::array();
        std::vector<float> payload;
        auto add = [&](const std::string& name, const DenseMap& m) {
            tensors.push_back({{"name", name},
                               {"dtype", "float32"},
                               {"shape", {m.height(), m.width()}},
                               {"offset", payload.size() * sizeof(float)}});
            for (double v : m.values()) payload.push_back(static_cast<float>(v));
        };
        add("mask_prob", in.mask_prob);
        add("y_mask", in.y_mask);
        add("reg_map", in.reg_map);
        add("y_reg", in.y_reg);
        for (std::size_t a = 0; a < in.aux_probs.size(); ++a) add("aux_prob_" + std::to_string(a), in.aux_probs[a]);

        char stem[32];
        std::snprintf(stem, sizeof stem, "fixture_%03d", k);
        header["tensors"] = tensors;
        header["byte_order"] = "little";
        header["data_file"] = std::string(stem) + ".bin";
        header["weights"] = {{"lambda_seg", weights.lambda_seg},   {"lambda_reg", weights.lambda_reg},
                             {"lambda_prev", weights.lambda_prev}, {"lambda_aux", weights.lambda_aux},
                             {"alpha", weights.alpha},             {"beta", weights.beta},
                             {"gamma", weights.gamma},             {"delta", weights.delta},
                             {"epsilon", weights.epsilon},         {"p_target", weights.p_target},
                             {"bce_weight", weights.bce_weight},   {"dice_weight", weights.dice_weight},
                             {"focal_tversky_weight", weights.focal_tversky_weight}};
        header["expected"] = {{"total", ref.total}, {"seg", ref.seg},   {"bce", ref.bce}, {"dice", ref.dice},
                              {"focal_tversky", ref.focal_tversky},     {"reg", ref.reg}, {"prev", ref.prev},
                              {"aux", ref.aux}};

        std::ofstream bin(dir / (std::string(stem) + ".bin"), std::ios::binary);
        for (float f : payload) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            const unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                            static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
            bin.write(reinterpret_cast<const char*>(bytes), 4);
        }
        std::ofstream js(dir / (std::string(stem) + ".json"));
        js << header.dump(2) << '\n';
        if (!bin || !js) throw IoError("failed writing fixture " + std::string(stem));
    }
}

}  // namespace blurforge::loss
