#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "blurforge/error.hpp"
#include "blurforge/loss.hpp"
#include "blurforge/rng.hpp"
#include "support.hpp"

using namespace blurforge;
using namespace blurforge::loss;

namespace {

DenseMap row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return DenseMap(1, n, std::move(v));
}

DenseMap random_probs(CounterRng& rng, int h, int w, double lo = 0.02, double hi = 0.98) {
    DenseMap m(h, w);
    for (double& v : m.values()) v = rng.uniform(lo, hi);
    return m;
}

DenseMap random_target(CounterRng& rng, int h, int w, double p = 0.4) {
    DenseMap m(h, w);
    for (double& v : m.values()) v = rng.bernoulli(p) ? 1.0 : 0.0;
    return m;
}

// Second implementation path: straight loops over std::vector, written
// without any helper from the library.
struct Oracle {
    static double bce(const std::vector<double>& p, const std::vector<double>& y) {
        double s = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double q = std::min(std::max(p[i], 1e-7), 1 - 1e-7);
            s -= y[i] * std::log(q) + (1 - y[i]) * std::log(1 - q);
        }
        return s / static_cast<double>(p.size());
    }
    static double dice(const std::vector<double>& p, const std::vector<double>& y, double eps) {
        double py = 0, sp = 0, sy = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            py += p[i] * y[i];
            sp += p[i];
            sy += y[i];
        }
        return 1 - (2 * py + eps) / (sp + sy + eps);
    }
    static double ti(const std::vector<double>& p, const std::vector<double>& y, double a, double b, double eps) {
        double tp = 0, fn = 0, fp = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            tp += p[i] * y[i];
            fn += (1 - p[i]) * y[i];
            fp += p[i] * (1 - y[i]);
        }
        return (tp + eps) / (tp + a * fn + b * fp + eps);
    }
    static double huber_masked(const std::vector<double>& r, const std::vector<double>& t,
                               const std::vector<double>& m, double d) {
        double s = 0;
        int n = 0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (m[i] <= 0) continue;
            const double e = std::abs(r[i] - t[i]);
            s += e <= d ? 0.5 * e * e : d * (e - 0.5 * d);
            ++n;
        }
        return n ? s / n : 0.0;
    }
    static std::vector<double> pool(const DenseMap& t, int h, int w) {
        std::vector<double> out;
        const int fy = t.height() / h, fx = t.width() / w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int on = 0;
                for (int v = 0; v < fy; ++v)
                    for (int u = 0; u < fx; ++u) on += t.at(y * fy + v, x * fx + u) > 0.5;
                out.push_back(2 * on >= fx * fy ? 1.0 : 0.0);
            }
        return out;
    }
};

float read_f32_le(const std::string& bytes, std::size_t offset) {
    const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
                               static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("binary cross-entropy") {
    CHECK(bce_loss(row({1, 0, 1, 0}), row({1, 0, 1, 0})) <= 1e-6);
    const DenseMap target(3, 3, std::vector<double>{1, 0, 1, 0, 0, 1, 1, 1, 0});
    CHECK(std::abs(bce_loss(DenseMap(3, 3, 0.5), target) - std::log(2.0)) < 1e-12);
    CHECK(std::abs(bce_loss(row({0.8}), row({1})) - 0.223144) < 1e-6);
    CHECK(bce_loss(row({0.8}), row({1})) == doctest::Approx(-std::log(0.8)).epsilon(1e-12));
    // Clipping keeps the loss finite at hard mistakes.
    CHECK(bce_loss(row({0.0}), row({1})) == doctest::Approx(-std::log(1e-7)));
    CHECK_THROWS_AS(bce_loss(row({0.5, 0.5}), row({1})), DimensionError);
}

TEST_CASE("dice loss") {
    CHECK(dice_loss(row({1, 0, 1, 0}), row({1, 0, 1, 0}), 1e-6) <= 1e-6);
    CHECK(dice_loss(row({0, 1, 0, 1}), row({1, 0, 1, 0}), 1e-9) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(dice_loss(row({1, 0, 0, 0}), row({1, 1, 0, 0}), 0.0) - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("tversky index and focal tversky") {
    CHECK(tversky_index(row({1, 0, 1}), row({1, 0, 1}), 0.7, 0.3, 1e-6) == doctest::Approx(1.0));
    CHECK(std::abs(tversky_index(row({1, 0, 1, 0}), row({1, 1, 0, 0}), 0.7, 0.3, 0.0) - 0.5) < 1e-12);
    CHECK(focal_tversky_loss(row({1, 0, 1}), row({1, 0, 1}), 0.7, 0.3, 4.0 / 3.0, 1e-6) <= 1e-6);
    CHECK(std::abs(focal_tversky_loss(row({1, 0, 1, 0}), row({1, 1, 0, 0}), 0.7, 0.3, 2.0, 0.0) - 0.25) < 1e-12);
    CounterRng rng(3);
    for (int k = 0; k < 20; ++k) {
        const DenseMap p = random_probs(rng, 5, 7);
        const DenseMap y = random_target(rng, 5, 7);
        CHECK(focal_tversky_loss(p, y, 0.7, 0.3, 1.0, 1e-6) ==
              doctest::Approx(1.0 - tversky_index(p, y, 0.7, 0.3, 1e-6)).epsilon(1e-12));
    }
}

TEST_CASE("tversky at alpha = beta = 0.5 equals the dice coefficient") {
    CounterRng rng(17);
    for (int k = 0; k < 100; ++k) {
        const DenseMap p = random_probs(rng, 8, 8, 0.0, 1.0);
        const DenseMap y = random_target(rng, 8, 8, rng.uniform(0.05, 0.95));
        REQUIRE(std::abs(tversky_index(p, y, 0.5, 0.5, 0.0) - (1.0 - dice_loss(p, y, 0.0))) <= 1e-9);
        // With smoothing the two differ by eps (S - 2 tp) / ((S + eps)(S + 2 eps)), S = sum p + sum y.
        const double eps = 1e-3;
        double tp = 0, sum = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            tp += p[i] * y[i];
            sum += p[i] + y[i];
        }
        const double gap = eps * (sum - 2 * tp) / ((sum + eps) * (sum + 2 * eps));
        REQUIRE(tversky_index(p, y, 0.5, 0.5, eps) - (1.0 - dice_loss(p, y, eps)) == doctest::Approx(gap).epsilon(1e-6));
    }
}

TEST_CASE("perfect predictions stay within the smoothing bound") {
    CounterRng rng(21);
    for (int k = 0; k < 30; ++k) {
        const DenseMap y = random_target(rng, 6, 6, 0.3);
        const double eps = 1e-3;
        const double sy = std::accumulate(y.values().begin(), y.values().end(), 0.0);
        const double bound = 2 * eps / (sy + eps);
        CHECK(dice_loss(y, y, eps) <= bound + 1e-15);
        CHECK(focal_tversky_loss(y, y, 0.7, 0.3, 4.0 / 3.0, eps) <= bound + 1e-15);
    }
}

TEST_CASE("masked huber") {
    const double d = 0.1;
    CHECK(masked_huber_loss(row({0.3, 0.9}), row({0.3, 0.1}), row({1, 0}), d) == 0.0);
    CHECK(std::abs(masked_huber_loss(row({0.05}), row({0.0}), row({1}), d) - d * d / 8) < 1e-12);
    CHECK(std::abs(masked_huber_loss(row({0.2}), row({0.0}), row({1}), d) - 1.5 * d * d) < 1e-12);
    CHECK(masked_huber_loss(row({0.7, 0.1}), row({0.0, 0.5}), row({0, 0}), d) == 0.0);
    CHECK(huber(d, d) == doctest::Approx(0.5 * d * d));
    CHECK_THROWS_AS(masked_huber_loss(row({0.2}), row({0.0}), row({1}), 0.0), InvalidArgument);
    CHECK_THROWS_AS(masked_huber_loss(row({0.2, 0.1}), row({0.0, 0.1}), row({1}), d), DimensionError);
}

TEST_CASE("prevalence") {
    CHECK(prevalence_loss(row({0.2, 0.4}), 0.3) == doctest::Approx(0.0));
    CHECK(std::abs(prevalence_loss(DenseMap(4, 4, 1.0), 0.3) - 0.49) < 1e-12);
    CHECK(prevalence_loss(DenseMap(4, 4, 0.0), 0.0) == 0.0);
}

TEST_CASE("target downsampling and auxiliary supervision") {
    DenseMap t(4, 4);
    t.at(0, 0) = t.at(0, 1) = 1;             // 2/4 -> on (ties round up)
    t.at(2, 2) = 1;                          // 1/4 -> off
    t.at(0, 2) = t.at(1, 2) = t.at(1, 3) = 1;  // 3/4 -> on
    const DenseMap d = downsample_target(t, 2, 2);
    CHECK(d.values() == std::vector<double>{1, 1, 0, 0});
    CHECK_THROWS_AS(downsample_target(t, 3, 3), DimensionError);

    CHECK(aux_loss({t}, t, 1e-6) <= 2e-6);
    CounterRng rng(8);
    const DenseMap y = random_target(rng, 8, 8);
    const DenseMap p = random_probs(rng, 8, 8);
    CHECK(aux_loss({p}, y, 1e-6) == doctest::Approx(bce_loss(p, y) + dice_loss(p, y, 1e-6)).epsilon(1e-12));
    const DenseMap p4 = random_probs(rng, 4, 4);
    const DenseMap p2 = random_probs(rng, 2, 2);
    double expect = 0;
    for (const DenseMap* m : {&p4, &p2}) {
        const auto pooled = Oracle::pool(y, m->height(), m->width());
        expect += Oracle::bce(m->values(), pooled) + Oracle::dice(m->values(), pooled, 1e-6);
    }
    CHECK(aux_loss({p4, p2}, y, 1e-6) == doctest::Approx(expect / 2).epsilon(1e-12));
    CHECK_THROWS_AS(aux_loss({}, y, 1e-6), InvalidArgument);
}

TEST_CASE("losses are non-negative and permutation invariant") {
    CounterRng rng(44);
    for (int k = 0; k < 25; ++k) {
        const DenseMap p = random_probs(rng, 4, 6, 0.0, 1.0);
        const DenseMap y = random_target(rng, 4, 6);
        const DenseMap r = random_probs(rng, 4, 6, 0.0, 1.0);
        const DenseMap t = random_probs(rng, 4, 6, 0.0, 1.0);
        std::vector<std::size_t> perm(p.size());
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = perm.size() - 1; i > 0; --i)
            std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
        auto permute = [&](const DenseMap& m) {
            DenseMap out(m.height(), m.width());
            for (std::size_t i = 0; i < perm.size(); ++i) out[i] = m[perm[i]];
            return out;
        };
        const double vals[] = {bce_loss(p, y), dice_loss(p, y, 1e-6), focal_tversky_loss(p, y, 0.7, 0.3, 1.5, 1e-6),
                               masked_huber_loss(r, t, y, 0.1), prevalence_loss(p, 0.2)};
        const double permuted[] = {bce_loss(permute(p), permute(y)), dice_loss(permute(p), permute(y), 1e-6),
                                   focal_tversky_loss(permute(p), permute(y), 0.7, 0.3, 1.5, 1e-6),
                                   masked_huber_loss(permute(r), permute(t), permute(y), 0.1),
                                   prevalence_loss(permute(p), 0.2)};
        for (int i = 0; i < 5; ++i) {
            CHECK(vals[i] >= 0.0);
            CHECK(permuted[i] == doctest::Approx(vals[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("total loss") {
    CounterRng rng(99);
    LossInputs in;
    in.mask_prob = random_probs(rng, 8, 8);
    in.y_mask = random_target(rng, 8, 8);
    in.reg_map = random_probs(rng, 8, 8, 0.0, 1.0);
    in.y_reg = random_probs(rng, 8, 8, 0.0, 1.0);
    in.aux_probs = {random_probs(rng, 4, 4), random_probs(rng, 2, 2)};

    SUBCASE("zero weights give zero") {
        LossWeights w;
        w.lambda_seg = w.lambda_reg = w.lambda_prev = w.lambda_aux = 0;
        CHECK(total_loss(in, w).total == 0.0);
        w.lambda_seg = 1;
        const LossBreakdown b = total_loss(in, w);
        CHECK(b.total == b.seg);
    }
    SUBCASE("matches an independent recomputation") {
        for (int k = 0; k < 10; ++k) {
            LossWeights w;
            w.lambda_seg = rng.uniform(0, 2);
            w.lambda_reg = rng.uniform(0, 2);
            w.lambda_prev = rng.uniform(0, 2);
            w.lambda_aux = rng.uniform(0, 2);
            w.gamma = rng.uniform(1, 3);
            w.p_target = rng.uniform();
            const LossBreakdown b = total_loss(in, w);
            const auto& p = in.mask_prob.values();
            const auto& y = in.y_mask.values();
            const double seg = Oracle::bce(p, y) + Oracle::dice(p, y, w.epsilon) +
                               std::pow(1 - Oracle::ti(p, y, w.alpha, w.beta, w.epsilon), w.gamma);
            const double reg = Oracle::huber_masked(in.reg_map.values(), in.y_reg.values(), y, w.delta);
            const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
            const double prev = (mean - w.p_target) * (mean - w.p_target);
            double aux = 0;
            for (const DenseMap& a : in.aux_probs) {
                const auto pooled = Oracle::pool(in.y_mask, a.height(), a.width());
                aux += Oracle::bce(a.values(), pooled) + Oracle::dice(a.values(), pooled, w.epsilon);
            }
            aux /= 2;
            CHECK(b.seg == doctest::Approx(seg).epsilon(1e-12));
            CHECK(b.reg == doctest::Approx(reg).epsilon(1e-12));
            CHECK(b.prev == doctest::Approx(prev).epsilon(1e-12));
            CHECK(b.aux == doctest::Approx(aux).epsilon(1e-12));
            CHECK(std::abs(b.total - (w.lambda_seg * b.seg + w.lambda_reg * b.reg + w.lambda_prev * b.prev +
                                      w.lambda_aux * b.aux)) <= 1e-9);
            CHECK(std::abs(b.seg - (b.bce + b.dice + b.focal_tversky)) <= 1e-12);
        }
    }
    SUBCASE("invalid weights are rejected") {
        LossWeights w;
        w.gamma = 0.5;
        CHECK_THROWS_AS(total_loss(in, w), InvalidArgument);
        w = LossWeights{};
        w.lambda_aux = -1;
        CHECK_THROWS_AS(total_loss(in, w), InvalidArgument);
    }
}

TEST_CASE("analytic gradients agree with central differences") {
    CounterRng rng(5);
    const double h = 1e-4;
    for (int rep = 0; rep < 5; ++rep) {
        const DenseMap p = random_probs(rng, 8, 8, 0.05, 0.95);
        const DenseMap y = random_target(rng, 8, 8);
        const DenseMap t = random_probs(rng, 8, 8, 0.0, 1.0);
        auto check = [&](const ScalarFn& f, const GradFn& g, const DenseMap& at, const SkipFn& skip = {}) {
            const GradCheckResult r = grad_check(f, g, at, h, skip);
            CHECK(r.max_rel_error < 1e-3);
            CHECK(r.checked + r.skipped == at.size());
        };
        check([&](const DenseMap& m) { return bce_loss(m, y); }, [&](const DenseMap& m) { return bce_loss_grad(m, y).grad; }, p);
        check([&](const DenseMap& m) { return dice_loss(m, y, 1e-6); },
              [&](const DenseMap& m) { return dice_loss_grad(m, y, 1e-6).grad; }, p);
        check([&](const DenseMap& m) { return focal_tversky_loss(m, y, 0.7, 0.3, 4.0 / 3.0, 1e-6); },
              [&](const DenseMap& m) { return focal_tversky_loss_grad(m, y, 0.7, 0.3, 4.0 / 3.0, 1e-6).grad; }, p);
        check([&](const DenseMap& m) { return prevalence_loss(m, 0.3); },
              [&](const DenseMap& m) { return prevalence_loss_grad(m, 0.3).grad; }, p);
        const DenseMap r = random_probs(rng, 8, 8, 0.0, 1.0);
        check([&](const DenseMap& m) { return masked_huber_loss(m, t, y, 0.1); },
              [&](const DenseMap& m) { return masked_huber_loss_grad(m, t, y, 0.1).grad; }, r,
              [&](std::size_t i) { return std::abs(std::abs(r[i] - t[i]) - 0.1) < 2 * h; });
    }
    // BCE at a flat 0.5 grid.
    const DenseMap half(8, 8, 0.5);
    const DenseMap y = random_target(rng, 8, 8);
    const GradCheckResult r = grad_check([&](const DenseMap& m) { return bce_loss(m, y); },
                                         [&](const DenseMap& m) { return bce_loss_grad(m, y).grad; }, half, h);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("grad_check flags a wrong gradient") {
    const DenseMap p(4, 4, 0.3);
    const GradCheckResult r = grad_check([](const DenseMap& m) { return prevalence_loss(m, 0.1); },
                                         [](const DenseMap& m) {
                                             DenseMap g = prevalence_loss_grad(m, 0.1).grad;
                                             g[5] *= 1.5;
                                             return g;
                                         },
                                         p, 1e-4);
    CHECK(r.max_rel_error > 0.1);
    CHECK(r.worst_index == 5);
}

TEST_CASE("built-in loss checks") {
    LossCheckOptions opts;
    const auto clean = run_loss_checks(opts);
    REQUIRE_FALSE(clean.empty());
    for (const auto& e : clean) {
        CAPTURE(e.name);
        CHECK(e.passed);
    }
    for (const std::string fault : {"bce", "dice", "focal_tversky", "huber", "prevalence"}) {
        opts.inject_fault = fault;
        const auto broken = run_loss_checks(opts);
        CAPTURE(fault);
        CHECK(std::any_of(broken.begin(), broken.end(), [](const LossCheckEntry& e) { return !e.passed; }));
    }
}

TEST_CASE("exported fixtures reproduce the reference breakdown") {
    support::TempDir dir("fixtures");
    LossWeights w;
    w.p_target = 0.27;
    export_loss_fixtures(dir.path(), 3, 11, w);
    for (int k = 0; k < 3; ++k) {
        const std::string stem = "fixture_00" + std::to_string(k);
        const auto header = nlohmann::json::parse(support::read_file(dir / (stem + ".json")));
        const std::string bin = support::read_file(dir / header.at("data_file").get<std::string>());
        CHECK(header.at("byte_order") == "little");
        LossInputs in;
        std::size_t expected_bytes = 0;
        for (const auto& t : header.at("tensors")) {
            CHECK(t.at("dtype") == "float32");
            const int hh = t.at("shape")[0], ww = t.at("shape")[1];
            const std::size_t off = t.at("offset");
            DenseMap m(hh, ww);
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = read_f32_le(bin, off + 4 * i);
            expected_bytes += 4 * m.size();
            const std::string name = t.at("name");
            if (name == "mask_prob") in.mask_prob = m;
            else if (name == "y_mask") in.y_mask = m;
            else if (name == "reg_map") in.reg_map = m;
            else if (name == "y_reg") in.y_reg = m;
            else in.aux_probs.push_back(m);
        }
        CHECK(bin.size() == expected_bytes);
        CHECK(header.at("weights").at("p_target") == 0.27);
        const LossBreakdown b = total_loss(in, w);
        CHECK(b.total == doctest::Approx(header.at("expected").at("total").get<double>()).epsilon(1e-12));
        CHECK(b.aux == doctest::Approx(header.at("expected").at("aux").get<double>()).epsilon(1e-12));
    }
}

}  // TEST_SUITE
