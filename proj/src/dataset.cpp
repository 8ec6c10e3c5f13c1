#include "blurforge/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "blurforge/error.hpp"
#include "blurforge/png_io.hpp"
#include "blurforge/rng.hpp"

namespace blurforge::dataset {

using nlohmann::json;

std::string_view to_string(SamplingMode m) {
    return m == SamplingMode::MaskCentric ? "mask_centric" : "image_centric";
}

std::string_view to_string(CoverageMode m) {
    switch (m) {
        case CoverageMode::Sharp: return "sharp";
        case CoverageMode::Full: return "full";
        case CoverageMode::Partial: return "partial";
    }
    return "sharp";
}

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "val"; }

namespace {

SamplingMode parse_sampling_mode(const std::string& s) {
    if (s == "mask_centric") return SamplingMode::MaskCentric;
    if (s == "image_centric") return SamplingMode::ImageCentric;
    throw ConfigError("unknown sampling mode: " + s);
}

CoverageMode parse_coverage(const std::string& s) {
    if (s == "sharp") return CoverageMode::Sharp;
    if (s == "full") return CoverageMode::Full;
    if (s == "partial") return CoverageMode::Partial;
    throw ConfigError("unknown coverage mode: " + s);
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    throw ConfigError("unknown split: " + s);
}

}  // namespace

InstanceInfo measure_instance(const GrayMask& mask) {
    InstanceInfo info;
    info.min_x = mask.width();
    info.min_y = mask.height();
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y) < 0.5f) continue;
            ++info.area;
            info.min_x = std::min(info.min_x, x);
            info.min_y = std::min(info.min_y, y);
            info.max_x = std::max(info.max_x, x);
            info.max_y = std::max(info.max_y, y);
        }
    }
    if (info.area == 0) info = InstanceInfo{};
    return info;
}

SourceInfo inspect_source(const SourceEntry& source) {
    if (source.mask_paths.empty()) throw ConfigError("source has no instance masks: " + source.image_ref);
    const PngInfo img = read_png_info(source.image_path);
    SourceInfo info{img.width, img.height, {}};
    for (const auto& path : source.mask_paths) {
        const GrayMask m = read_mask(path);
        if (m.width() != img.width || m.height() != img.height) {
            throw DimensionError("mask " + path.string() + " does not match image " + source.image_ref);
        }
        info.instances.push_back(measure_instance(m));
    }
    return info;
}

// ---------------------------------------------------------------------------
// Config

void BuildConfig::validate() const {
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
    };
    prob(mask_ratio, "mask_ratio");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
    double total = 0.0;
    for (double p : coverage_probs) {
        prob(p, "coverage_probs entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("coverage_probs must sum to 1");
    if (curriculum_stage < 1 || curriculum_stage > 3) throw ConfigError("curriculum_stage must be 1, 2 or 3");
    if (samples_per_source < 1) throw ConfigError("samples_per_source must be >= 1");
    if (!(strength_range[0] >= 0.0 && strength_range[1] >= strength_range[0])) {
        throw ConfigError("strength_range must be non-negative and ordered");
    }
    if (!(crop_scale_range[0] > 0.0 && crop_scale_range[1] <= 1.0 && crop_scale_range[0] <= crop_scale_range[1])) {
        throw ConfigError("crop_scale_range must be an ordered range inside (0, 1]");
    }
    if (!(crop_aspect_range[0] > 0.0 && crop_aspect_range[0] <= crop_aspect_range[1])) {
        throw ConfigError("crop_aspect_range must be positive and ordered");
    }
    if (!(max_extent > 0.0)) throw ConfigError("max_extent must be positive");
    if (max_instances < 1) throw ConfigError("max_instances must be >= 1");
}

namespace {

template <std::size_t N>
std::array<double, N> read_array(const json& j, const char* key) {
    if (!j.is_array() || j.size() != N) {
        throw ConfigError(std::string(key) + " must be an array of " + std::to_string(N) + " numbers");
    }
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        if (!j[i].is_number()) throw ConfigError(std::string(key) + " must contain numbers");
        out[i] = j[i].get<double>();
    }
    return out;
}

double read_number(const json& j, const char* key) {
    if (!j.is_number()) throw ConfigError(std::string(key) + " must be a number");
    return j.get<double>();
}

int read_int(const json& j, const char* key) {
    if (!j.is_number_integer()) throw ConfigError(std::string(key) + " must be an integer");
    return j.get<int>();
}

fs::path resolve(const fs::path& base, const std::string& ref) {
    const fs::path p(ref);
    return p.is_absolute() || base.empty() ? p : base / p;
}

SourceEntry parse_source(const json& j, const fs::path& base) {
    if (!j.is_object()) throw ConfigError("each source must be an object");
    SourceEntry s;
    for (const auto& [key, value] : j.items()) {
        if (key == "image") {
            if (!value.is_string()) throw ConfigError("source image must be a string");
            s.image_ref = value.get<std::string>();
        } else if (key == "masks") {
            if (!value.is_array()) throw ConfigError("source masks must be an array of strings");
            for (const auto& m : value) {
                if (!m.is_string()) throw ConfigError("source masks must be an array of strings");
                s.mask_refs.push_back(m.get<std::string>());
            }
        } else {
            throw ConfigError("unknown source key: " + key);
        }
    }
    if (s.image_ref.empty()) throw ConfigError("source is missing 'image'");
    if (s.mask_refs.empty()) throw ConfigError("source " + s.image_ref + " needs at least one mask");
    s.image_path = resolve(base, s.image_ref);
    for (const auto& m : s.mask_refs) s.mask_paths.push_back(resolve(base, m));
    return s;
}

}  // namespace

BuildConfig parse_config(const std::string& text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON config: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");

    BuildConfig cfg;
    for (const auto& [key, value] : doc.items()) {
        if (key == "sources") {
            if (!value.is_array()) throw ConfigError("sources must be an array");
            for (const auto& s : value) cfg.sources.push_back(parse_source(s, base_dir));
        } else if (key == "val_fraction") {
            cfg.val_fraction = read_number(value, "val_fraction");
        } else if (key == "mask_ratio") {
            cfg.mask_ratio = read_number(value, "mask_ratio");
        } else if (key == "coverage_probs") {
            cfg.coverage_probs = read_array<3>(value, "coverage_probs");
        } else if (key == "curriculum_stage") {
            cfg.curriculum_stage = read_int(value, "curriculum_stage");
        } else if (key == "samples_per_source") {
            cfg.samples_per_source = read_int(value, "samples_per_source");
        } else if (key == "strength_range") {
            cfg.strength_range = read_array<2>(value, "strength_range");
        } else if (key == "crop_scale_range") {
            cfg.crop_scale_range = read_array<2>(value, "crop_scale_range");
        } else if (key == "crop_aspect_range") {
            cfg.crop_aspect_range = read_array<2>(value, "crop_aspect_range");
        } else if (key == "global_seed") {
            if (!value.is_number_unsigned()) throw ConfigError("global_seed must be a non-negative integer");
            cfg.global_seed = value.get<std::uint64_t>();
        } else if (key == "max_extent") {
            cfg.max_extent = read_number(value, "max_extent");
        } else if (key == "max_instances") {
            cfg.max_instances = read_int(value, "max_instances");
        } else if (key == "linearize_srgb") {
            if (!value.is_boolean()) throw ConfigError("linearize_srgb must be a boolean");
            cfg.linearize_srgb = value.get<bool>();
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }
    cfg.validate();
    return cfg;
}

BuildConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Planning

CurriculumStage curriculum_stage(int index) {
    switch (index) {
        case 1: return {1, {BlurType::Straight, BlurType::RandomWalk}, false};
        case 2:
            return {2,
                    {BlurType::Straight, BlurType::RandomWalk, BlurType::Curved, BlurType::Rolling,
                     BlurType::EdgeRing},
                    false};
        case 3: return {3, {kAllBlurTypes.begin(), kAllBlurTypes.end()}, true};
        default: throw InvalidArgument("curriculum stage must be 1, 2 or 3");
    }
}

std::pair<std::vector<SourceEntry>, std::vector<SourceEntry>> split_sources(std::vector<SourceEntry> sources,
                                                                             double val_fraction, std::uint64_t seed) {
    if (sources.empty()) throw InvalidArgument("split_sources: empty source list");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidArgument("val_fraction must lie in (0, 1)");
    CounterRng rng(hash_combine(seed, hash_string("split")));
    for (std::size_t i = sources.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
        std::swap(sources[i], sources[j]);
    }
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(sources.size()) * val_fraction));
    std::vector<SourceEntry> val(sources.begin(), sources.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<SourceEntry> train(sources.begin() + static_cast<std::ptrdiff_t>(n_val), sources.end());
    for (auto& s : val) s.split = Split::Val;
    for (auto& s : train) s.split = Split::Train;
    return {std::move(train), std::move(val)};
}

BlurSpec instance_blur_spec(BlurType type, double strength, std::uint64_t seed, double instance_radius, int height) {
    CounterRng rng(seed);
    BlurSpec spec;
    spec.blur_type = type;
    spec.strength = strength;
    spec.n_frames = default_frame_count(strength);
    spec.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    spec.seed = rng.next_u64();
    const double r = std::max(instance_radius, 1.0);
    const double sign_rot = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double sign_scale = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double sign_shear = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const auto extra_ring = static_cast<int>(rng.uniform_int(0, 2));
    const auto steps = static_cast<int>(rng.uniform_int(8, 32));
    switch (type) {
        case BlurType::ZoomRotation:
            // Split the motion budget between rotation and scaling so the
            // rim of the instance moves by roughly `strength` pixels.
            spec.max_rotation = sign_rot * std::min(0.35, 0.7 * strength / r);
            spec.max_scale = 1.0 + sign_scale * std::min(0.2, 0.3 * strength / r);
            break;
        case BlurType::RandomWalk: spec.walk_steps = steps; break;
        case BlurType::EdgeRing:
            spec.ring_width = std::max(2, static_cast<int>(std::ceil(strength / 2.0)) + 1) + extra_ring;
            break;
        case BlurType::Rolling: spec.shear_rate = sign_shear * strength / std::max(height, 1); break;
        case BlurType::Straight:
        case BlurType::Curved: break;
    }
    return spec;
}

std::uint64_t sample_seed(std::uint64_t global_seed, std::string_view source_id, std::size_t index) {
    return hash_combine(hash_combine(global_seed, hash_string(source_id)), index);
}

namespace {

CoverageMode draw_coverage(CounterRng& rng, const std::array<double, 3>& probs) {
    const double u = rng.uniform();
    if (u < probs[0]) return CoverageMode::Sharp;
    if (u < probs[0] + probs[1]) return CoverageMode::Full;
    return CoverageMode::Partial;
}

BlurType draw_type(CounterRng& rng, const CurriculumStage& stage) {
    const auto i = rng.uniform_int(0, static_cast<std::int64_t>(stage.allowed.size()) - 1);
    return stage.allowed[static_cast<std::size_t>(i)];
}

BlurSpec draw_spec(CounterRng rng, BlurType type, const BuildConfig& cfg, double instance_radius, int height) {
    const double strength = rng.uniform(cfg.strength_range[0], cfg.strength_range[1]);
    return instance_blur_spec(type, strength, rng.next_u64(), instance_radius, height);
}

CropRect plan_crop(CounterRng& rng, const BuildConfig& cfg, const SourceInfo& info, const InstanceInfo& inst) {
    const double scale = rng.uniform(cfg.crop_scale_range[0], cfg.crop_scale_range[1]);
    const double aspect = rng.uniform(cfg.crop_aspect_range[0], cfg.crop_aspect_range[1]);
    const double area = scale * info.width * info.height;
    const int bw = inst.max_x - inst.min_x + 1;
    const int bh = inst.max_y - inst.min_y + 1;
    const int cw = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), bw, info.width);
    const int ch = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), bh, info.height);
    const int x_lo = std::max(0, inst.max_x - cw + 1);
    const int x_hi = std::min(inst.min_x, info.width - cw);
    const int y_lo = std::max(0, inst.max_y - ch + 1);
    const int y_hi = std::min(inst.min_y, info.height - ch);
    CropRect crop;
    crop.width = cw;
    crop.height = ch;
    crop.x = static_cast<int>(rng.uniform_int(x_lo, x_hi));
    crop.y = static_cast<int>(rng.uniform_int(y_lo, y_hi));
    return crop;
}

}  // namespace

SampleRecord plan_sample(const SourceEntry& source, const SourceInfo& info, const BuildConfig& cfg, std::size_t index,
                         std::size_t global_index) {
    const CurriculumStage stage = curriculum_stage(cfg.curriculum_stage);
    if (info.instances.size() != source.mask_paths.size()) {
        throw InvalidArgument("source info does not match source " + source.image_ref);
    }

    SampleRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "sample_%06zu", global_index);
    rec.id = id;
    rec.index = global_index;
    rec.source_id = source.image_ref;
    rec.split = source.split;
    rec.stage = stage.index;
    rec.seed = sample_seed(cfg.global_seed, source.image_ref, index);

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < info.instances.size(); ++i) {
        if (!info.instances[i].empty()) candidates.push_back(i);
    }
    if (candidates.empty()) throw InvalidArgument("every instance mask is empty for " + source.image_ref);

    CounterRng rng(rec.seed);
    rec.mode = rng.bernoulli(cfg.mask_ratio) ? SamplingMode::MaskCentric : SamplingMode::ImageCentric;

    std::vector<std::size_t> chosen;
    if (rec.mode == SamplingMode::MaskCentric) {
        const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1));
        chosen.push_back(candidates[pick]);
        rec.crop = plan_crop(rng, cfg, info, info.instances[chosen[0]]);
        rec.width = rec.crop->width;
        rec.height = rec.crop->height;
    } else {
        const auto limit = std::min<std::size_t>(static_cast<std::size_t>(cfg.max_instances), candidates.size());
        const auto count = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(limit)));
        for (std::size_t i = 0; i < count; ++i) {
            const auto j = static_cast<std::size_t>(
                rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(candidates.size()) - 1));
            std::swap(candidates[i], candidates[j]);
            chosen.push_back(candidates[i]);
        }
        rec.width = info.width;
        rec.height = info.height;
    }

    std::stable_sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
        if (info.instances[a].area != info.instances[b].area) return info.instances[a].area > info.instances[b].area;
        return source.mask_refs[a] < source.mask_refs[b];
    });

    const BlurType shared_type = draw_type(rng, stage);
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        const std::size_t inst = chosen[k];
        CounterRng irng = rng.fork(inst);
        InstancePlan plan;
        plan.instance = inst;
        plan.mask_ref = source.mask_refs[inst];
        plan.coverage = draw_coverage(irng, cfg.coverage_probs);
        const BlurType type = stage.mixed_mode_allowed ? draw_type(irng, stage) : shared_type;
        const double radius = std::sqrt(static_cast<double>(info.instances[inst].area) / std::numbers::pi);
        plan.spec = draw_spec(irng.fork(1), type, cfg, radius, rec.height);
        plan.region_seed = irng.fork(2).next_u64();
        rec.instances.push_back(std::move(plan));
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::uintmax_t file_size_or_zero(const fs::path& p) {
    std::error_code ec;
    const auto n = fs::file_size(p, ec);
    return ec ? 0 : n;
}

SampleOutputs output_paths(const SampleRecord& rec) {
    const std::string dir(to_string(rec.split));
    SampleOutputs o;
    o.image = dir + "/" + rec.id + "_img.png";
    o.mask = dir + "/" + rec.id + "_mask.png";
    o.intensity = dir + "/" + rec.id + "_intensity.png";
    return o;
}

}  // namespace

BuiltSample build_sample(const SampleRecord& record, const SourceEntry& source, const BuildConfig& cfg,
                         const fs::path& out_dir) {
    const ColorOptions color{cfg.linearize_srgb};
    RgbImage image = read_rgb(source.image_path, color);
    if (record.crop) {
        const CropRect& c = *record.crop;
        image = crop(image, c.x, c.y, c.width, c.height);
    }
    if (image.width() != record.width || image.height() != record.height) {
        throw DimensionError(record.id + ": source dimensions differ from the planned record");
    }

    BuiltSample built;
    built.record = record;
    RgbImage current = image;
    GrayMask gt_mask(image.width(), image.height());
    GrayMask gt_intensity(image.width(), image.height());

    for (const InstancePlan& plan : record.instances) {
        if (plan.instance >= source.mask_paths.size()) throw InvalidArgument(record.id + ": instance index out of range");
        GrayMask mask = read_mask(source.mask_paths[plan.instance]);
        if (record.crop) {
            const CropRect& c = *record.crop;
            if (mask.width() < c.x + c.width || mask.height() < c.y + c.height) {
                throw DimensionError(record.id + ": mask smaller than crop");
            }
            mask = crop(mask, c.x, c.y, c.width, c.height);
        }
        require_same_size(mask, image, "instance mask");
        if (mask_sum(mask) == 0.0) throw InvalidArgument(record.id + ": instance mask empty after crop");

        const RgbaPremultiplied fg = premultiply(image, mask);
        CompositeOutput out;
        if (plan.coverage == CoverageMode::Sharp) {
            out.image = sharp_composite(current, fg);
        } else {
            const GrayMask region =
                plan.coverage == CoverageMode::Full ? mask : partial_region(mask, plan.region_seed);
            const BlurResult blur = apply_blur(fg, plan.spec);
            out = composite(current, fg, blur, region, plan.spec.strength, cfg.max_extent);
        }
        current = std::move(out.image);
        if (plan.coverage == CoverageMode::Sharp) continue;
        auto gm = gt_mask.data();
        auto gi = gt_intensity.data();
        auto om = out.gt_mask.data();
        auto oi = out.gt_intensity.data();
        for (std::size_t i = 0; i < gm.size(); ++i) {
            gm[i] = std::max(gm[i], om[i]);
            gi[i] = std::max(gi[i], oi[i]);
        }
    }

    built.record.blur_fraction = mask_sum(gt_mask) / static_cast<double>(gt_mask.data().size());
    if (!out_dir.empty()) {
        SampleOutputs o = output_paths(record);
        fs::create_directories(out_dir / to_string(record.split));
        write_rgb8(out_dir / o.image, current, color);
        write_gray8(out_dir / o.mask, gt_mask);
        write_gray16(out_dir / o.intensity, gt_intensity);
        o.image_bytes = file_size_or_zero(out_dir / o.image);
        o.mask_bytes = file_size_or_zero(out_dir / o.mask);
        o.intensity_bytes = file_size_or_zero(out_dir / o.intensity);
        built.record.outputs = o;
    }
    built.output = CompositeOutput{std::move(current), std::move(gt_mask), std::move(gt_intensity)};
    return built;
}

// ---------------------------------------------------------------------------
// Serialization

json to_json(const BlurSpec& spec) {
    json controls = json::array();
    for (const auto& c : spec.curve_controls) controls.push_back({c.along, c.across});
    return {{"type", std::string(to_string(spec.blur_type))},
            {"strength", spec.strength},
            {"n_frames", spec.n_frames},
            {"angle", spec.angle},
            {"curve_controls", controls},
            {"max_rotation", spec.max_rotation},
            {"max_scale", spec.max_scale},
            {"walk_steps", spec.walk_steps},
            {"ring_width", spec.ring_width},
            {"shear_rate", spec.shear_rate},
            {"seed", spec.seed}};
}

BlurSpec blur_spec_from_json(const json& j) {
    BlurSpec spec;
    const auto type = parse_blur_type(j.at("type").get<std::string>());
    if (!type) throw ConfigError("unknown blur type: " + j.at("type").get<std::string>());
    spec.blur_type = *type;
    spec.strength = j.at("strength").get<double>();
    spec.n_frames = j.at("n_frames").get<int>();
    spec.angle = j.at("angle").get<double>();
    for (const auto& c : j.at("curve_controls")) spec.curve_controls.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    spec.max_rotation = j.at("max_rotation").get<double>();
    spec.max_scale = j.at("max_scale").get<double>();
    spec.walk_steps = j.at("walk_steps").get<int>();
    spec.ring_width = j.at("ring_width").get<int>();
    spec.shear_rate = j.at("shear_rate").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

json to_json(const SampleRecord& r) {
    json instances = json::array();
    for (const auto& p : r.instances) {
        instances.push_back({{"instance", p.instance},
                             {"mask", p.mask_ref},
                             {"coverage", std::string(to_string(p.coverage))},
                             {"region_seed", p.region_seed},
                             {"blur_spec", to_json(p.spec)}});
    }
    json j = {{"id", r.id},
              {"index", r.index},
              {"source_image", r.source_id},
              {"mode", std::string(to_string(r.mode))},
              {"instances", instances},
              {"split", std::string(to_string(r.split))},
              {"stage", r.stage},
              {"seed", r.seed},
              {"width", r.width},
              {"height", r.height},
              {"blur_fraction", r.blur_fraction}};
    j["crop"] = r.crop ? json{{"x", r.crop->x}, {"y", r.crop->y}, {"width", r.crop->width}, {"height", r.crop->height}}
                       : json(nullptr);
    if (r.outputs) {
        j["outputs"] = {{"image", r.outputs->image},
                        {"mask", r.outputs->mask},
                        {"intensity", r.outputs->intensity},
                        {"image_bytes", r.outputs->image_bytes},
                        {"mask_bytes", r.outputs->mask_bytes},
                        {"intensity_bytes", r.outputs->intensity_bytes}};
    }
    return j;
}

ManifestSummary summarize(const std::vector<SampleRecord>& records) {
    ManifestSummary s;
    for (const auto& r : records) {
        ++s.samples;
        ++s.sampling_modes[std::string(to_string(r.mode))];
        ++s.splits[std::string(to_string(r.split))];
        for (const auto& p : r.instances) {
            ++s.coverage_modes[std::string(to_string(p.coverage))];
            if (p.coverage != CoverageMode::Sharp) ++s.blur_types[std::string(to_string(p.spec.blur_type))];
        }
    }
    return s;
}

json to_json(const ManifestSummary& s) {
    return {{"summary",
             {{"samples", s.samples},
              {"blur_types", s.blur_types},
              {"coverage_modes", s.coverage_modes},
              {"sampling_modes", s.sampling_modes},
              {"splits", s.splits}}}};
}

ManifestSummary summary_from_json(const json& j) {
    const json& s = j.at("summary");
    ManifestSummary out;
    out.samples = s.at("samples").get<std::size_t>();
    out.blur_types = s.at("blur_types").get<std::map<std::string, std::size_t>>();
    out.coverage_modes = s.at("coverage_modes").get<std::map<std::string, std::size_t>>();
    out.sampling_modes = s.at("sampling_modes").get<std::map<std::string, std::size_t>>();
    out.splits = s.at("splits").get<std::map<std::string, std::size_t>>();
    return out;
}

namespace {

SampleRecord record_from_json(const json& j) {
    SampleRecord r;
    r.id = j.at("id").get<std::string>();
    r.index = j.at("index").get<std::size_t>();
    r.source_id = j.at("source_image").get<std::string>();
    r.mode = parse_sampling_mode(j.at("mode").get<std::string>());
    r.split = parse_split(j.at("split").get<std::string>());
    r.stage = j.at("stage").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    r.blur_fraction = j.at("blur_fraction").get<double>();
    if (!j.at("crop").is_null()) {
        const json& c = j.at("crop");
        r.crop = CropRect{c.at("x").get<int>(), c.at("y").get<int>(), c.at("width").get<int>(), c.at("height").get<int>()};
    }
    for (const auto& p : j.at("instances")) {
        InstancePlan plan;
        plan.instance = p.at("instance").get<std::size_t>();
        plan.mask_ref = p.at("mask").get<std::string>();
        plan.coverage = parse_coverage(p.at("coverage").get<std::string>());
        plan.region_seed = p.at("region_seed").get<std::uint64_t>();
        plan.spec = blur_spec_from_json(p.at("blur_spec"));
        r.instances.push_back(std::move(plan));
    }
    if (j.contains("outputs")) {
        const json& o = j.at("outputs");
        r.outputs = SampleOutputs{o.at("image").get<std::string>(),
                                  o.at("mask").get<std::string>(),
                                  o.at("intensity").get<std::string>(),
                                  o.at("image_bytes").get<std::uintmax_t>(),
                                  o.at("mask_bytes").get<std::uintmax_t>(),
                                  o.at("intensity_bytes").get<std::uintmax_t>()};
    }
    return r;
}

// The part of a record fixed by planning; used to decide whether a previous
// build of the same id can be reused.
json plan_json(const SampleRecord& r) {
    json j = to_json(r);
    j.erase("outputs");
    j.erase("blur_fraction");
    return j;
}

struct ManifestContents {
    std::vector<json> records;
    std::optional<json> footer;
};

ManifestContents read_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest " + path.string());
    ManifestContents out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("summary")) {
            out.footer = std::move(j);
        } else {
            out.records.push_back(std::move(j));
        }
    }
    return out;
}

bool outputs_intact(const fs::path& out_dir, const SampleOutputs& o) {
    return file_size_or_zero(out_dir / o.image) == o.image_bytes && o.image_bytes > 0 &&
           file_size_or_zero(out_dir / o.mask) == o.mask_bytes && o.mask_bytes > 0 &&
           file_size_or_zero(out_dir / o.intensity) == o.intensity_bytes && o.intensity_bytes > 0;
}

void write_manifest(const fs::path& path, const std::vector<SampleRecord>& records, const ManifestSummary& summary) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write manifest " + tmp.string());
        for (const auto& r : records) out << to_json(r).dump() << '\n';
        if (!records.empty()) out << to_json(summary).dump() << '\n';
        if (!out) throw IoError("failed writing manifest " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace

BuildReport build_dataset(const BuildConfig& cfg, const BuildOptions& opts) {
    cfg.validate();
    if (opts.workers < 1) throw InvalidArgument("worker count must be >= 1");
    BuildReport report;
    fs::create_directories(opts.out_dir);
    report.manifest_path = opts.out_dir / "manifest.jsonl";

    if (cfg.sources.empty()) {
        report.warnings.push_back("no sources configured; wrote an empty manifest");
        write_manifest(report.manifest_path, {}, report.summary);
        return report;
    }

    // Split membership is assigned by the seeded shuffle; records keep the
    // configured source order.
    std::vector<SourceEntry> sources = cfg.sources;
    {
        auto [train, val] = split_sources(sources, cfg.val_fraction, cfg.global_seed);
        std::set<std::string> val_ids;
        for (const auto& s : val) val_ids.insert(s.image_ref);
        for (auto& s : sources) s.split = val_ids.count(s.image_ref) ? Split::Val : Split::Train;
    }

    struct Job {
        std::size_t source = 0;
        std::optional<SampleRecord> plan;
        std::string id;
        std::string error;
    };
    std::vector<Job> jobs;
    std::size_t global = 0;
    for (std::size_t si = 0; si < sources.size(); ++si) {
        const SourceInfo info = inspect_source(sources[si]);
        for (int k = 0; k < cfg.samples_per_source; ++k, ++global) {
            Job job;
            job.source = si;
            char id[32];
            std::snprintf(id, sizeof id, "sample_%06zu", global);
            job.id = id;
            try {
                job.plan = plan_sample(sources[si], info, cfg, static_cast<std::size_t>(k), global);
            } catch (const Error& e) {
                job.error = e.what();
            }
            jobs.push_back(std::move(job));
        }
    }

    std::map<std::string, SampleRecord> previous;
    if (opts.resume && fs::exists(report.manifest_path)) {
        for (const json& j : read_manifest(report.manifest_path).records) {
            SampleRecord r = record_from_json(j);
            previous.emplace(r.id, std::move(r));
        }
    }

    std::vector<std::optional<SampleRecord>> results(jobs.size());
    std::vector<std::string> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> resumed{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            if (!job.plan) {
                errors[i] = job.error;
                continue;
            }
            if (auto it = previous.find(job.id); it != previous.end() && it->second.outputs &&
                                                 plan_json(it->second) == plan_json(*job.plan) &&
                                                 outputs_intact(opts.out_dir, *it->second.outputs)) {
                results[i] = it->second;
                ++resumed;
                continue;
            }
            try {
                results[i] = build_sample(*job.plan, sources[job.source], cfg, opts.out_dir).record;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(opts.workers), jobs.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
        worker();
    }

    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (results[i]) {
            report.records.push_back(std::move(*results[i]));
        } else {
            report.failures.emplace_back(jobs[i].id, errors[i]);
        }
    }
    report.resumed = resumed.load();
    report.summary = summarize(report.records);
    write_manifest(report.manifest_path, report.records, report.summary);
    return report;
}

VerifyReport verify_manifest(const fs::path& manifest_path) {
    VerifyReport report;
    const ManifestContents contents = read_manifest(manifest_path);
    const fs::path root = manifest_path.parent_path();
    std::vector<SampleRecord> records;
    std::set<std::string> ids;
    std::size_t last_index = 0;
    for (const json& j : contents.records) {
        SampleRecord r;
        try {
            r = record_from_json(j);
        } catch (const std::exception& e) {
            report.problems.push_back(std::string("malformed record: ") + e.what());
            continue;
        }
        ++report.records;
        if (!ids.insert(r.id).second) report.problems.push_back(r.id + ": duplicate id");
        if (!records.empty() && r.index <= last_index) report.problems.push_back(r.id + ": records out of index order");
        last_index = r.index;
        if (r.mode == SamplingMode::MaskCentric && r.instances.size() != 1) {
            report.problems.push_back(r.id + ": mask-centric record must carry exactly one instance");
        }
        if (!r.outputs) {
            report.problems.push_back(r.id + ": no outputs recorded");
            records.push_back(std::move(r));
            continue;
        }
        struct Expect {
            const std::string& rel;
            std::uintmax_t bytes;
            int channels;
            int depth;
        };
        const Expect expects[] = {{r.outputs->image, r.outputs->image_bytes, 3, 8},
                                  {r.outputs->mask, r.outputs->mask_bytes, 1, 8},
                                  {r.outputs->intensity, r.outputs->intensity_bytes, 1, 16}};
        for (const Expect& e : expects) {
            const fs::path p = root / e.rel;
            if (!fs::exists(p)) {
                report.problems.push_back(r.id + ": missing " + e.rel);
                continue;
            }
            if (file_size_or_zero(p) != e.bytes) report.problems.push_back(r.id + ": size mismatch for " + e.rel);
            try {
                const PngInfo info = read_png_info(p);
                if (info.width != r.width || info.height != r.height) {
                    report.problems.push_back(r.id + ": dimension mismatch for " + e.rel);
                }
                if (info.channels != e.channels || info.bit_depth != e.depth) {
                    report.problems.push_back(r.id + ": unexpected pixel format for " + e.rel);
                }
            } catch (const Error& err) {
                report.problems.push_back(r.id + ": " + err.what());
            }
        }
        records.push_back(std::move(r));
    }
    if (records.empty() && !contents.footer) return report;
    if (!contents.footer) {
        report.problems.push_back("manifest has no summary footer");
    } else {
        try {
            if (!(summary_from_json(*contents.footer) == summarize(records))) {
                report.problems.push_back("summary footer does not match the records");
            }
        } catch (const std::exception& e) {
            report.problems.push_back(std::string("malformed summary footer: ") + e.what());
        }
    }
    return report;
}

double manifest_blur_prevalence(const fs::path& manifest_path) {
    const ManifestContents contents = read_manifest(manifest_path);
    double sum = 0.0;
    std::size_t n = 0;
    for (const json& j : contents.records) {
        if (j.at("split").get<std::string>() != "train") continue;
        sum += j.at("blur_fraction").get<double>();
        ++n;
    }
    if (n == 0) throw InvalidArgument("manifest has no training records");
    return sum / static_cast<double>(n);
}

}  // namespace blurforge::dataset
