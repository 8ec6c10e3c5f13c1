#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "blurforge/blur.hpp"
#include "blurforge/composite.hpp"

namespace blurforge::dataset {

namespace fs = std::filesystem;

enum class SamplingMode { MaskCentric, ImageCentric };
enum class CoverageMode { Sharp, Full, Partial };
enum class Split { Train, Val };

std::string_view to_string(SamplingMode m);
std::string_view to_string(CoverageMode m);
std::string_view to_string(Split s);

struct SourceEntry {
    std::string image_ref;               // as written in the config; also the source id
    fs::path image_path;                 // resolved for loading
    std::vector<std::string> mask_refs;  // one grayscale mask per instance
    std::vector<fs::path> mask_paths;
    Split split = Split::Train;
};

struct InstanceInfo {
    std::uint64_t area = 0;
    int min_x = 0, min_y = 0, max_x = -1, max_y = -1;  // inclusive bounding box

    bool empty() const { return area == 0; }
};

struct SourceInfo {
    int width = 0;
    int height = 0;
    std::vector<InstanceInfo> instances;  // parallel to SourceEntry::mask_paths
};

InstanceInfo measure_instance(const GrayMask& mask);
/// Loads every instance mask and checks it against the image dimensions.
SourceInfo inspect_source(const SourceEntry& source);

struct BuildConfig {
    std::vector<SourceEntry> sources;
    double val_fraction = 0.2;
    double mask_ratio = 0.5;
    std::array<double, 3> coverage_probs{0.25, 0.50, 0.25};  // sharp, full, partial
    int curriculum_stage = 3;
    int samples_per_source = 1;
    std::array<double, 2> strength_range{1.0, 12.0};
    std::array<double, 2> crop_scale_range{0.5, 1.0};
    std::array<double, 2> crop_aspect_range{0.75, 4.0 / 3.0};
    std::uint64_t global_seed = 0;
    double max_extent = kDefaultMaxExtent;
    int max_instances = 3;
    bool linearize_srgb = false;

    void validate() const;
};

/// Parses a JSON config document. Relative paths resolve against base_dir.
/// Unknown keys are rejected; syntax errors report line and column.
BuildConfig parse_config(const std::string& text, const fs::path& base_dir);
BuildConfig load_config(const fs::path& path);

struct CurriculumStage {
    int index = 1;
    std::vector<BlurType> allowed;
    bool mixed_mode_allowed = false;
};

CurriculumStage curriculum_stage(int index);

struct CropRect {
    int x = 0, y = 0, width = 0, height = 0;
    bool operator==(const CropRect&) const = default;
};

struct InstancePlan {
    std::size_t instance = 0;  // index into the source's mask list
    std::string mask_ref;
    CoverageMode coverage = CoverageMode::Sharp;
    BlurSpec spec;
    std::uint64_t region_seed = 0;
};

struct SampleOutputs {
    std::string image;  // paths relative to the output directory
    std::string mask;
    std::string intensity;
    std::uintmax_t image_bytes = 0;
    std::uintmax_t mask_bytes = 0;
    std::uintmax_t intensity_bytes = 0;
};

struct SampleRecord {
    std::string id;
    std::size_t index = 0;
    std::string source_id;
    SamplingMode mode = SamplingMode::ImageCentric;
    std::optional<CropRect> crop;
    std::vector<InstancePlan> instances;
    Split split = Split::Train;
    int stage = 3;
    std::uint64_t seed = 0;
    int width = 0;
    int height = 0;
    // Filled in by build_sample.
    std::optional<SampleOutputs> outputs;
    double blur_fraction = 0.0;
};

/// Seeded Fisher-Yates shuffle; the validation split receives
/// floor(n * val_fraction) sources.
std::pair<std::vector<SourceEntry>, std::vector<SourceEntry>> split_sources(std::vector<SourceEntry> sources,
                                                                             double val_fraction, std::uint64_t seed);

/// Blur parameters for one instance. Everything except the strength is
/// derived from `seed`; rotation and zoom are scaled by the instance radius
/// and the rolling shear by the image height so that peak motion stays near
/// `strength` pixels.
BlurSpec instance_blur_spec(BlurType type, double strength, std::uint64_t seed, double instance_radius, int height);

std::uint64_t sample_seed(std::uint64_t global_seed, std::string_view source_id, std::size_t index);

/// `index` is the per-source sample number; `global_index` names the record.
SampleRecord plan_sample(const SourceEntry& source, const SourceInfo& info, const BuildConfig& cfg, std::size_t index,
                         std::size_t global_index);

struct BuiltSample {
    SampleRecord record;
    CompositeOutput output;
};

/// Renders a planned record. When out_dir is non-empty the three PNGs are
/// written below it and the record's outputs are filled in.
BuiltSample build_sample(const SampleRecord& record, const SourceEntry& source, const BuildConfig& cfg,
                         const fs::path& out_dir);

struct ManifestSummary {
    std::size_t samples = 0;
    std::map<std::string, std::size_t> blur_types;      // non-sharp instances only
    std::map<std::string, std::size_t> coverage_modes;  // every instance
    std::map<std::string, std::size_t> sampling_modes;
    std::map<std::string, std::size_t> splits;

    bool operator==(const ManifestSummary&) const = default;
};

ManifestSummary summarize(const std::vector<SampleRecord>& records);

nlohmann::json to_json(const BlurSpec& spec);
BlurSpec blur_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SampleRecord& record);
nlohmann::json to_json(const ManifestSummary& summary);
ManifestSummary summary_from_json(const nlohmann::json& j);

struct BuildOptions {
    fs::path out_dir;
    int workers = 1;
    bool resume = false;
};

struct BuildReport {
    std::vector<SampleRecord> records;  // successful samples in index order
    std::vector<std::pair<std::string, std::string>> failures;  // (sample id, reason)
    ManifestSummary summary;
    fs::path manifest_path;
    std::size_t resumed = 0;
    std::vector<std::string> warnings;
};

BuildReport build_dataset(const BuildConfig& cfg, const BuildOptions& opts);

struct VerifyReport {
    std::size_t records = 0;
    std::vector<std::string> problems;
    bool ok() const { return problems.empty(); }
};

/// Checks that every referenced output exists with the recorded size,
/// decodes with the recorded dimensions and format, and that the footer
/// counts match a recount of the records.
VerifyReport verify_manifest(const fs::path& manifest_path);

/// Mean blurred-pixel fraction over training records; the default
/// p_target for the prevalence term.
double manifest_blur_prevalence(const fs::path& manifest_path);

}  // namespace blurforge::dataset
