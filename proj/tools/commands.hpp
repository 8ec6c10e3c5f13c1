#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace blurforge::cli {

// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,
    kConfigError = 2,
    kIoError = 3,
    kPartialFailure = 4,
};

enum class LogLevel { Quiet, Error, Warn, Info, Debug };

/// Reads BLURFORGE_LOG (quiet, error, warn, info, debug); defaults to info.
LogLevel log_level_from_env();

struct GenerateArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int workers = 1;
    bool resume = false;
};

struct PreviewArgs {
    std::string image;
    std::string mask;
    std::string blur_type = "straight";
    double strength = 8.0;
    std::uint64_t seed = 0;
    std::string coverage = "full";
    std::string out;
    bool linearize_srgb = false;
};

struct EvaluateArgs {
    std::string pred_dir;
    std::string gt_dir;
    std::string task = "seg";
    std::optional<double> threshold;
    bool grid = false;
    std::string aggregation = "fraction";
    std::string report;
};

struct LossCheckArgs {
    std::string report;
    std::string inject_fault;
    std::string export_dir;
    int count = 20;
    std::uint64_t seed = 7;
    std::string manifest;
};

struct VerifyArgs {
    std::string manifest;
    std::string report;
};

int cmd_generate(const GenerateArgs& args);
int cmd_preview(const PreviewArgs& args);
int cmd_evaluate(const EvaluateArgs& args);
int cmd_losscheck(const LossCheckArgs& args);
int cmd_manifest_verify(const VerifyArgs& args);

}  // namespace blurforge::cli
