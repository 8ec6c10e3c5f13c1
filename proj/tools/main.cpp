#include <CLI11.hpp>

#include "commands.hpp"

using namespace blurforge::cli;

int main(int argc, char** argv) {
    CLI::App app{"blurforge: motion-blur dataset synthesis, loss reference checks and evaluation"};
    app.require_subcommand(1);
    app.footer(
        "Exit codes: 0 success, 1 check failed, 2 configuration error, 3 I/O error, 4 some samples failed.\n"
        "BLURFORGE_LOG=quiet|error|warn|info|debug sets verbosity.");

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Build a dataset from a JSON config");
    generate->add_option("-c,--config", gen.config, "Build config (JSON)")->required();
    generate->add_option("-o,--out", gen.out, "Output directory")->required();
    std::uint64_t seed_override = 0;
    auto* seed_opt = generate->add_option("--seed", seed_override, "Override global_seed");
    generate->add_option("-j,--workers", gen.workers, "Worker threads")->check(CLI::PositiveNumber);
    generate->add_flag("--resume", gen.resume, "Reuse samples whose outputs already exist with recorded sizes");

    PreviewArgs prev;
    auto* preview = app.add_subcommand("preview", "Blur one instance and write a composite plus GT panel");
    preview->add_option("--image", prev.image, "Source image")->required();
    preview->add_option("--mask", prev.mask, "Instance mask")->required();
    preview->add_option("--blur-type", prev.blur_type,
                        "straight|curved|zoom_rotation|random_walk|edge_ring|rolling");
    preview->add_option("--strength", prev.strength, "Blur strength in pixels");
    preview->add_option("--seed", prev.seed, "Seed for the blur parameters");
    preview->add_option("--coverage", prev.coverage, "full|partial");
    preview->add_option("-o,--out", prev.out, "Output directory")->required();
    preview->add_flag("--linearize-srgb", prev.linearize_srgb, "Decode sRGB to linear before blurring");

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score prediction maps against ground-truth masks");
    evaluate->add_option("--pred-dir", ev.pred_dir, "Directory of probability PNGs")->required();
    evaluate->add_option("--gt-dir", ev.gt_dir, "Directory of ground-truth mask PNGs")->required();
    evaluate->add_option("--task", ev.task, "seg|cls");
    double threshold = 0.5;
    auto* threshold_opt = evaluate->add_option("--threshold", threshold, "Decision threshold");
    evaluate->add_flag("--grid", ev.grid, "Pick the threshold by grid search");
    evaluate->add_option("--aggregation", ev.aggregation, "Image score for cls: fraction|mean");
    evaluate->add_option("--report", ev.report, "Write the JSON report here");

    LossCheckArgs lc;
    auto* losscheck = app.add_subcommand("losscheck", "Verify loss gradients and reference values");
    losscheck->add_option("--report", lc.report, "Write the JSON report here");
    losscheck->add_option("--inject-fault", lc.inject_fault, "Perturb one analytic gradient (testing hook)");
    losscheck->add_option("--export-fixtures", lc.export_dir, "Write float32 loss fixtures to this directory");
    losscheck->add_option("--count", lc.count, "Number of fixtures");
    losscheck->add_option("--seed", lc.seed, "Fixture seed");
    losscheck->add_option("--manifest", lc.manifest, "Take p_target from this manifest's training records");

    VerifyArgs vf;
    auto* verify = app.add_subcommand("manifest-verify", "Check a manifest against the files it references");
    verify->add_option("manifest", vf.manifest, "manifest.jsonl")->required();
    verify->add_option("--report", vf.report, "Write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (*generate) {
        if (*seed_opt) gen.seed = seed_override;
        return cmd_generate(gen);
    }
    if (*preview) return cmd_preview(prev);
    if (*evaluate) {
        if (*threshold_opt) ev.threshold = threshold;
        return cmd_evaluate(ev);
    }
    if (*losscheck) return cmd_losscheck(lc);
    return cmd_manifest_verify(vf);
}
