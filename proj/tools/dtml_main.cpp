// dtml command-line driver: generate | train | eval | ablate | convert.
// Exit codes: 0 success, 2 invalid config, 3 runtime failure.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "dtml/cli.hpp"
#include "dtml/errors.hpp"
#include "dtml/kernels.hpp"

int main(int argc, char** argv) {
    CLI::App app{"dual-task mutual learning for semi-supervised volumetric segmentation"};
    app.require_subcommand(1);

    std::string config_path;
    dtml::cli::CliOverrides ov;
    std::uint64_t seed = 0;
    std::string out, variant;
    double k = 0.0, threshold = 0.0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "override master_seed");
        sub->add_option("--out", out, "override out_dir");
    };

    CLI::App* gen = app.add_subcommand("generate", "write a synthetic dataset and manifest");
    add_common(gen);
    CLI::App* train = app.add_subcommand("train", "train on a dataset manifest");
    add_common(train);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test partition");
    add_common(eval);
    eval->add_option("--threshold", threshold, "binarization threshold");
    CLI::App* ablate = app.add_subcommand("ablate", "run the variant comparison matrix");
    add_common(ablate);
    ablate->add_option("--variant", variant, "run a single variant cell");
    CLI::App* convert = app.add_subcommand("convert", "convert mask<->signed distance map");
    add_common(convert);
    convert->add_option("--k", k, "transform steepness");
    convert->add_option("--threshold", threshold, "binarization threshold");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.count_all() && seed != 0) ov.seed = seed;
        if (!out.empty()) ov.out = out;
        if (!variant.empty()) ov.variant = variant;
        if (k != 0.0) ov.k = k;
        if (threshold != 0.0) ov.threshold = threshold;

        const auto cfg = dtml::cli::load_config(config_path, ov);
        if (gen->parsed()) dtml::cli::run_generate(cfg);
        if (train->parsed()) dtml::cli::run_train(cfg);
        if (eval->parsed()) dtml::cli::run_eval(cfg);
        if (ablate->parsed()) dtml::cli::run_ablate(cfg);
        if (convert->parsed()) dtml::cli::run_convert(cfg);
        return 0;
    } catch (const dtml::InvalidConfig& e) {
        std::fprintf(stderr, "invalid config: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
