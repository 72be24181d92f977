#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dtml/metrics.hpp"
#include "dtml/trainer.hpp"

namespace dtml::cli {

struct DatasetConfig {
    std::string dir = "data/synth";
    int count = 50;
    std::array<int, 3> shape_hwd{32, 32, 32};
    Spacing spacing{};
    double labeled_fraction = 0.2;
    int test_count = 10;
};

struct EvalConfig {
    std::string checkpoint;  // path prefix, without .bin/.json
    std::string manifest;
    double threshold = 0.5;
    std::array<int, 3> crop_hwd{0, 0, 0};   // 0: take the train section's crop
    std::array<int, 3> stride_hwd{0, 0, 0};  // 0: half the crop
    bool inject_gt = false;
    bool score_dis_head = false;
};

struct AblateConfig {
    // "ms_only", "md_only[:MODE]", "dtml[:MODE]" with MODE one of
    // L_dis | L_mask | L_dis_plus_L_mask
    std::vector<std::string> variants;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int parallel_cells = 1;
};

struct ConvertConfig {
    std::string input;
    std::string output;
    std::string direction;  // "mask_to_sdm" | "sdm_to_mask"
    double k = 1500.0;
    double threshold = 0.5;
};

struct ExperimentConfig {
    std::uint64_t master_seed = 1;
    std::string out_dir = "runs/out";
    DatasetConfig dataset;
    trainer::TrainConfig train;
    EvalConfig eval;
    AblateConfig ablate;
    ConvertConfig convert;
    std::string manifest_path;  // resolved: train.manifest or dataset.dir/manifest.json
};

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> variant;
    std::optional<double> k;
    std::optional<double> threshold;
};

// Parses and schema-validates a config file. Unknown keys anywhere are
// rejected. Overrides are applied before validation.
ExperimentConfig load_config(const std::string& path, const CliOverrides& o = {});

// Canonical resolved form of the config; written next to every command's
// outputs so runs can be reproduced bit for bit.
std::string resolved_config_json(const ExperimentConfig& cfg);
std::string config_hash_hex(const std::string& canonical_json);

struct EvalRow {
    std::string id;
    metrics::MetricsReport report;
    bool surface_defined = true;
};

struct EvalSummary {
    std::vector<EvalRow> rows;
    metrics::MetricsReport mean, stddev;
};

struct AblateCell {
    std::string variant;
    std::string mode;  // empty for ms_only
    int labeled = 0, unlabeled = 0;
    std::vector<EvalSummary> per_seed;
    metrics::MetricsReport mean;  // over seeds of per-run means
};

void run_generate(const ExperimentConfig& cfg);
void run_train(const ExperimentConfig& cfg);
EvalSummary run_eval(const ExperimentConfig& cfg);
std::vector<AblateCell> run_ablate(const ExperimentConfig& cfg);
void run_convert(const ExperimentConfig& cfg);

}  // namespace dtml::cli
