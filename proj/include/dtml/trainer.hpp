#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dtml/data.hpp"
#include "dtml/grid.hpp"
#include "dtml/losses.hpp"
#include "dtml/model.hpp"

namespace dtml::trainer {

// Supervised loss for the distance network on labeled crops.
enum class SupervisedModeMd { l_dis, l_mask, l_dis_plus_l_mask };

// dtml trains both networks with the consistency term; the *_only variants
// train one network on its supervised loss alone.
enum class Variant { dtml, ms_only, md_only };

const char* to_string(SupervisedModeMd m);
const char* to_string(Variant v);
SupervisedModeMd parse_supervised_mode(const std::string& s);  // throws InvalidConfig
Variant parse_variant(const std::string& s);

struct TrainConfig {
    std::int64_t total_iterations = 2000;
    double base_lr = 0.01;
    double lr_decay_factor = 0.1;
    std::int64_t lr_decay_every = 800;
    int labeled_per_batch = 2;
    int unlabeled_per_batch = 2;
    std::array<int, 3> crop_hwd{32, 32, 32};
    losses::RampUpSchedule ramp{0.1, 2000, false};
    SupervisedModeMd supervised_mode_md = SupervisedModeMd::l_mask;
    double k = 1500.0;
    model::ArchDescriptor arch{};
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::int64_t eval_interval = 200;
    std::int64_t checkpoint_interval = 500;
    int threads = 0;  // <=1: serial within a step
    Variant variant = Variant::dtml;
    std::uint64_t seed = 1;
    std::array<int, 3> eval_stride{16, 16, 16};
    std::string out_dir;  // empty: no checkpoints or loss CSV on disk
};

void validate_config(const TrainConfig& cfg);

double learning_rate(const TrainConfig& cfg, std::int64_t t);

struct LossRow {
    std::int64_t iteration = 0;
    double lr = 0.0;
    double lambda_con = 0.0;
    double l_seg = 0.0;
    double l_dis = 0.0;
    double l_mask = 0.0;
    double l_md_supervised = 0.0;
    double l_con_s = 0.0;
    double l_con_d = 0.0;
};

struct TrainState {
    model::NetworkParams<float> params_s, params_d;
    model::NetworkParams<float> momentum_s, momentum_d;
    std::int64_t t = 0;
    Rng labeled_rng, unlabeled_rng;
    std::vector<LossRow> log;
};

TrainState init_state(const TrainConfig& cfg);

struct LabeledCrop {
    Volume image;
    Mask mask;
    Grid3<float> sdm_norm;  // normalized signed distances of the crop mask
};

struct Batch {
    std::vector<LabeledCrop> labeled;
    std::vector<Volume> unlabeled;
};

// Draws labeled (and, when the consistency term is active, unlabeled) crops
// with replacement, augments them, and attaches per-crop ground-truth
// distance maps. Labeled crops are redrawn until non-degenerate so the
// distance target stays defined. Volumes must already be standardized.
Batch sample_batch(TrainState& state, const data::DatasetSplit& split, const TrainConfig& cfg);

// One simultaneous mutual-learning update: each network descends its own
// supervised loss plus the weighted consistency loss against the peer's
// detached prediction, then takes a momentum-SGD step.
void train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg);

struct Objectives {
    double obj_s = 0.0;
    double obj_d = 0.0;
};

// Combined objectives of both networks on a batch at the current parameters,
// without updating anything.
Objectives evaluate_objectives(const TrainState& state, const Batch& batch, const TrainConfig& cfg);

struct TrainResult {
    TrainState state;
    model::NetworkParams<float> best_s, best_d;
    double best_score = -1.0;
    std::int64_t best_iteration = 0;
};

TrainResult train(const data::DatasetSplit& split, const TrainConfig& cfg);

// Window start offsets covering [0, extent) with the final window clamped
// to the edge.
std::vector<int> window_offsets(int extent, int crop, int stride);

// Tiles the volume with overlapping windows and averages the per-voxel
// predictions. The input must already be standardized.
Grid3<float> sliding_window_predict(const model::NetworkParams<float>& params, const Volume& v,
                                    std::array<int, 3> crop_hwd, std::array<int, 3> stride_hwd,
                                    model::Head head);

Mask binarize(const Grid3<float>& p, double threshold = 0.5);
Mask binarize(const Grid3<double>& p, double threshold = 0.5);

// Mean Dice of sliding-window predictions against ground truth; used for
// best-checkpoint selection on the labeled set.
double mean_dice(const model::NetworkParams<float>& params, const std::vector<data::Sample>& samples,
                 const TrainConfig& cfg, model::Head head);

void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows);

}  // namespace dtml::trainer
