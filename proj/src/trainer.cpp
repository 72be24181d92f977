#include "dtml/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <thread>

#include "dtml/kernels.hpp"
#include "dtml/metrics.hpp"
#include "dtml/sdm.hpp"

namespace dtml::trainer {

const char* to_string(SupervisedModeMd m) {
    switch (m) {
        case SupervisedModeMd::l_dis: return "L_dis";
        case SupervisedModeMd::l_mask: return "L_mask";
        case SupervisedModeMd::l_dis_plus_l_mask: return "L_dis_plus_L_mask";
    }
    return "?";
}

const char* to_string(Variant v) {
    switch (v) {
        case Variant::dtml: return "dtml";
        case Variant::ms_only: return "ms_only";
        case Variant::md_only: return "md_only";
    }
    return "?";
}

SupervisedModeMd parse_supervised_mode(const std::string& s) {
    if (s == "L_dis") return SupervisedModeMd::l_dis;
    if (s == "L_mask") return SupervisedModeMd::l_mask;
    if (s == "L_dis_plus_L_mask") return SupervisedModeMd::l_dis_plus_l_mask;
    throw InvalidConfig("unknown supervised_mode_md: " + s);
}

Variant parse_variant(const std::string& s) {
    if (s == "dtml") return Variant::dtml;
    if (s == "ms_only") return Variant::ms_only;
    if (s == "md_only") return Variant::md_only;
    throw InvalidConfig("unknown variant: " + s);
}

void validate_config(const TrainConfig& cfg) {
    if (cfg.total_iterations < 0) throw InvalidConfig("total_iterations must be >= 0");
    if (cfg.base_lr <= 0) throw InvalidConfig("base_lr must be positive");
    if (cfg.lr_decay_every <= 0) throw InvalidConfig("lr_decay_every must be positive");
    if (!(cfg.lr_decay_factor > 0)) throw InvalidConfig("lr_decay_factor must be positive");
    if (cfg.labeled_per_batch <= 0) throw InvalidConfig("labeled_per_batch must be positive");
    if (cfg.unlabeled_per_batch < 0) throw InvalidConfig("unlabeled_per_batch must be >= 0");
    if (!(cfg.k > 0) || !std::isfinite(cfg.k)) throw InvalidConfig("k must be finite and positive");
    if (cfg.ramp.t_max <= 0) throw InvalidConfig("ramp t_max must be positive");
    if (cfg.ramp.max_weight < 0) throw InvalidConfig("ramp max_weight must be >= 0");
    if (!(cfg.momentum >= 0 && cfg.momentum < 1)) throw InvalidConfig("momentum must be in [0,1)");
    if (cfg.weight_decay < 0) throw InvalidConfig("weight_decay must be >= 0");
    model::validate_descriptor(cfg.arch);
    model::validate_input_shape(cfg.arch, cfg.crop_hwd[2], cfg.crop_hwd[0], cfg.crop_hwd[1]);
    for (int a = 0; a < 3; ++a)
        if (cfg.eval_stride[a] <= 0 || cfg.eval_stride[a] > cfg.crop_hwd[a])
            throw InvalidConfig("eval_stride must be in [1, crop_shape] per axis");
}

double learning_rate(const TrainConfig& cfg, std::int64_t t) {
    const auto steps = t / cfg.lr_decay_every;
    return cfg.base_lr * std::pow(cfg.lr_decay_factor, static_cast<double>(steps));
}

TrainState init_state(const TrainConfig& cfg) {
    validate_config(cfg);
    TrainState s;
    s.params_s = model::build_backbone<float>(cfg.arch, substream(cfg.seed, 10));
    s.params_d = model::build_backbone<float>(cfg.arch, substream(cfg.seed, 11));
    s.momentum_s = model::zeros_like(s.params_s);
    s.momentum_d = model::zeros_like(s.params_d);
    s.labeled_rng = Rng(substream(cfg.seed, 12));
    s.unlabeled_rng = Rng(substream(cfg.seed, 13));
    s.t = 0;
    return s;
}

namespace {

bool uses_seg(const TrainConfig& cfg) { return cfg.variant != Variant::md_only; }
bool uses_dis(const TrainConfig& cfg) { return cfg.variant != Variant::ms_only; }
bool uses_consistency(const TrainConfig& cfg) {
    return cfg.variant == Variant::dtml && cfg.ramp.max_weight > 0.0;
}

Grid3<float> sdm_norm_f32(const Mask& m) {
    const SignedDistanceMap s = sdm::normalize_sdm(sdm::compute_sdm(m));
    Grid3<float> out(m.h, m.w, m.d, 0.0f, m.spacing);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.v[i] = static_cast<float>(s.values.v[i]);
    return out;
}

LabeledCrop sample_labeled_crop(Rng& rng, const data::Sample& sample, std::array<int, 3> crop_hwd) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto [cv, cm] = data::random_crop(sample.image, &sample.mask, crop_hwd, rng);
        const std::size_t fg = count_foreground(*cm);
        if (fg == 0 || fg == cm->size()) continue;  // distance target undefined, redraw
        auto [av, am] = data::augment(cv, &*cm, rng);
        return {std::move(av), std::move(*am), sdm_norm_f32(*am)};
    }
    throw Error("sample_batch: could not draw a non-degenerate labeled crop");
}

// Per-crop forward/backward work product.
struct CropResult {
    model::NetworkParams<float> grads_s, grads_d;
    double l_seg = 0.0, l_dis = 0.0, l_mask = 0.0, l_sup = 0.0, l_con = 0.0;
};

CropResult process_crop(const TrainState& state, const TrainConfig& cfg, const Volume& image,
                        const LabeledCrop* lab, double lambda, int n_lab, int n_all) {
    CropResult r;
    const bool use_s = uses_seg(cfg);
    const bool use_d = uses_dis(cfg);
    const bool use_con = uses_consistency(cfg);
    const float k = static_cast<float>(cfg.k);

    const model::Tensor<float> xin = model::tensor_from_grid(image);
    model::Tape<float> tape_s, tape_d;
    Grid3<float> p, z;
    if (use_s) p = model::grid_from_tensor(model::forward(state.params_s, xin, model::Head::seg, &tape_s));
    if (use_d) z = model::grid_from_tensor(model::forward(state.params_d, xin, model::Head::dis, &tape_d));

    Grid3<float> gp, gz;
    if (use_s) gp = Grid3<float>(p.h, p.w, p.d);
    if (use_d) gz = Grid3<float>(z.h, z.w, z.d);

    if (lab) {
        const float inv_lab = 1.0f / static_cast<float>(n_lab);
        if (use_s) r.l_seg = losses::loss_seg_vjp(p, lab->mask, inv_lab, gp);
        if (use_d) {
            switch (cfg.supervised_mode_md) {
                case SupervisedModeMd::l_dis:
                    r.l_dis = losses::loss_dis_vjp(z, lab->sdm_norm, inv_lab, gz);
                    r.l_sup = r.l_dis;
                    break;
                case SupervisedModeMd::l_mask:
                    r.l_mask = losses::loss_mask_vjp(z, lab->mask, k, inv_lab, gz);
                    r.l_sup = r.l_mask;
                    break;
                case SupervisedModeMd::l_dis_plus_l_mask:
                    r.l_dis = losses::loss_dis_vjp(z, lab->sdm_norm, inv_lab, gz);
                    r.l_mask = losses::loss_mask_vjp(z, lab->mask, k, inv_lab, gz);
                    r.l_sup = r.l_dis + r.l_mask;
                    break;
            }
        }
    }

    if (use_con) {
        const float scale = static_cast<float>(lambda) / static_cast<float>(n_all);
        r.l_con = losses::loss_consistency_vjp_seg(p, z, k, scale, gp);
        losses::loss_consistency_vjp_sdm(p, z, k, scale, gz);
    }

    if (use_s) {
        r.grads_s = model::zeros_like(state.params_s);
        model::backward(state.params_s, tape_s, model::tensor_from_grid(gp), r.grads_s);
    }
    if (use_d) {
        r.grads_d = model::zeros_like(state.params_d);
        model::backward(state.params_d, tape_d, model::tensor_from_grid(gz), r.grads_d);
    }
    return r;
}

void sgd_step(model::NetworkParams<float>& params, model::NetworkParams<float>& momentum,
              const model::NetworkParams<float>& grads, const TrainConfig& cfg, double lr) {
    const auto& K = kernels::ops<float>();
    const float mu = static_cast<float>(cfg.momentum);
    const float wd = static_cast<float>(cfg.weight_decay);
    const float step = static_cast<float>(lr);
    for (std::size_t j = 0; j < params.tensors.size(); ++j) {
        float* th = params.tensors[j].data.data();
        float* v = momentum.tensors[j].data.data();
        const float* g = grads.tensors[j].data.data();
        const std::size_t n = params.tensors[j].data.size();
        K.scale(v, mu, n);
        K.axpy(v, g, 1.0f, n);
        if (wd != 0.0f) K.axpy(v, th, wd, n);
        K.axpy(th, v, -step, n);
    }
}

}  // namespace

Batch sample_batch(TrainState& state, const data::DatasetSplit& split, const TrainConfig& cfg) {
    if (split.labeled.empty()) throw EmptyPartition("sample_batch: no labeled volumes");
    Batch b;
    for (int i = 0; i < cfg.labeled_per_batch; ++i) {
        const auto vi = state.labeled_rng.below(split.labeled.size());
        b.labeled.push_back(sample_labeled_crop(state.labeled_rng, split.labeled[vi], cfg.crop_hwd));
    }
    if (uses_consistency(cfg) && cfg.unlabeled_per_batch > 0) {
        if (split.unlabeled.empty())
            throw EmptyPartition("sample_batch: unlabeled crops requested but partition is empty");
        for (int i = 0; i < cfg.unlabeled_per_batch; ++i) {
            const auto vi = state.unlabeled_rng.below(split.unlabeled.size());
            auto [cv, cm] = data::random_crop(split.unlabeled[vi], nullptr, cfg.crop_hwd,
                                              state.unlabeled_rng);
            auto [av, am] = data::augment(cv, nullptr, state.unlabeled_rng);
            b.unlabeled.push_back(std::move(av));
        }
    }
    return b;
}

void train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg) {
    const double lr = learning_rate(cfg, state.t);
    const double lambda = uses_consistency(cfg) ? losses::lambda_con(state.t, cfg.ramp) : 0.0;
    const int n_lab = static_cast<int>(batch.labeled.size());
    const int n_all = n_lab + static_cast<int>(batch.unlabeled.size());
    if (n_lab == 0) throw InvalidConfig("train_step: batch has no labeled crops");

    struct Work {
        const Volume* image;
        const LabeledCrop* lab;
    };
    std::vector<Work> work;
    for (const auto& lc : batch.labeled) work.push_back({&lc.image, &lc});
    for (const auto& uv : batch.unlabeled) work.push_back({&uv, nullptr});

    std::vector<CropResult> results(work.size());
    const int threads = std::min<int>(std::max(cfg.threads, 1), static_cast<int>(work.size()));
    if (threads <= 1) {
        for (std::size_t i = 0; i < work.size(); ++i)
            results[i] = process_crop(state, cfg, *work[i].image, work[i].lab, lambda, n_lab, n_all);
    } else {
        std::vector<std::future<void>> futs;
        std::atomic<std::size_t> next{0};
        for (int tid = 0; tid < threads; ++tid)
            futs.push_back(std::async(std::launch::async, [&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= work.size()) return;
                    results[i] = process_crop(state, cfg, *work[i].image, work[i].lab, lambda,
                                              n_lab, n_all);
                }
            }));
        for (auto& f : futs) f.get();
    }

    // fixed-order reduction keeps results independent of thread scheduling
    LossRow row;
    row.iteration = state.t;
    row.lr = lr;
    row.lambda_con = lambda;
    model::NetworkParams<float> grads_s, grads_d;
    if (uses_seg(cfg)) grads_s = model::zeros_like(state.params_s);
    if (uses_dis(cfg)) grads_d = model::zeros_like(state.params_d);
    const auto& K = kernels::ops<float>();
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (uses_seg(cfg))
            for (std::size_t j = 0; j < grads_s.tensors.size(); ++j)
                K.axpy(grads_s.tensors[j].data.data(), r.grads_s.tensors[j].data.data(), 1.0f,
                       grads_s.tensors[j].data.size());
        if (uses_dis(cfg))
            for (std::size_t j = 0; j < grads_d.tensors.size(); ++j)
                K.axpy(grads_d.tensors[j].data.data(), r.grads_d.tensors[j].data.data(), 1.0f,
                       grads_d.tensors[j].data.size());
        row.l_seg += r.l_seg / n_lab;
        row.l_dis += r.l_dis / n_lab;
        row.l_mask += r.l_mask / n_lab;
        row.l_md_supervised += r.l_sup / n_lab;
        if (uses_consistency(cfg)) row.l_con_s += r.l_con / n_all;
    }
    row.l_con_d = row.l_con_s;  // simultaneous updates share one consistency value

    if (uses_seg(cfg)) sgd_step(state.params_s, state.momentum_s, grads_s, cfg, lr);
    if (uses_dis(cfg)) sgd_step(state.params_d, state.momentum_d, grads_d, cfg, lr);

    const bool finite_losses = std::isfinite(row.l_seg) && std::isfinite(row.l_md_supervised) &&
                               std::isfinite(row.l_con_s);
    if (!finite_losses || (uses_seg(cfg) && !state.params_s.all_finite()) ||
        (uses_dis(cfg) && !state.params_d.all_finite()))
        throw FatalDivergence("train_step: non-finite loss or parameter at iteration " +
                              std::to_string(state.t));

    state.log.push_back(row);
    ++state.t;
}

Objectives evaluate_objectives(const TrainState& state, const Batch& batch, const TrainConfig& cfg) {
    const double lambda = uses_consistency(cfg) ? losses::lambda_con(state.t, cfg.ramp) : 0.0;
    const float k = static_cast<float>(cfg.k);
    Objectives o;
    double con = 0.0;
    const int n_lab = static_cast<int>(batch.labeled.size());
    const int n_all = n_lab + static_cast<int>(batch.unlabeled.size());

    auto eval_crop = [&](const Volume& img, const LabeledCrop* lab) {
        Grid3<float> p, z;
        if (uses_seg(cfg)) p = model::forward_seg(state.params_s, img);
        if (uses_dis(cfg)) z = model::forward_dis(state.params_d, img);
        if (lab) {
            if (uses_seg(cfg)) o.obj_s += losses::loss_seg(p, lab->mask) / n_lab;
            if (uses_dis(cfg)) {
                double sup = 0.0;
                if (cfg.supervised_mode_md != SupervisedModeMd::l_mask)
                    sup += losses::loss_dis(z, lab->sdm_norm);
                if (cfg.supervised_mode_md != SupervisedModeMd::l_dis)
                    sup += losses::loss_mask(z, lab->mask, k);
                o.obj_d += sup / n_lab;
            }
        }
        if (uses_consistency(cfg)) con += losses::loss_consistency(p, z, k) / n_all;
    };
    for (const auto& lc : batch.labeled) eval_crop(lc.image, &lc);
    for (const auto& uv : batch.unlabeled) eval_crop(uv, nullptr);
    o.obj_s += lambda * con;
    o.obj_d += lambda * con;
    return o;
}

std::vector<int> window_offsets(int extent, int crop, int stride) {
    if (crop > extent) throw CropTooLarge("window exceeds volume extent");
    if (stride <= 0 || stride > crop) throw CropTooLarge("stride must be in [1, crop]");
    std::vector<int> offs;
    for (int o = 0;; o += stride) {
        if (o + crop >= extent) {
            offs.push_back(extent - crop);
            break;
        }
        offs.push_back(o);
    }
    return offs;
}

Grid3<float> sliding_window_predict(const model::NetworkParams<float>& params, const Volume& v,
                                    std::array<int, 3> crop_hwd, std::array<int, 3> stride_hwd,
                                    model::Head head) {
    const auto oy = window_offsets(v.h, crop_hwd[0], stride_hwd[0]);
    const auto ox = window_offsets(v.w, crop_hwd[1], stride_hwd[1]);
    const auto oz = window_offsets(v.d, crop_hwd[2], stride_hwd[2]);

    Grid3<float> sum(v.h, v.w, v.d, 0.0f, v.spacing);
    Grid3<float> count(v.h, v.w, v.d, 0.0f, v.spacing);
    model::Tensor<float> xin(1, crop_hwd[2], crop_hwd[0], crop_hwd[1]);

    for (int z0 : oz)
        for (int y0 : oy)
            for (int x0 : ox) {
                for (int z = 0; z < crop_hwd[2]; ++z)
                    for (int y = 0; y < crop_hwd[0]; ++y) {
                        const float* src = v.v.data() + v.idx(x0, y0 + y, z0 + z);
                        std::copy(src, src + crop_hwd[1],
                                  xin.v.data() + (static_cast<std::size_t>(z) * crop_hwd[0] + y) * crop_hwd[1]);
                    }
                const model::Tensor<float> out = model::forward(params, xin, head);
                for (int z = 0; z < crop_hwd[2]; ++z)
                    for (int y = 0; y < crop_hwd[0]; ++y)
                        for (int x = 0; x < crop_hwd[1]; ++x) {
                            const std::size_t di = sum.idx(x0 + x, y0 + y, z0 + z);
                            sum.v[di] += out.v[(static_cast<std::size_t>(z) * crop_hwd[0] + y) * crop_hwd[1] + x];
                            count.v[di] += 1.0f;
                        }
            }

    for (std::size_t i = 0; i < sum.size(); ++i) sum.v[i] /= count.v[i];
    return sum;
}

namespace {

template <typename T>
Mask binarize_impl(const Grid3<T>& p, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw InvalidConfig("binarize: threshold must be in (0,1)");
    Mask m(p.h, p.w, p.d, 0, p.spacing);
    for (std::size_t i = 0; i < p.size(); ++i)
        m.v[i] = static_cast<double>(p.v[i]) >= threshold ? 1 : 0;
    return m;
}

}  // namespace

Mask binarize(const Grid3<float>& p, double threshold) { return binarize_impl(p, threshold); }
Mask binarize(const Grid3<double>& p, double threshold) { return binarize_impl(p, threshold); }

double mean_dice(const model::NetworkParams<float>& params, const std::vector<data::Sample>& samples,
                 const TrainConfig& cfg, model::Head head) {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& s : samples) {
        Volume v = s.image;
        data::standardize(v);
        Grid3<float> pred = sliding_window_predict(params, v, cfg.crop_hwd, cfg.eval_stride, head);
        if (head == model::Head::dis)
            for (auto& x : pred.v) x = sdm::soft_mask_value(x, static_cast<float>(cfg.k));
        acc += metrics::dice(binarize(pred), s.mask);
    }
    return acc / static_cast<double>(samples.size());
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows) {
    std::ofstream f(path);
    if (!f) throw IOFailure("cannot write loss log: " + path);
    f << "iteration,lr,lambda_con,l_seg,l_md_supervised,l_con_s,l_con_d\n";
    f.precision(10);
    for (const auto& r : rows)
        f << r.iteration << ',' << r.lr << ',' << r.lambda_con << ',' << r.l_seg << ','
          << r.l_md_supervised << ',' << r.l_con_s << ',' << r.l_con_d << "\n";
    if (!f) throw IOFailure("write failed: " + path);
}

TrainResult train(const data::DatasetSplit& split, const TrainConfig& cfg) {
    validate_config(cfg);
    if (split.labeled.empty()) throw EmptyPartition("train: labeled partition is empty");
    if (uses_consistency(cfg) && cfg.unlabeled_per_batch > 0 && split.unlabeled.empty())
        throw EmptyPartition("train: unlabeled partition is empty");

    // standardize once per volume
    data::DatasetSplit std_split = split;
    for (auto& s : std_split.labeled) data::standardize(s.image);
    for (auto& v : std_split.unlabeled) data::standardize(v);

    TrainResult res;
    res.state = init_state(cfg);
    res.best_s = res.state.params_s;
    res.best_d = res.state.params_d;
    res.best_score = -1.0;
    res.best_iteration = 0;

    const bool to_disk = !cfg.out_dir.empty();
    if (to_disk) std::filesystem::create_directories(cfg.out_dir);
    const model::Head select_head = cfg.variant == Variant::md_only ? model::Head::dis
                                                                    : model::Head::seg;

    auto checkpoint = [&](const std::string& name, const model::NetworkParams<float>& ps,
                          const model::NetworkParams<float>& pd, std::int64_t iter) {
        if (!to_disk) return;
        model::CheckpointMeta meta{cfg.arch, iter, cfg.k};
        model::save_checkpoint(cfg.out_dir + "/" + name, ps, pd, meta);
    };

    try {
        for (std::int64_t t = 0; t < cfg.total_iterations; ++t) {
            Batch batch = sample_batch(res.state, std_split, cfg);
            train_step(res.state, batch, cfg);

            const bool last = t + 1 == cfg.total_iterations;
            if (cfg.checkpoint_interval > 0 && ((t + 1) % cfg.checkpoint_interval == 0 || last))
                checkpoint("ckpt_latest", res.state.params_s, res.state.params_d, res.state.t);
            if (cfg.eval_interval > 0 && ((t + 1) % cfg.eval_interval == 0 || last)) {
                const auto& scored = select_head == model::Head::dis ? res.state.params_d
                                                                     : res.state.params_s;
                const double score = mean_dice(scored, split.labeled, cfg, select_head);
                if (score > res.best_score) {
                    res.best_score = score;
                    res.best_iteration = res.state.t;
                    res.best_s = res.state.params_s;
                    res.best_d = res.state.params_d;
                }
            }
        }
    } catch (const FatalDivergence&) {
        // the last periodic ckpt_latest stays on disk as the last good state
        if (to_disk) write_loss_csv(cfg.out_dir + "/loss_log.csv", res.state.log);
        throw;
    }

    if (res.best_score < 0.0) {  // no selection pass ran
        res.best_s = res.state.params_s;
        res.best_d = res.state.params_d;
        res.best_iteration = res.state.t;
    }

    checkpoint("ckpt_final", res.state.params_s, res.state.params_d, res.state.t);
    checkpoint("ckpt_best", res.best_s, res.best_d, res.best_iteration);
    if (to_disk) write_loss_csv(cfg.out_dir + "/loss_log.csv", res.state.log);
    return res;
}

}  // namespace dtml::trainer
