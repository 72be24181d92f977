#include "dtml/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <set>

#include <json.hpp>

#include "dtml/data.hpp"
#include "dtml/sdm.hpp"

namespace dtml::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object())
        throw InvalidConfig("config: " + where + " must be an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw InvalidConfig("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            j.at(key).get_to(out);
        } catch (const json::exception& e) {
            throw InvalidConfig("config: bad value for '" + std::string(key) + "': " + e.what());
        }
    }
}

void get_shape(const json& j, const char* key, std::array<int, 3>& out) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw InvalidConfig(std::string("config: '") + key + "' must be a 3-element array");
    for (int i = 0; i < 3; ++i) {
        try {
            out[i] = a.at(i).get<int>();
        } catch (const json::exception& e) {
            throw InvalidConfig(std::string("config: bad '") + key + "': " + e.what());
        }
    }
}

void parse_dataset(const json& j, DatasetConfig& d) {
    check_keys(j, {"dir", "count", "shape", "spacing", "labeled_fraction", "test_count"}, "dataset");
    get_to(j, "dir", d.dir);
    get_to(j, "count", d.count);
    get_shape(j, "shape", d.shape_hwd);
    if (j.contains("spacing")) {
        const auto& a = j.at("spacing");
        if (!a.is_array() || a.size() != 3)
            throw InvalidConfig("config: 'spacing' must be a 3-element array");
        d.spacing = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
    }
    get_to(j, "labeled_fraction", d.labeled_fraction);
    get_to(j, "test_count", d.test_count);
}

void parse_train(const json& j, trainer::TrainConfig& t, std::string& manifest) {
    check_keys(j,
               {"total_iterations", "base_lr", "lr_decay_factor", "lr_decay_every",
                "labeled_per_batch", "unlabeled_per_batch", "crop_shape", "ramp",
                "supervised_mode_md", "k", "model", "momentum", "weight_decay", "eval_interval",
                "checkpoint_interval", "threads", "variant", "eval_stride", "manifest"},
               "train");
    get_to(j, "total_iterations", t.total_iterations);
    get_to(j, "base_lr", t.base_lr);
    get_to(j, "lr_decay_factor", t.lr_decay_factor);
    get_to(j, "lr_decay_every", t.lr_decay_every);
    get_to(j, "labeled_per_batch", t.labeled_per_batch);
    get_to(j, "unlabeled_per_batch", t.unlabeled_per_batch);
    get_shape(j, "crop_shape", t.crop_hwd);
    bool ramp_tmax_given = false;
    if (j.contains("ramp")) {
        const auto& r = j.at("ramp");
        check_keys(r, {"max_weight", "t_max", "exponent_squared"}, "train.ramp");
        get_to(r, "max_weight", t.ramp.max_weight);
        if (r.contains("t_max")) {
            r.at("t_max").get_to(t.ramp.t_max);
            ramp_tmax_given = true;
        }
        get_to(r, "exponent_squared", t.ramp.exponent_squared);
    }
    if (!ramp_tmax_given) t.ramp.t_max = std::max<std::int64_t>(t.total_iterations, 1);
    if (j.contains("supervised_mode_md"))
        t.supervised_mode_md = trainer::parse_supervised_mode(j.at("supervised_mode_md").get<std::string>());
    get_to(j, "k", t.k);
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"levels", "base_width", "in_channels", "conv_kernel"}, "train.model");
        get_to(m, "levels", t.arch.levels);
        get_to(m, "base_width", t.arch.base_width);
        get_to(m, "in_channels", t.arch.in_channels);
        get_to(m, "conv_kernel", t.arch.conv_kernel);
    }
    get_to(j, "momentum", t.momentum);
    get_to(j, "weight_decay", t.weight_decay);
    get_to(j, "eval_interval", t.eval_interval);
    get_to(j, "checkpoint_interval", t.checkpoint_interval);
    get_to(j, "threads", t.threads);
    if (j.contains("variant")) t.variant = trainer::parse_variant(j.at("variant").get<std::string>());
    std::array<int, 3> stride{0, 0, 0};
    get_shape(j, "eval_stride", stride);
    if (stride[0] > 0) {
        t.eval_stride = stride;
    } else {
        for (int a = 0; a < 3; ++a) t.eval_stride[a] = std::max(1, t.crop_hwd[a] / 2);
    }
    get_to(j, "manifest", manifest);
}

void parse_eval(const json& j, EvalConfig& e) {
    check_keys(j,
               {"checkpoint", "manifest", "threshold", "crop_shape", "stride", "inject_gt",
                "score_dis_head"},
               "eval");
    get_to(j, "checkpoint", e.checkpoint);
    get_to(j, "manifest", e.manifest);
    get_to(j, "threshold", e.threshold);
    get_shape(j, "crop_shape", e.crop_hwd);
    get_shape(j, "stride", e.stride_hwd);
    get_to(j, "inject_gt", e.inject_gt);
    get_to(j, "score_dis_head", e.score_dis_head);
}

void parse_ablate(const json& j, AblateConfig& a) {
    check_keys(j, {"variants", "seeds", "parallel_cells"}, "ablate");
    get_to(j, "variants", a.variants);
    get_to(j, "seeds", a.seeds);
    get_to(j, "parallel_cells", a.parallel_cells);
}

void parse_convert(const json& j, ConvertConfig& c) {
    check_keys(j, {"input", "output", "direction", "k", "threshold"}, "convert");
    get_to(j, "input", c.input);
    get_to(j, "output", c.output);
    get_to(j, "direction", c.direction);
    get_to(j, "k", c.k);
    get_to(j, "threshold", c.threshold);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IOFailure("cannot write: " + path);
    f << text;
    if (!f) throw IOFailure("write failed: " + path);
}

void write_resolved_config(const ExperimentConfig& cfg, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    write_text_file(dir + "/resolved_config.json", resolved_config_json(cfg));
}

double nan_to(double x, double fallback) { return std::isfinite(x) ? x : fallback; }

}  // namespace

ExperimentConfig load_config(const std::string& path, const CliOverrides& o) {
    std::ifstream f(path);
    if (!f) throw InvalidConfig("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw InvalidConfig("config is not valid JSON: " + std::string(e.what()));
    }
    check_keys(j, {"master_seed", "out_dir", "dataset", "train", "eval", "ablate", "convert"},
               "top level");

    ExperimentConfig cfg;
    get_to(j, "master_seed", cfg.master_seed);
    get_to(j, "out_dir", cfg.out_dir);
    std::string train_manifest;
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train, train_manifest);
    if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
    if (j.contains("ablate")) parse_ablate(j.at("ablate"), cfg.ablate);
    if (j.contains("convert")) parse_convert(j.at("convert"), cfg.convert);

    if (o.seed) cfg.master_seed = *o.seed;
    if (o.out) cfg.out_dir = *o.out;
    if (o.variant) cfg.ablate.variants = {*o.variant};
    if (o.k) {
        cfg.convert.k = *o.k;
        cfg.train.k = *o.k;
    }
    if (o.threshold) {
        cfg.eval.threshold = *o.threshold;
        cfg.convert.threshold = *o.threshold;
    }

    cfg.train.seed = cfg.master_seed;
    cfg.manifest_path =
        !train_manifest.empty() ? train_manifest : cfg.dataset.dir + "/manifest.json";

    if (cfg.eval.crop_hwd[0] <= 0) cfg.eval.crop_hwd = cfg.train.crop_hwd;
    if (cfg.eval.stride_hwd[0] <= 0)
        for (int a = 0; a < 3; ++a) cfg.eval.stride_hwd[a] = std::max(1, cfg.eval.crop_hwd[a] / 2);
    if (cfg.eval.manifest.empty()) cfg.eval.manifest = cfg.manifest_path;
    return cfg;
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["master_seed"] = cfg.master_seed;
    j["out_dir"] = cfg.out_dir;
    j["dataset"] = {{"dir", cfg.dataset.dir},
                    {"count", cfg.dataset.count},
                    {"shape", cfg.dataset.shape_hwd},
                    {"spacing", {cfg.dataset.spacing.sx, cfg.dataset.spacing.sy, cfg.dataset.spacing.sz}},
                    {"labeled_fraction", cfg.dataset.labeled_fraction},
                    {"test_count", cfg.dataset.test_count}};
    j["train"] = {{"total_iterations", cfg.train.total_iterations},
                  {"base_lr", cfg.train.base_lr},
                  {"lr_decay_factor", cfg.train.lr_decay_factor},
                  {"lr_decay_every", cfg.train.lr_decay_every},
                  {"labeled_per_batch", cfg.train.labeled_per_batch},
                  {"unlabeled_per_batch", cfg.train.unlabeled_per_batch},
                  {"crop_shape", cfg.train.crop_hwd},
                  {"ramp",
                   {{"max_weight", cfg.train.ramp.max_weight},
                    {"t_max", cfg.train.ramp.t_max},
                    {"exponent_squared", cfg.train.ramp.exponent_squared}}},
                  {"supervised_mode_md", trainer::to_string(cfg.train.supervised_mode_md)},
                  {"k", cfg.train.k},
                  {"model",
                   {{"levels", cfg.train.arch.levels},
                    {"base_width", cfg.train.arch.base_width},
                    {"in_channels", cfg.train.arch.in_channels},
                    {"conv_kernel", cfg.train.arch.conv_kernel}}},
                  {"momentum", cfg.train.momentum},
                  {"weight_decay", cfg.train.weight_decay},
                  {"eval_interval", cfg.train.eval_interval},
                  {"checkpoint_interval", cfg.train.checkpoint_interval},
                  {"threads", cfg.train.threads},
                  {"variant", trainer::to_string(cfg.train.variant)},
                  {"eval_stride", cfg.train.eval_stride},
                  {"manifest", cfg.manifest_path}};
    j["eval"] = {{"checkpoint", cfg.eval.checkpoint},
                 {"manifest", cfg.eval.manifest},
                 {"threshold", cfg.eval.threshold},
                 {"crop_shape", cfg.eval.crop_hwd},
                 {"stride", cfg.eval.stride_hwd},
                 {"inject_gt", cfg.eval.inject_gt},
                 {"score_dis_head", cfg.eval.score_dis_head}};
    j["ablate"] = {{"variants", cfg.ablate.variants},
                   {"seeds", cfg.ablate.seeds},
                   {"parallel_cells", cfg.ablate.parallel_cells}};
    j["convert"] = {{"input", cfg.convert.input},
                    {"output", cfg.convert.output},
                    {"direction", cfg.convert.direction},
                    {"k", cfg.convert.k},
                    {"threshold", cfg.convert.threshold}};
    return j.dump(2) + "\n";
}

std::string config_hash_hex(const std::string& canonical_json) {
    // FNV-1a 64
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_json) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void run_generate(const ExperimentConfig& cfg) {
    if (cfg.dataset.count < 1) throw InvalidConfig("generate: dataset.count must be >= 1");
    std::error_code ec;
    fs::create_directories(cfg.dataset.dir, ec);

    const auto samples = data::generate_synthetic(cfg.dataset.count, cfg.dataset.shape_hwd,
                                                  cfg.master_seed, cfg.dataset.spacing);

    char name[64];
    std::vector<data::ManifestEntry> entries(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(name, sizeof(name), "vol_%03zu.raw", i);
        data::write_volume(cfg.dataset.dir + "/" + name, samples[i].image);
        entries[i].image = name;
        std::snprintf(name, sizeof(name), "msk_%03zu.raw", i);
        data::write_mask(cfg.dataset.dir + "/" + name, samples[i].mask);
        entries[i].mask = name;
    }

    const auto idx = data::split_indices(static_cast<int>(samples.size()),
                                         cfg.dataset.labeled_fraction, cfg.master_seed,
                                         cfg.dataset.test_count);
    data::Manifest m;
    for (int i : idx.test) m.test.push_back(entries[i]);
    for (int i : idx.labeled) m.labeled.push_back(entries[i]);
    for (int i : idx.unlabeled) m.unlabeled.push_back(entries[i]);
    data::write_manifest(cfg.dataset.dir + "/manifest.json", m);
    write_resolved_config(cfg, cfg.dataset.dir);
    std::printf("generated %zu volumes (%zu labeled / %zu unlabeled / %zu test) in %s\n",
                samples.size(), m.labeled.size(), m.unlabeled.size(), m.test.size(),
                cfg.dataset.dir.c_str());
}

void run_train(const ExperimentConfig& cfg) {
    trainer::TrainConfig tc = cfg.train;
    tc.out_dir = cfg.out_dir;
    const auto split = data::load_split(cfg.manifest_path);
    write_resolved_config(cfg, cfg.out_dir);
    const auto res = trainer::train(split, tc);
    std::printf("trained %lld iterations, best labeled dice %.4f at iteration %lld\n",
                static_cast<long long>(res.state.t), res.best_score,
                static_cast<long long>(res.best_iteration));
    std::printf("checkpoints and loss log in %s\n", cfg.out_dir.c_str());
}

namespace {

EvalSummary evaluate_on_test(const model::NetworkParams<float>& params_s,
                             const model::NetworkParams<float>& params_d,
                             const std::vector<data::Sample>& test, const EvalConfig& e, double k) {
    EvalSummary out;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& sample = test[i];
        Mask pred;
        if (e.inject_gt) {
            pred = sample.mask;
        } else {
            Volume v = sample.image;
            data::standardize(v);
            const auto& params = e.score_dis_head ? params_d : params_s;
            const auto head = e.score_dis_head ? model::Head::dis : model::Head::seg;
            Grid3<float> p = trainer::sliding_window_predict(params, v, e.crop_hwd, e.stride_hwd, head);
            if (e.score_dis_head)
                for (auto& x : p.v) x = sdm::soft_mask_value(x, static_cast<float>(k));
            pred = trainer::binarize(p, e.threshold);
        }
        EvalRow row;
        char id[32];
        std::snprintf(id, sizeof(id), "test_%03zu", i);
        row.id = id;
        row.report.dice = metrics::dice(pred, sample.mask);
        row.report.jaccard = metrics::jaccard(pred, sample.mask);
        try {
            const auto full = metrics::evaluate(pred, sample.mask);
            row.report.asd = full.asd;
            row.report.hd95 = full.hd95;
        } catch (const DegenerateMask&) {
            row.surface_defined = false;
            row.report.asd = std::numeric_limits<double>::quiet_NaN();
            row.report.hd95 = std::numeric_limits<double>::quiet_NaN();
        }
        out.rows.push_back(row);
    }

    auto mean_of = [&](auto take) {
        double acc = 0.0;
        int n = 0;
        for (const auto& r : out.rows) {
            const double v = take(r);
            if (std::isfinite(v)) {
                acc += v;
                ++n;
            }
        }
        return n ? acc / n : std::numeric_limits<double>::quiet_NaN();
    };
    auto std_of = [&](auto take, double mean) {
        double acc = 0.0;
        int n = 0;
        for (const auto& r : out.rows) {
            const double v = take(r);
            if (std::isfinite(v)) {
                acc += (v - mean) * (v - mean);
                ++n;
            }
        }
        return n ? std::sqrt(acc / n) : std::numeric_limits<double>::quiet_NaN();
    };
    out.mean.dice = mean_of([](const EvalRow& r) { return r.report.dice; });
    out.mean.jaccard = mean_of([](const EvalRow& r) { return r.report.jaccard; });
    out.mean.asd = mean_of([](const EvalRow& r) { return r.report.asd; });
    out.mean.hd95 = mean_of([](const EvalRow& r) { return r.report.hd95; });
    out.stddev.dice = std_of([](const EvalRow& r) { return r.report.dice; }, out.mean.dice);
    out.stddev.jaccard = std_of([](const EvalRow& r) { return r.report.jaccard; }, out.mean.jaccard);
    out.stddev.asd = std_of([](const EvalRow& r) { return r.report.asd; }, nan_to(out.mean.asd, 0.0));
    out.stddev.hd95 = std_of([](const EvalRow& r) { return r.report.hd95; }, nan_to(out.mean.hd95, 0.0));
    return out;
}

void write_eval_outputs(const EvalSummary& s, const ExperimentConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    std::ofstream csv(cfg.out_dir + "/metrics.csv");
    if (!csv) throw IOFailure("cannot write: " + cfg.out_dir + "/metrics.csv");
    csv << "id,dice,jaccard,asd,hd95\n";
    csv.precision(8);
    for (const auto& r : s.rows)
        csv << r.id << ',' << r.report.dice << ',' << r.report.jaccard << ',' << r.report.asd << ','
            << r.report.hd95 << "\n";
    csv << "mean," << s.mean.dice << ',' << s.mean.jaccard << ',' << s.mean.asd << ',' << s.mean.hd95
        << "\n";
    csv << "std," << s.stddev.dice << ',' << s.stddev.jaccard << ',' << s.stddev.asd << ','
        << s.stddev.hd95 << "\n";

    const std::string resolved = resolved_config_json(cfg);
    ordered_json j;
    j["config_hash"] = config_hash_hex(resolved);
    auto report_json = [](const metrics::MetricsReport& r, bool surface_ok) {
        ordered_json o;
        o["dice"] = r.dice;
        o["jaccard"] = r.jaccard;
        if (surface_ok && std::isfinite(r.asd)) {
            o["asd"] = r.asd;
            o["hd95"] = r.hd95;
        } else {
            o["asd"] = nullptr;
            o["hd95"] = nullptr;
        }
        return o;
    };
    j["rows"] = ordered_json::array();
    for (const auto& r : s.rows) {
        auto o = report_json(r.report, r.surface_defined);
        o["id"] = r.id;
        j["rows"].push_back(o);
    }
    j["summary"] = {{"mean", report_json(s.mean, true)}, {"std", report_json(s.stddev, true)}};
    write_text_file(cfg.out_dir + "/metrics.json", j.dump(2) + "\n");
}

}  // namespace

EvalSummary run_eval(const ExperimentConfig& cfg) {
    if (cfg.eval.checkpoint.empty() && !cfg.eval.inject_gt)
        throw MissingCheckpoint("eval: no checkpoint configured");
    const auto split = data::load_split(cfg.eval.manifest);
    if (split.test.empty()) throw EmptyPartition("eval: test partition is empty");

    model::NetworkParams<float> ps, pd;
    double k = cfg.train.k;
    if (!cfg.eval.inject_gt) {
        auto ck = model::load_checkpoint(cfg.eval.checkpoint);
        ps = std::move(ck.seg);
        pd = std::move(ck.dis);
        k = ck.meta.k;
    }
    const EvalSummary s = evaluate_on_test(ps, pd, split.test, cfg.eval, k);
    write_eval_outputs(s, cfg);
    write_resolved_config(cfg, cfg.out_dir);
    std::printf("eval: %zu volumes  dice %.4f±%.4f  jaccard %.4f±%.4f  asd %.3f  hd95 %.3f\n",
                s.rows.size(), s.mean.dice, s.stddev.dice, s.mean.jaccard, s.stddev.jaccard,
                s.mean.asd, s.mean.hd95);
    return s;
}

namespace {

struct CellSpec {
    trainer::Variant variant;
    trainer::SupervisedModeMd mode;
    bool mode_given = false;
};

CellSpec parse_cell(const std::string& s, const trainer::TrainConfig& base) {
    CellSpec c{trainer::Variant::dtml, base.supervised_mode_md, false};
    const auto colon = s.find(':');
    const std::string name = colon == std::string::npos ? s : s.substr(0, colon);
    c.variant = trainer::parse_variant(name);
    if (colon != std::string::npos) {
        c.mode = trainer::parse_supervised_mode(s.substr(colon + 1));
        c.mode_given = true;
    }
    if (c.variant == trainer::Variant::ms_only && c.mode_given)
        throw InvalidConfig("ablate: ms_only has no supervised_mode_md");
    return c;
}

}  // namespace

std::vector<AblateCell> run_ablate(const ExperimentConfig& cfg) {
    if (cfg.ablate.variants.empty())
        throw InvalidConfig("ablate: no variants configured");
    if (cfg.ablate.seeds.empty())
        throw InvalidConfig("ablate: no seeds configured");
    const auto split = data::load_split(cfg.manifest_path);
    if (split.test.empty()) throw EmptyPartition("ablate: test partition is empty");

    struct Job {
        CellSpec spec;
        std::string cell_name;
        std::uint64_t seed;
        std::size_t cell_index;
    };
    std::vector<AblateCell> cells;
    std::vector<Job> jobs;
    for (const auto& vs : cfg.ablate.variants) {
        const CellSpec spec = parse_cell(vs, cfg.train);
        AblateCell cell;
        cell.variant = trainer::to_string(spec.variant);
        cell.mode = spec.variant == trainer::Variant::ms_only ? "" : trainer::to_string(spec.mode);
        cell.labeled = static_cast<int>(split.labeled.size());
        cell.unlabeled = spec.variant == trainer::Variant::dtml
                             ? static_cast<int>(split.unlabeled.size())
                             : 0;
        cell.per_seed.resize(cfg.ablate.seeds.size());
        const std::size_t ci = cells.size();
        for (std::size_t si = 0; si < cfg.ablate.seeds.size(); ++si) {
            std::string name = cell.variant;
            if (!cell.mode.empty()) name += "_" + cell.mode;
            name += "_seed" + std::to_string(cfg.ablate.seeds[si]);
            jobs.push_back({spec, name, cfg.ablate.seeds[si], ci});
        }
        cells.push_back(std::move(cell));
    }

    const int parallel = std::max(1, cfg.ablate.parallel_cells);
    auto run_job = [&](const Job& job) {
        trainer::TrainConfig tc = cfg.train;
        tc.variant = job.spec.variant;
        tc.supervised_mode_md = job.spec.mode;
        tc.seed = job.seed;
        tc.out_dir = cfg.out_dir + "/cells/" + job.cell_name;
        if (parallel > 1) tc.threads = 1;
        const auto res = trainer::train(split, tc);
        EvalConfig e = cfg.eval;
        e.inject_gt = false;
        e.score_dis_head = job.spec.variant == trainer::Variant::md_only;
        e.crop_hwd = tc.crop_hwd;
        for (int a = 0; a < 3; ++a) e.stride_hwd[a] = tc.eval_stride[a];
        return evaluate_on_test(res.best_s, res.best_d, split.test, e, tc.k);
    };

    std::atomic<std::size_t> next{0};
    std::vector<EvalSummary> job_results(jobs.size());
    if (parallel <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) job_results[i] = run_job(jobs[i]);
    } else {
        std::vector<std::future<void>> futs;
        for (int w = 0; w < parallel; ++w)
            futs.push_back(std::async(std::launch::async, [&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= jobs.size()) return;
                    job_results[i] = run_job(jobs[i]);
                }
            }));
        for (auto& f : futs) f.get();
    }

    std::vector<std::size_t> seed_cursor(cells.size(), 0);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto& cell = cells[jobs[i].cell_index];
        cell.per_seed[seed_cursor[jobs[i].cell_index]++] = job_results[i];
    }
    for (auto& cell : cells) {
        metrics::MetricsReport mean{};
        for (const auto& s : cell.per_seed) {
            mean.dice += s.mean.dice;
            mean.jaccard += s.mean.jaccard;
            mean.asd += nan_to(s.mean.asd, 0.0);
            mean.hd95 += nan_to(s.mean.hd95, 0.0);
        }
        const double n = static_cast<double>(cell.per_seed.size());
        mean.dice /= n;
        mean.jaccard /= n;
        mean.asd /= n;
        mean.hd95 /= n;
        cell.mean = mean;
    }

    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    std::ofstream csv(cfg.out_dir + "/ablate_table.csv");
    if (!csv) throw IOFailure("cannot write: " + cfg.out_dir + "/ablate_table.csv");
    csv << "variant,mode,labeled,unlabeled,seeds,dice,jaccard,asd,hd95\n";
    csv.precision(8);
    for (const auto& c : cells)
        csv << c.variant << ',' << c.mode << ',' << c.labeled << ',' << c.unlabeled << ','
            << c.per_seed.size() << ',' << c.mean.dice << ',' << c.mean.jaccard << ',' << c.mean.asd
            << ',' << c.mean.hd95 << "\n";
    csv.flush();

    const std::string resolved = resolved_config_json(cfg);
    ordered_json j;
    j["config_hash"] = config_hash_hex(resolved);
    j["cells"] = ordered_json::array();
    for (const auto& c : cells) {
        ordered_json o;
        o["variant"] = c.variant;
        o["mode"] = c.mode;
        o["labeled"] = c.labeled;
        o["unlabeled"] = c.unlabeled;
        o["mean"] = {{"dice", c.mean.dice},
                     {"jaccard", c.mean.jaccard},
                     {"asd", c.mean.asd},
                     {"hd95", c.mean.hd95}};
        o["per_seed_dice"] = ordered_json::array();
        for (const auto& s : c.per_seed) o["per_seed_dice"].push_back(s.mean.dice);
        j["cells"].push_back(o);
    }
    write_text_file(cfg.out_dir + "/ablate_table.json", j.dump(2) + "\n");
    write_resolved_config(cfg, cfg.out_dir);

    std::printf("%-10s %-18s %8s %10s %8s %8s %8s %8s\n", "variant", "mode", "labeled", "unlabeled",
                "dice", "jaccard", "asd", "hd95");
    for (const auto& c : cells)
        std::printf("%-10s %-18s %8d %10d %8.4f %8.4f %8.3f %8.3f\n", c.variant.c_str(),
                    c.mode.c_str(), c.labeled, c.unlabeled, c.mean.dice, c.mean.jaccard, c.mean.asd,
                    c.mean.hd95);
    return cells;
}

void run_convert(const ExperimentConfig& cfg) {
    const auto& c = cfg.convert;
    if (c.input.empty() || c.output.empty())
        throw InvalidConfig("convert: input and output paths are required");
    if (c.direction == "mask_to_sdm") {
        const Mask m = data::read_mask(c.input);
        const SignedDistanceMap s = sdm::normalize_sdm(sdm::compute_sdm(m));
        Volume out(m.h, m.w, m.d, 0.0f, m.spacing);
        for (std::size_t i = 0; i < out.size(); ++i)
            out.v[i] = static_cast<float>(s.values.v[i]);
        data::write_volume(c.output, out, "image");
    } else if (c.direction == "sdm_to_mask") {
        const Volume v = data::read_volume(c.input);
        Grid3<float> q(v.h, v.w, v.d, 0.0f, v.spacing);
        for (std::size_t i = 0; i < q.size(); ++i)
            q.v[i] = sdm::soft_mask_value(v.v[i], static_cast<float>(c.k));
        data::write_mask(c.output, trainer::binarize(q, c.threshold));
    } else {
        throw InvalidConfig("convert: direction must be mask_to_sdm or sdm_to_mask");
    }
    const fs::path outp(c.output);
    write_resolved_config(cfg, outp.has_parent_path() ? outp.parent_path().string() : ".");
    std::printf("converted %s -> %s (%s)\n", c.input.c_str(), c.output.c_str(), c.direction.c_str());
}

}  // namespace dtml::cli
