#include "mew/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef MEW_CODE_VERSION
#define MEW_CODE_VERSION "unknown"
#endif

namespace mew {

namespace fs = std::filesystem;

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j = {{"data", mew::to_json(data)}, {"model", mew::to_json(model)}, {"train", mew::to_json(train)}};
    if (!dataset.empty()) j["dataset"] = dataset;
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "data") c.data = data_config_from_json(v);
        else if (key == "model") c.model = model_config_from_json(v);
        else if (key == "train") c.train = train_config_from_json(v);
        else if (key == "dataset") {
            if (!v.is_string()) throw ConfigError("dataset must be a path string");
            c.dataset = v.get<std::string>();
        } else throw ConfigError("unknown config section '" + key + "'");
    }
    if (c.model.in_channels != c.data.in_channels || c.model.n_classes != c.data.n_classes)
        throw ConfigError("model and data disagree on in_channels or n_classes");
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
    if (o.seed) {
        cfg.train.seed = *o.seed;
        cfg.data.seed = *o.seed;
    }
    if (o.mask) cfg.model.branch_mask = *o.mask;
    if (o.generator) cfg.model.generator_mode = *o.generator;
    if (o.epochs) cfg.train.epochs = *o.epochs;
    if (!o.dataset.empty()) cfg.dataset = o.dataset;
    cfg.model.validate();
    cfg.train.validate();
    cfg.data.validate();
}

std::string code_version() { return MEW_CODE_VERSION; }

void run_gen_data(const RunConfig& cfg, const fs::path& out) {
    write_dataset_root(out, cfg.data);
}

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

nlohmann::json history_json(const EpochStats& s) {
    nlohmann::json j = {{"epoch", s.epoch}, {"lr", s.lr}, {"loss", s.loss}};
    if (s.test) j["test"] = {{"miou", s.test->mean.iou}, {"dsc", s.test->mean.dsc}, {"hd95", s.test->mean_hd95}};
    return j;
}

struct Splits {
    Dataset train;
    Dataset test;
};

Splits load_splits(const RunConfig& cfg) {
    if (cfg.dataset.empty()) throw DataError("no dataset given (use --data or the config's \"dataset\" key)");
    const fs::path root = cfg.dataset;
    if (!fs::exists(root / "train") || !fs::exists(root / "test"))
        throw DataError("dataset " + root.string() + " must contain train/ and test/");
    Splits s{load_dataset(root / "train"), load_dataset(root / "test")};
    if (s.train.empty()) throw DataError("training split is empty");
    return s;
}

void check_compatible(const ModelConfig& m, const Dataset& d) {
    for (const SegmentationSample& s : d) {
        if (s.image.dim(0) != m.in_channels)
            throw ConfigError("dataset images have " + std::to_string(s.image.dim(0)) + " channels, model expects " +
                              std::to_string(m.in_channels));
        for (double v : s.mask.data())
            if (v >= static_cast<double>(m.n_classes))
                throw ConfigError("dataset label " + num(v) + " exceeds model n_classes");
    }
}

}  // namespace

TrainOutcome run_train(const RunConfig& cfg_in, const fs::path& out, bool verbose) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = cfg_in;
    Splits data = load_splits(cfg);
    check_compatible(cfg.model, data.train);
    check_compatible(cfg.model, data.test);
    const Tensor& probe = data.train.front().image;
    if (probe.dim(1) == probe.dim(2)) cfg.model.image_size = probe.dim(1);
    cfg.model.validate();
    fs::create_directories(out);

    Rng init_rng = Rng(cfg.train.seed).fork(0x30de1);
    Model model(cfg.model, init_rng);
    Trainer trainer(model, cfg.train);

    TrainOutcome res;
    std::ostringstream csv;
    csv << "epoch,lr,loss,test_miou,test_dsc,test_acc,test_sen,test_spe,test_hd95\n";
    bool have_best = false;
    for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
        EpochStats st = trainer.train_epoch(data.train, e);
        if (!data.test.empty() && ((e + 1) % cfg.train.eval_every == 0 || e + 1 == cfg.train.epochs))
            st.test = evaluate(model, data.test);
        csv << e << ',' << num(st.lr) << ',' << num(st.loss);
        if (st.test) {
            const Rates& m = st.test->mean;
            csv << ',' << num(m.iou) << ',' << num(m.dsc) << ',' << num(m.acc) << ',' << num(m.sen) << ','
                << num(m.spe) << ',' << num(st.test->mean_hd95) << '\n';
            if (!have_best || m.dsc > res.best_dsc) {
                have_best = true;
                res.best_dsc = m.dsc;
                res.best_epoch = e;
                save_checkpoint(out / "best.mewt", model, {{"epoch", e}, {"test_dsc", m.dsc}});
            }
        } else {
            csv << ",,,,,,\n";
        }
        if (verbose) {
            std::cerr << "epoch " << e << " lr " << num(st.lr) << " loss " << num(st.loss);
            if (st.test) std::cerr << " test mIoU " << num(st.test->mean.iou) << " DSC " << num(st.test->mean.dsc);
            std::cerr << '\n';
        }
        res.history.push_back(std::move(st));
    }
    write_text(out / "metrics.csv", csv.str());

    const ParamList params = model.params();
    nlohmann::json ck_meta = {{"epoch", cfg.train.epochs - 1},
                              {"optimizer", trainer.optimizer().state_meta()},
                              {"rng", {{"seed", cfg.train.seed}, {"epochs_completed", cfg.train.epochs}}}};
    save_checkpoint(out / "final.mewt", model, ck_meta, trainer.optimizer().state_records(params));

    res.final_report = res.history.back().test ? *res.history.back().test : evaluate(model, data.test);
    write_text(out / "test_report.json", res.final_report.to_json().dump(2) + "\n");
    write_text(out / "test_report.csv", res.final_report.to_csv());

    nlohmann::json hist = nlohmann::json::array();
    for (const EpochStats& s : res.history) hist.push_back(history_json(s));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const nlohmann::json manifest = {{"command", "train"},
                                     {"config", cfg.to_json()},
                                     {"seed", cfg.train.seed},
                                     {"code_version", code_version()},
                                     {"parameters", model.param_count()},
                                     {"history", hist},
                                     {"best", {{"epoch", res.best_epoch}, {"test_dsc", res.best_dsc}}},
                                     {"final", res.final_report.to_json()},
                                     {"wall_time_s", wall}};
    write_text(out / "run.json", manifest.dump(2) + "\n");
    return res;
}

MetricReport run_eval(const fs::path& checkpoint, const fs::path& split, const fs::path& out) {
    Model model = [&] {
        try {
            return load_model(checkpoint);
        } catch (const FormatError& e) {
            throw DataError("cannot read checkpoint " + checkpoint.string() + ": " + e.what());
        }
    }();
    const Dataset data = load_dataset(split);
    check_compatible(model.config(), data);
    const MetricReport r = evaluate(model, data);
    fs::create_directories(out);
    write_text(out / "report.json", r.to_json().dump(2) + "\n");
    write_text(out / "report.csv", r.to_csv());
    const nlohmann::json manifest = {{"command", "eval"},
                                     {"checkpoint", checkpoint.string()},
                                     {"split", split.string()},
                                     {"code_version", code_version()},
                                     {"model", to_json(model.config())}};
    write_text(out / "run.json", manifest.dump(2) + "\n");
    return r;
}

std::vector<AblationRow> ablation_rows() {
    return {{"dw", BranchMask::parse("dw"), GeneratorMode::generated},
            {"dw+hw", BranchMask::parse("dw,hw"), GeneratorMode::generated},
            {"dw+hw+cw", BranchMask::parse("dw,hw,cw"), GeneratorMode::generated},
            {"hw+cw+ch", BranchMask::parse("hw,cw,ch"), GeneratorMode::generated},
            {"full", BranchMask::parse("dw,hw,cw,ch"), GeneratorMode::generated},
            {"full+raw", BranchMask::parse("dw,hw,cw,ch"), GeneratorMode::raw}};
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0;
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<AblationResult> run_ablate(const RunConfig& cfg, const fs::path& out, std::size_t seeds, bool verbose) {
    if (seeds == 0) throw ConfigError("ablation needs at least one seed");
    fs::create_directories(out);
    std::vector<AblationResult> results;
    std::ostringstream runs;
    runs << "row,seed,miou,dsc\n";
    for (const AblationRow& row : ablation_rows()) {
        AblationResult r{row, {}, {}};
        for (std::size_t k = 0; k < seeds; ++k) {
            RunConfig c = cfg;
            c.model.branch_mask = row.mask;
            c.model.generator_mode = row.generator;
            c.train.seed = cfg.train.seed + k;
            const TrainOutcome o = run_train(c, out / row.name / ("seed" + std::to_string(c.train.seed)), false);
            r.miou.push_back(o.final_report.mean.iou);
            r.dsc.push_back(o.final_report.mean.dsc);
            runs << row.name << ',' << c.train.seed << ',' << num(r.miou.back()) << ',' << num(r.dsc.back()) << '\n';
            if (verbose)
                std::cerr << "ablation " << row.name << " seed " << c.train.seed << " mIoU " << num(r.miou.back())
                          << " DSC " << num(r.dsc.back()) << '\n';
        }
        results.push_back(std::move(r));
    }
    std::ostringstream csv;
    csv << "# synthetic desk-scale task: compare rows by ordering only; absolute values are not benchmark numbers\n";
    csv << "row,dw,hw,cw,ch,generator,seeds,miou_mean,miou_sd,dsc_mean,dsc_sd\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const AblationResult& r : results) {
        csv << r.row.name << ',' << r.row.mask.dw << ',' << r.row.mask.hw << ',' << r.row.mask.cw << ','
            << r.row.mask.ch << ',' << to_string(r.row.generator) << ',' << r.miou.size() << ','
            << num(mean_of(r.miou)) << ',' << num(sd_of(r.miou)) << ',' << num(mean_of(r.dsc)) << ','
            << num(sd_of(r.dsc)) << '\n';
        rows.push_back({{"row", r.row.name},
                        {"mask", r.row.mask.str()},
                        {"generator", to_string(r.row.generator)},
                        {"miou", r.miou},
                        {"dsc", r.dsc}});
    }
    write_text(out / "ablation.csv", csv.str());
    write_text(out / "ablation_runs.csv", runs.str());
    const nlohmann::json manifest = {{"command", "ablate"},
                                     {"config", cfg.to_json()},
                                     {"seeds", seeds},
                                     {"code_version", code_version()},
                                     {"rows", rows}};
    write_text(out / "ablation.json", manifest.dump(2) + "\n");
    return results;
}

constexpr std::size_t kPatch = 10;

FreqAnalysis run_analyze_freq(const fs::path& split, const fs::path& out,
                              const std::vector<std::pair<std::size_t, PatchRef>>& patches) {
    const Dataset data = load_dataset(split);
    if (data.empty()) throw DataError("dataset split " + split.string() + " is empty");
    std::size_t n_classes = 2;
    for (const SegmentationSample& s : data)
        for (double v : s.mask.data()) n_classes = std::max(n_classes, static_cast<std::size_t>(v) + 1);
    FreqAnalysis fa;
    if (patches.empty()) {
        fa.regions = region_curves(data, n_classes, kPatch);
    } else {
        std::vector<std::vector<PatchRef>> by_region(n_classes);
        for (const auto& [region, ref] : patches) {
            if (region >= n_classes) throw ConfigError("patch region " + std::to_string(region) + " does not exist");
            if (ref.index >= data.size()) throw ConfigError("patch refers to missing sample " + std::to_string(ref.index));
            const Shape& s = data[ref.index].image.shape();
            if (ref.y + kPatch > s[1] || ref.x + kPatch > s[2])
                throw ConfigError("patch at (" + std::to_string(ref.y) + "," + std::to_string(ref.x) + ") of sample " +
                                  std::to_string(ref.index) + " is out of bounds");
            by_region[region].push_back(ref);
        }
        if (by_region[0].empty() || by_region[1].empty())
            throw ConfigError("explicit patches must cover regions 0 and 1");
        for (std::size_t r = 0; r < n_classes; ++r) {
            RegionCurves rc = by_region[r].empty() ? RegionCurves{} : patch_set_curves(data, by_region[r], kPatch);
            rc.region = r;
            fa.regions.push_back(std::move(rc));
        }
    }
    fa.separation = compare_regions(fa.regions.at(0), fa.regions.at(1));

    fs::create_directories(out);
    std::ostringstream csv;
    csv << "region,mode,index,strength\n";
    for (const RegionCurves& r : fa.regions) {
        for (std::size_t i = 0; i < r.single.size(); ++i) csv << r.region << ",single," << i << ',' << num(r.single[i]) << '\n';
        for (std::size_t i = 0; i < r.multi.size(); ++i) csv << r.region << ",multi," << i << ',' << num(r.multi[i]) << '\n';
    }
    write_text(out / "curves.csv", csv.str());
    nlohmann::json regions = nlohmann::json::array();
    for (const RegionCurves& r : fa.regions) regions.push_back({{"region", r.region}, {"patches", r.patches}});
    nlohmann::json pairs = nlohmann::json::array();
    for (std::size_t a = 0; a < fa.regions.size(); ++a)
        for (std::size_t b = a + 1; b < fa.regions.size(); ++b) {
            if (!fa.regions[a].patches || !fa.regions[b].patches) continue;
            const Separability s = compare_regions(fa.regions[a], fa.regions[b]);
            pairs.push_back({{"regions", {a, b}},
                             {"single_axis_intersections", s.single_crossings},
                             {"multi_axis_intersections", s.multi_crossings}});
        }
    const nlohmann::json summary = {{"command", "analyze-freq"},
                                    {"split", split.string()},
                                    {"patch_size", 10},
                                    {"regions", regions},
                                    {"pairs", pairs},
                                    {"single_axis_intersections", fa.separation.single_crossings},
                                    {"multi_axis_intersections", fa.separation.multi_crossings},
                                    {"code_version", code_version()}};
    write_text(out / "summary.json", summary.dump(2) + "\n");
    return fa;
}

}  // namespace mew
