#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mew/container.hpp"
#include "mew/runner.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::string data;
    std::optional<std::uint64_t> seed;
    std::string mask;
    std::string generator;
    std::optional<std::size_t> epochs;
};

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config, "JSON config file (defaults are used when omitted)");
    app->add_option("--out", f.out, "output directory")->required();
    app->add_option("--seed", f.seed, "seed override");
    app->add_option("--mask", f.mask, "active branches, e.g. dw,hw,cw,ch");
    app->add_option("--generator", f.generator, "generated or raw");
    app->add_option("--epochs", f.epochs, "epoch override");
}

mew::RunConfig resolve(const CommonFlags& f) {
    mew::RunConfig cfg = mew::load_run_config(f.config);
    mew::Overrides o;
    o.seed = f.seed;
    o.epochs = f.epochs;
    o.dataset = f.data;
    try {
        if (!f.mask.empty()) o.mask = mew::BranchMask::parse(f.mask);
        if (!f.generator.empty()) o.generator = mew::parse_generator_mode(f.generator);
    } catch (const std::invalid_argument& e) {
        throw mew::ConfigError(e.what());
    }
    mew::apply_overrides(cfg, o);
    return cfg;
}

std::vector<std::pair<std::size_t, mew::PatchRef>> read_patches(const std::string& path) {
    std::vector<std::pair<std::size_t, mew::PatchRef>> out;
    if (path.empty()) return out;
    std::ifstream in(path);
    if (!in) throw mew::ConfigError("cannot read patch list " + path);
    try {
        for (const auto& e : nlohmann::json::parse(in))
            out.push_back({e.at("region").get<std::size_t>(),
                           {e.at("index").get<std::size_t>(), e.at("y").get<std::size_t>(), e.at("x").get<std::size_t>()}});
    } catch (const nlohmann::json::exception& e) {
        throw mew::ConfigError("patch list " + path + ": " + e.what());
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MEW-UNet: multi-axis external weights segmentation"};
    app.require_subcommand(1);

    CommonFlags gen_f, train_f, ablate_f;
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic texture dataset");
    add_common(gen, gen_f);

    auto* tr = app.add_subcommand("train", "train a model");
    add_common(tr, train_f);
    tr->add_option("--data", train_f.data, "dataset root (with train/ and test/)");
    bool verbose = false;
    tr->add_flag("-v,--verbose", verbose, "log each epoch to stderr");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_split, ev_out;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--data", ev_split, "dataset split directory (e.g. root/test)")->required();
    ev->add_option("--out", ev_out, "output directory")->required();

    auto* ab = app.add_subcommand("ablate", "run the branch ablation grid");
    add_common(ab, ablate_f);
    ab->add_option("--data", ablate_f.data, "dataset root (with train/ and test/)");
    std::size_t seeds = 3;
    ab->add_option("--seeds", seeds, "seeds per row");
    ab->add_flag("-v,--verbose", verbose, "log each run to stderr");

    auto* af = app.add_subcommand("analyze-freq", "frequency signal-strength curves of labelled patches");
    std::string af_split, af_out, af_patches;
    af->add_option("--data", af_split, "dataset split directory (e.g. root/test)")->required();
    af->add_option("--out", af_out, "output directory")->required();
    af->add_option("--patches", af_patches, "JSON list of {region, index, y, x} patch corners");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            mew::run_gen_data(resolve(gen_f), gen_f.out);
        } else if (*tr) {
            const mew::TrainOutcome o = mew::run_train(resolve(train_f), train_f.out, verbose);
            std::cout << "final test mIoU " << o.final_report.mean.iou << " DSC " << o.final_report.mean.dsc
                      << " (best DSC " << o.best_dsc << " at epoch " << o.best_epoch << ")\n";
        } else if (*ev) {
            const mew::MetricReport r = mew::run_eval(ev_ckpt, ev_split, ev_out);
            std::cout << "mIoU " << r.mean.iou << " DSC " << r.mean.dsc << " HD95 " << r.mean_hd95 << '\n';
        } else if (*ab) {
            for (const auto& r : mew::run_ablate(resolve(ablate_f), ablate_f.out, seeds, verbose)) {
                double m = 0;
                for (double v : r.miou) m += v;
                std::cout << r.row.name << " mean mIoU " << m / static_cast<double>(r.miou.size()) << '\n';
            }
        } else if (*af) {
            const mew::FreqAnalysis fa = mew::run_analyze_freq(af_split, af_out, read_patches(af_patches));
            std::cout << "single-axis intersections " << fa.separation.single_crossings
                      << ", multi-axis intersections " << fa.separation.multi_crossings << '\n';
        }
    } catch (const mew::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const mew::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const mew::FormatError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const mew::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
