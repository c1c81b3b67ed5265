#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mew/data.hpp"
#include "mew/model.hpp"
#include "mew/train.hpp"

namespace mew {

/// Everything a run needs, as read from a JSON config file with optional
/// "data", "model", "train" sections and an optional "dataset" path.
struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    std::string dataset;

    nlohmann::json to_json() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
/// Defaults when `path` is empty. Throws ConfigError on unreadable or invalid files.
RunConfig load_run_config(const std::filesystem::path& path);

/// Command-line overrides shared by the subcommands.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<BranchMask> mask;
    std::optional<GeneratorMode> generator;
    std::optional<std::size_t> epochs;
    std::string dataset;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

/// Identifies the source tree the binary was built from.
std::string code_version();

void run_gen_data(const RunConfig& cfg, const std::filesystem::path& out);

struct TrainOutcome {
    std::vector<EpochStats> history;
    MetricReport final_report;
    double best_dsc = 0;
    std::size_t best_epoch = 0;
};

/// Writes metrics.csv (one row per epoch, no timing columns), run.json,
/// best.mewt (best test DSC), final.mewt and the final test report.
TrainOutcome run_train(const RunConfig& cfg, const std::filesystem::path& out, bool verbose = false);

/// Evaluates a checkpoint on a dataset split; writes report.json and report.csv.
MetricReport run_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& split,
                      const std::filesystem::path& out);

struct AblationRow {
    std::string name;
    BranchMask mask;
    GeneratorMode generator = GeneratorMode::generated;
};

/// DW only; DW + HW; DW + HW + CW; HW + CW + CH; all four; all four with raw weights.
std::vector<AblationRow> ablation_rows();

struct AblationResult {
    AblationRow row;
    std::vector<double> miou;  ///< final test mIoU per seed
    std::vector<double> dsc;
};

/// Trains every row for `seeds` consecutive seeds starting at cfg.train.seed;
/// writes ablation.csv (aggregated), ablation_runs.csv and ablation.json.
std::vector<AblationResult> run_ablate(const RunConfig& cfg, const std::filesystem::path& out, std::size_t seeds = 3,
                                       bool verbose = false);

struct FreqAnalysis {
    std::vector<RegionCurves> regions;
    Separability separation;  ///< between regions 0 and 1
};

/// Frequency signal-strength analysis of a dataset split. With no explicit patches, windows
/// of uniform label are sampled automatically. Writes curves.csv
/// (region,mode,index,strength) and summary.json.
FreqAnalysis run_analyze_freq(const std::filesystem::path& split, const std::filesystem::path& out,
                              const std::vector<std::pair<std::size_t, PatchRef>>& patches = {});

}  // namespace mew
