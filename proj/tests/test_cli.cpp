#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "doctest.h"
#include "mew/runner.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "mew_cli_test";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text;
}

int run(const std::string& args) {
    const std::string cmd = std::string(MEWUNET_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kTinyConfig = R"({
  "data": {"n_train": 6, "n_test": 3, "image_size": 32},
  "model": {"base_width": 4, "stage_depths": [1, 1], "ffn_ratio": 2},
  "train": {"epochs": 2, "batch_size": 3}
})";

struct Fixture {
    Fixture() {
        fs::remove_all(kRoot);
        write(kRoot / "tiny.json", kTinyConfig);
    }
    ~Fixture() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "gen-data is byte-reproducible") {
    const std::string cfg = "--config " + (kRoot / "tiny.json").string();
    REQUIRE(run("gen-data " + cfg + " --seed 3 --out " + (kRoot / "a").string()) == 0);
    REQUIRE(run("gen-data " + cfg + " --seed 3 --out " + (kRoot / "b").string()) == 0);
    REQUIRE(run("gen-data " + cfg + " --seed 4 --out " + (kRoot / "c").string()) == 0);
    for (const char* f : {"train/data.mewt", "test/data.mewt", "train/index.json", "config.json"})
        CHECK(slurp(kRoot / "a" / f) == slurp(kRoot / "b" / f));
    CHECK(slurp(kRoot / "a/train/data.mewt") != slurp(kRoot / "c/train/data.mewt"));
}

TEST_CASE_FIXTURE(Fixture, "train, eval and reproducible metrics") {
    const std::string cfg = "--config " + (kRoot / "tiny.json").string();
    REQUIRE(run("gen-data " + cfg + " --out " + (kRoot / "ds").string()) == 0);
    const std::string common = "train " + cfg + " --data " + (kRoot / "ds").string() + " --seed 5";
    REQUIRE(run(common + " --out " + (kRoot / "r1").string()) == 0);
    REQUIRE(run(common + " --out " + (kRoot / "r2").string()) == 0);
    const std::string m1 = slurp(kRoot / "r1/metrics.csv");
    CHECK(m1 == slurp(kRoot / "r2/metrics.csv"));
    CHECK(m1.rfind("epoch,lr,loss,test_miou", 0) == 0);
    CHECK(std::count(m1.begin(), m1.end(), '\n') == 3);

    const auto run_json = nlohmann::json::parse(slurp(kRoot / "r1/run.json"));
    CHECK(run_json.at("seed") == 5);
    CHECK(run_json.at("code_version") == mew::code_version());
    CHECK(run_json.at("config").at("model").at("base_width") == 4);
    for (const char* f : {"best.mewt", "final.mewt", "test_report.json", "test_report.csv"})
        CHECK(fs::exists(kRoot / "r1" / f));

    REQUIRE(run("eval --checkpoint " + (kRoot / "r1/final.mewt").string() + " --data " +
                (kRoot / "ds/test").string() + " --out " + (kRoot / "ev").string()) == 0);
    const auto report = nlohmann::json::parse(slurp(kRoot / "ev/report.json"));
    const auto final_report = nlohmann::json::parse(slurp(kRoot / "r1/test_report.json"));
    CHECK(report.at("mean") == final_report.at("mean"));
}

TEST_CASE_FIXTURE(Fixture, "analyze-freq writes curves and a summary") {
    write(kRoot / "big.json", R"({"data": {"n_train": 2, "n_test": 20}})");
    REQUIRE(run("gen-data --config " + (kRoot / "big.json").string() + " --out " + (kRoot / "ds").string()) == 0);
    REQUIRE(run("analyze-freq --data " + (kRoot / "ds/test").string() + " --out " + (kRoot / "af").string()) == 0);
    const std::string csv = slurp(kRoot / "af/curves.csv");
    CHECK(csv.rfind("region,mode,index,strength\n", 0) == 0);
    const auto summary = nlohmann::json::parse(slurp(kRoot / "af/summary.json"));
    CHECK(summary.at("single_axis_intersections").get<int>() > 0);
    CHECK(summary.at("multi_axis_intersections").get<int>() == 0);

    write(kRoot / "patches.json", R"([{"region": 0, "index": 0, "y": 60, "x": 0}])");
    CHECK(run("analyze-freq --data " + (kRoot / "ds/test").string() + " --out " + (kRoot / "af2").string() +
              " --patches " + (kRoot / "patches.json").string()) == 2);
}

TEST_CASE_FIXTURE(Fixture, "exit codes") {
    CHECK(run("") == 2);
    CHECK(run("train --bogus") == 2);
    write(kRoot / "bad.json", R"({"model": {"base_width": 6}})");
    CHECK(run("train --config " + (kRoot / "bad.json").string() + " --out " + (kRoot / "x").string()) == 2);
    write(kRoot / "unknown.json", R"({"modle": {}})");
    CHECK(run("gen-data --config " + (kRoot / "unknown.json").string() + " --out " + (kRoot / "x").string()) == 2);
    CHECK(run("train --mask dw,zz --out " + (kRoot / "x").string()) == 2);
    CHECK(run("train --config " + (kRoot / "tiny.json").string() + " --data " + (kRoot / "nowhere").string() +
              " --out " + (kRoot / "x").string()) == 3);
    CHECK(run("eval --checkpoint " + (kRoot / "none.mewt").string() + " --data " + (kRoot / "nowhere").string() +
              " --out " + (kRoot / "x").string()) == 3);

    write(kRoot / "nan.json", R"({
      "data": {"n_train": 3, "n_test": 1, "image_size": 16},
      "model": {"base_width": 4, "stage_depths": [1, 1], "ffn_ratio": 2},
      "train": {"epochs": 2, "batch_size": 1, "lr_init": 1e300}
    })");
    REQUIRE(run("gen-data --config " + (kRoot / "nan.json").string() + " --out " + (kRoot / "nds").string()) == 0);
    CHECK(run("train --config " + (kRoot / "nan.json").string() + " --data " + (kRoot / "nds").string() +
              " --out " + (kRoot / "nr").string()) == 4);
}

TEST_CASE_FIXTURE(Fixture, "ablation grid writes aggregated and per-run tables") {
    write(kRoot / "abl.json", R"({
      "data": {"n_train": 4, "n_test": 2, "image_size": 16},
      "model": {"base_width": 4, "stage_depths": [1, 1], "ffn_ratio": 2},
      "train": {"epochs": 1, "batch_size": 2}
    })");
    const std::string cfg = "--config " + (kRoot / "abl.json").string();
    REQUIRE(run("gen-data " + cfg + " --out " + (kRoot / "ds").string()) == 0);
    REQUIRE(run("ablate " + cfg + " --data " + (kRoot / "ds").string() + " --seeds 2 --out " +
                (kRoot / "ab").string()) == 0);
    const std::string csv = slurp(kRoot / "ab/ablation.csv");
    CHECK(csv[0] == '#');
    CHECK(csv.find("row,dw,hw,cw,ch,generator,seeds,miou_mean") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2 + 6);
    const std::string runs = slurp(kRoot / "ab/ablation_runs.csv");
    CHECK(std::count(runs.begin(), runs.end(), '\n') == 1 + 12);
    CHECK(mew::ablation_rows().size() == 6);
    CHECK(mew::ablation_rows().back().generator == mew::GeneratorMode::raw);
}

TEST_CASE("config overrides") {
    mew::RunConfig cfg = mew::run_config_from_json(nlohmann::json::parse(kTinyConfig));
    mew::Overrides o;
    o.seed = 9;
    o.mask = mew::BranchMask::parse("dw");
    o.epochs = 7;
    mew::apply_overrides(cfg, o);
    CHECK(cfg.train.seed == 9);
    CHECK(cfg.data.seed == 9);
    CHECK(cfg.model.branch_mask == mew::BranchMask::parse("dw"));
    CHECK(cfg.train.epochs == 7);
    CHECK_THROWS_AS(mew::run_config_from_json({{"data", {{"n_classes", 3}}}}), mew::ConfigError);
    CHECK(mew::code_version().size() == 16);
}
