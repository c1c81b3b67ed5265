#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "mew/model.hpp"
#include "oracles.hpp"

using namespace mew;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.in_channels = 2;
    c.base_width = 4;
    c.stage_depths = {1, 1};
    c.ffn_ratio = 2;
    c.image_size = 8;
    return c;
}

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("parameter count matches the per-layer tally") {
    ModelConfig c;
    c.in_channels = 1;
    Rng rng(0);
    Model m(c, rng);
    CHECK(m.param_count() == oracle::model_params(1, 2, 8, {1, 1, 1}));

    ModelConfig c2;
    c2.stage_depths = {2, 1, 1, 1};
    c2.n_classes = 3;
    Rng rng2(0);
    Model m2(c2, rng2);
    CHECK(m2.param_count() == oracle::model_params(3, 3, 8, {2, 1, 1, 1}));
}

TEST_CASE("config validation") {
    ModelConfig c;
    c.base_width = 6;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.stage_depths = {1};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.n_classes = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.generator_mode = GeneratorMode::raw;
    c.image_size = 30;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_NOTHROW(ModelConfig{}.validate());
}

TEST_CASE("config JSON round-trip is strict") {
    ModelConfig c;
    c.branch_mask = BranchMask::parse("dw,cw");
    c.generator_mode = GeneratorMode::raw;
    c.stage_depths = {2, 1, 3};
    const nlohmann::json j = to_json(c);
    CHECK(to_json(model_config_from_json(j)) == j);
    nlohmann::json bad = j;
    bad["widht"] = 8;
    CHECK_THROWS_AS(model_config_from_json(bad), ConfigError);
    CHECK(model_config_from_json(nlohmann::json::object()).base_width == 8);
}

TEST_CASE("initialization is a pure function of the seed") {
    Rng a(5), b(5), c(6);
    Model ma(tiny_config(), a), mb(tiny_config(), b), mc(tiny_config(), c);
    Tensor x = oracle::randu({2, 8, 8}, 1);
    CHECK(ma.forward(x) == mb.forward(x));
    CHECK(ma.forward(x) != mc.forward(x));
}

TEST_CASE("batch forward equals per-item forwards") {
    Rng rng(1);
    Model m(tiny_config(), rng);
    std::vector<Tensor> items;
    for (std::uint64_t s = 0; s < 3; ++s) items.push_back(oracle::randu({2, 8, 8}, 10 + s));
    const Tensor batch = m.forward(stack(items));
    REQUIRE(batch.shape() == Shape{3, 2, 8, 8});
    for (std::size_t i = 0; i < 3; ++i) CHECK(unstack_item(batch, i) == m.forward(items[i]));
}

TEST_CASE("logits stay finite on random probes") {
    ModelConfig c;
    Rng rng(2);
    Model m(c, rng);
    Rng probe(3);
    std::size_t finite = 0;
    for (int i = 0; i < 1000; ++i) {
        const double spread = std::pow(10.0, probe.uniform(-2, 2));
        Tensor x = rand_uniform({3, 16, 16}, probe, -spread, spread);
        finite += all_finite(m.forward(x)) ? 1 : 0;
    }
    CHECK(finite == 1000);
}

TEST_CASE("input shape checks") {
    Rng rng(1);
    Model m(tiny_config(), rng);
    CHECK_THROWS_AS(m.forward(Tensor({3, 8, 8})), ShapeError);
    CHECK_THROWS_AS(m.forward(Tensor({2, 7, 8})), ShapeError);
}

TEST_CASE("checkpoint round-trip reproduces outputs bit for bit") {
    ModelConfig c;
    c.branch_mask = BranchMask::parse("dw,hw,ch");
    Rng rng(9);
    Model m(c, rng);
    const auto path = temp_file("mew_model_test.mewt");
    save_checkpoint(path, m, {{"note", "x"}});
    Model back = load_model(path);
    Tensor x = oracle::randu({3, 32, 32}, 4);
    CHECK(back.forward(x) == m.forward(x));
    CHECK(to_json(back.config()) == to_json(c));
    std::filesystem::remove(path);
}

TEST_CASE("mismatched checkpoints are reported in full and change nothing") {
    ModelConfig c;
    Rng rng(9);
    Model m(c, rng);
    const auto path = temp_file("mew_model_mismatch.mewt");
    save_checkpoint(path, m);
    Container ck = read_container(path);
    std::filesystem::remove(path);

    ModelConfig other = c;
    other.branch_mask = BranchMask::parse("dw,hw");
    other.n_classes = 3;
    Rng rng2(1);
    Model target(other, rng2);
    Tensor x = oracle::randu({3, 16, 16}, 2);
    const Tensor before = target.forward(x);
    std::string msg;
    try {
        load_parameters(target, ck);
    } catch (const CheckpointError& e) {
        msg = e.what();
    }
    CHECK(msg.find("unexpected") != std::string::npos);
    CHECK(msg.find("w_cw") != std::string::npos);
    CHECK(msg.find("head") != std::string::npos);
    CHECK(target.forward(x) == before);

    Container broken = ck;
    broken.records.pop_back();
    Rng rng3(9);
    Model same(c, rng3);
    CHECK_THROWS_AS(load_parameters(same, broken), CheckpointError);
}

TEST_CASE("full model gradients agree with finite differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (GeneratorMode mode : {GeneratorMode::generated, GeneratorMode::raw}) {
            ModelConfig c = tiny_config();
            c.generator_mode = mode;
            Rng rng(seed);
            Model m(c, rng);
            ParamList ps = m.params();
            // Lift the spectral weights and generator projections off their
            // near-identity init so every path carries signal.
            for (auto& p : ps)
                if (p.name.find(".init") != std::string::npos || p.name.find("irb.project.weight") != std::string::npos)
                    p.param->value = oracle::randu(p.param->value.shape(), seed + p.name.size(), -0.8, 0.8);
            Tensor x = oracle::randu({2, 8, 8}, seed + 100);
            Tensor r = oracle::randu({2, 8, 8}, seed + 200);

            m.zero_grad();
            m.prepare(8, 8);
            m.forward_prepared(x);
            const Tensor dx = m.backward(r);
            m.finish_backward();
            auto f = [&] {
                m.prepare(8, 8);
                return oracle::project(m.forward_prepared(x), r);
            };
            CHECK(oracle::rel_error(dx, oracle::numeric_grad(x, f)) < 1e-5);
            for (auto& np : ps) {
                const Tensor analytic = np.param->grad;
                const double err = oracle::rel_error(analytic, oracle::numeric_grad(np.param->value, f));
                CHECK_MESSAGE(err < 1e-5, np.name << " seed " << seed);
                CHECK_MESSAGE(max_abs(analytic) > 0.0, np.name << " is dead");
            }
        }
    }
}

TEST_CASE("parameter names are stable") {
    Rng rng(0);
    Model m(ModelConfig{}, rng);
    std::vector<std::string> names;
    for (const auto& p : m.params()) names.push_back(p.name);
    auto has = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
    CHECK(has("stem.weight"));
    CHECK(has("enc0.block0.mew.w_hw.init"));
    CHECK(has("enc1.down.bias"));
    CHECK(has("mid.block0.ffn.fc2.weight"));
    CHECK(has("dec0.proj.weight"));
    CHECK(has("head.bias"));
    std::sort(names.begin(), names.end());
    CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}
