#include <cmath>

#include "doctest.h"
#include "mew/mew.hpp"
#include "oracles.hpp"

using namespace mew;

namespace {

MewOptions raw_options(BranchMask mask = {}) {
    MewOptions o;
    o.mask = mask;
    o.generator = GeneratorMode::raw;
    return o;
}

void set_raw_weight(WeightGenerator& g, double re, double im) {
    const std::size_t n = g.init.value.size() / 2;
    for (std::size_t i = 0; i < n; ++i) {
        g.init.value[i] = re;
        g.init.value[n + i] = im;
    }
}

// Unit spectral weights, delta depthwise kernel, identity pointwise mix.
void make_identity(MewMixer& m) {
    for (AxisPair p : {kAxesHW, kAxesCW, kAxesCH})
        if ((p == kAxesHW && m.mask.hw) || (p == kAxesCW && m.mask.cw) || (p == kAxesCH && m.mask.ch))
            set_raw_weight(m.weights.get(p), 1.0, 0.0);
    if (m.mask.dw) {
        const std::size_t q = m.channels / 4;
        for (double& v : m.dw.weight.value.data()) v = 0.0;
        for (std::size_t c = 0; c < q; ++c) m.dw.weight.value[c * 9 + 4] = 1.0;
        for (double& v : m.pw.weight.value.data()) v = 0.0;
        for (double& v : m.pw.bias.value.data()) v = 0.0;
        for (std::size_t c = 0; c < q; ++c) m.pw.weight.value[c * q + c] = 1.0;
    }
}

Tensor slice(const Tensor& x, std::size_t part) { return split_channels(x, 4)[part]; }

Tensor shift_w(const Tensor& x, std::size_t k) {
    Tensor y(x.shape());
    for (std::size_t c = 0; c < x.dim(0); ++c)
        for (std::size_t h = 0; h < x.dim(1); ++h)
            for (std::size_t w = 0; w < x.dim(2); ++w) y.at(c, h, (w + k) % x.dim(2)) = x.at(c, h, w);
    return y;
}

// One spectral branch computed with the direct DFT oracle.
Tensor oracle_branch(const Tensor& x, const ComplexTensor& w, AxisPair p) {
    const auto full = oracle::dft2_full(x, p.first, p.second);
    ComplexTensor half = oracle::keep_half(full, x.shape(), p.first, p.second);
    const Shape& hs = half.shape();
    for (std::size_t i = 0; i < hs[0]; ++i)
        for (std::size_t j = 0; j < hs[1]; ++j)
            for (std::size_t k = 0; k < hs[2]; ++k) {
                const std::size_t id[3] = {i, j, k};
                half[(i * hs[1] + j) * hs[2] + k] *= w[id[p.first] * w.dim(1) + id[p.second]];
            }
    return oracle::idft2_half(half, p.first, p.second, x.shape());
}

void zero_grads(ParamList& ps) {
    for (auto& p : ps) p.param->zero_grad();
}

}  // namespace

TEST_CASE("branch mask parsing") {
    CHECK(BranchMask::parse("dw,hw") == BranchMask{true, true, false, false});
    CHECK(BranchMask::parse("none") == BranchMask{false, false, false, false});
    CHECK(BranchMask::parse("") == BranchMask{false, false, false, false});
    CHECK(BranchMask::parse("ch,cw,hw,dw") == BranchMask{});
    CHECK(BranchMask::parse(BranchMask{true, false, true, false}.str()) == BranchMask{true, false, true, false});
    CHECK_THROWS(BranchMask::parse("dw,xy"));
    CHECK(parse_generator_mode("raw") == GeneratorMode::raw);
    CHECK_THROWS(parse_generator_mode("random"));
}

TEST_CASE("identity weights give 2x") {
    const std::size_t C = 8, H = 8, W = 6;
    for (BranchMask mask : {BranchMask{}, BranchMask::parse("hw"), BranchMask::parse("cw"), BranchMask::parse("ch"),
                            BranchMask::parse("dw")}) {
        Rng rng(1);
        MewMixer m(C, raw_options(mask), rng, H, W);
        make_identity(m);
        for (std::uint64_t s = 0; s < 20; ++s) {
            Tensor x = oracle::randu({C, H, W}, 1000 + s);
            CHECK(max_abs_diff(m.forward(x), scale(x, 2.0)) < 1e-10);
        }
    }
}

TEST_CASE("identity mixer commutes with circular shifts along W") {
    Rng rng(2);
    MewMixer m(8, raw_options(), rng, 6, 8);
    make_identity(m);
    Tensor x = oracle::randu({8, 6, 8}, 3);
    CHECK(max_abs_diff(m.forward(shift_w(x, 3)), shift_w(m.forward(x), 3)) < 1e-10);
}

TEST_CASE("spectral branches with learned weights are shift equivariant") {
    Rng rng(4);
    MewOptions o;
    o.mask = BranchMask::parse("hw,cw,ch");
    MewMixer m(8, o, rng);
    Tensor x = oracle::randu({8, 6, 8}, 5);
    CHECK(max_abs_diff(m.forward(shift_w(x, 5)), shift_w(m.forward(x), 5)) < 1e-10);
}

TEST_CASE("mask is pass-through, zero weight is a zero slice") {
    const std::size_t C = 8, H = 6, W = 6;
    Tensor x = oracle::randu({C, H, W}, 7);
    Rng r1(1), r2(1);
    MewMixer masked(C, raw_options(BranchMask::parse("cw,ch,dw")), r1, H, W);
    MewMixer zeroed(C, raw_options(), r2, H, W);
    set_raw_weight(zeroed.weights.hw, 0.0, 0.0);
    set_raw_weight(masked.weights.cw, 0.5, 0.25);
    set_raw_weight(zeroed.weights.cw, 0.5, 0.25);
    const Tensor ym = masked.forward(x), yz = zeroed.forward(x);
    CHECK(slice(ym, 0) == scale(slice(x, 0), 2.0));
    CHECK(max_abs_diff(slice(yz, 0), slice(x, 0)) < 1e-15);
    // The other slices are unaffected by the choice.
    CHECK(max_abs_diff(slice(ym, 1), slice(yz, 1)) < 1e-12);
}

TEST_CASE("mixer matches a straight-line oracle") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        Rng rng(seed);
        const std::size_t C = 8, H = 6, W = 5;
        MewMixer m(C, MewOptions{}, rng);
        // Make the weights far from identity so errors would show.
        for (WeightGenerator* g : {&m.weights.hw, &m.weights.cw, &m.weights.ch})
            g->init.value = oracle::randu(g->init.value.shape(), seed + 40);
        Tensor x = oracle::randu({C, H, W}, seed + 10);
        const Tensor y = m.forward(x);

        const auto parts = split_channels(x, 4);
        std::vector<Tensor> want{
            oracle_branch(parts[0], m.weight(kAxesHW), kAxesHW),
            oracle_branch(parts[1], m.weight(kAxesCW), kAxesCW),
            oracle_branch(parts[2], m.weight(kAxesCH), kAxesCH),
            oracle::conv2d(oracle::depthwise(parts[3], m.dw.weight.value, nullptr), m.pw.weight.value,
                           &m.pw.bias.value, 1, 0)};
        const Tensor expect = add(concat_channels(std::span<const Tensor>(want)), x);
        CHECK(max_abs_diff(y, expect) < 1e-9);
    }
}

TEST_CASE("generated weights have the branch's half-spectrum shape") {
    Rng rng(3);
    MewMixer m(12, MewOptions{}, rng);
    m.prepare(7, 10);
    CHECK(m.weight(kAxesHW).shape() == Shape{7, 6});
    CHECK(m.weight(kAxesCW).shape() == Shape{3, 6});
    CHECK(m.weight(kAxesCH).shape() == Shape{3, 4});
}

TEST_CASE("generator resize keeps corners under align-corners") {
    Rng rng(5);
    WeightGenerator g(kAxesHW, MewOptions{}, rng);
    CHECK(g.init.value.shape() == Shape{2, 8, 5});
    for (double& v : g.irb.project.weight.value.data()) v = 0.0;
    for (double& v : g.irb.project.bias.value.data()) v = 0.0;
    const ComplexTensor w = g.generate(16, 9);
    const Tensor planes = w.to_planes();
    CHECK(max_abs_diff(planes, oracle::bilinear_align_corners(g.init.value, 16, 9)) < 1e-12);
    for (std::size_t p = 0; p < 2; ++p) {
        CHECK(planes.at(p, 0, 0) == g.init.value.at(p, 0, 0));
        CHECK(planes.at(p, 15, 8) == g.init.value.at(p, 7, 4));
        CHECK(planes.at(p, 0, 8) == g.init.value.at(p, 0, 4));
        CHECK(planes.at(p, 15, 0) == g.init.value.at(p, 7, 0));
    }
}

TEST_CASE("real weight kind has no imaginary part") {
    MewOptions o;
    o.weight_kind = WeightKind::real;
    Rng rng(6);
    WeightGenerator g(kAxesCW, o, rng);
    const ComplexTensor w = g.generate(4, 3);
    for (const cplx& v : w.data()) CHECK(v.imag() == 0.0);
}

TEST_CASE("raw mode requires the target shape") {
    Rng rng(7);
    CHECK_THROWS_AS(MewMixer(8, raw_options(), rng), ShapeError);
    MewMixer m(8, raw_options(), rng, 6, 6);
    CHECK_THROWS_AS(m.prepare(8, 8), ShapeError);
    CHECK_THROWS_AS(MewMixer(6, MewOptions{}, rng), ShapeError);
}

TEST_CASE("broadcast and reduce are adjoint") {
    for (AxisPair p : {kAxesHW, kAxesCW, kAxesCH}) {
        const Shape s{3, 4, 5};
        ComplexTensor w({s[p.first], s[p.second]}), g(s);
        Rng rng(9);
        for (auto& v : w.data()) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        for (auto& v : g.data()) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const ComplexTensor bw = broadcast_weight(w, p, s), rg = reduce_weight_grad(g, p);
        double lhs = 0, rhs = 0;
        for (std::size_t i = 0; i < g.size(); ++i) lhs += (std::conj(bw[i]) * g[i]).real();
        for (std::size_t i = 0; i < w.size(); ++i) rhs += (std::conj(w[i]) * rg[i]).real();
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
    }
}

TEST_CASE("mixer and block gradients agree with finite differences") {
    const std::size_t C = 8, H = 6, W = 5;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (GeneratorMode mode : {GeneratorMode::generated, GeneratorMode::raw}) {
            MewOptions o;
            o.generator = mode;
            Rng rng(seed);
            MewBlock block(C, 2, o, rng, H, W);
            for (WeightGenerator* g : {&block.mixer.weights.hw, &block.mixer.weights.cw, &block.mixer.weights.ch})
                g->init.value = oracle::randu(g->init.value.shape(), seed + 3);
            if (mode == GeneratorMode::generated)
                for (WeightGenerator* g : {&block.mixer.weights.hw, &block.mixer.weights.cw, &block.mixer.weights.ch})
                    g->irb.project.weight.value = oracle::randu(g->irb.project.weight.value.shape(), seed + 4, -0.5, 0.5);
            block.norm1.gamma.value = oracle::randu({C}, seed + 5, 0.5, 1.5);
            Tensor x = oracle::randu({C, H, W}, seed + 6);
            Tensor r = oracle::randu({C, H, W}, seed + 7);

            ParamList ps;
            block.collect(ps, "b");
            zero_grads(ps);
            block.prepare(H, W);
            block.forward(x);
            const Tensor dx = block.backward(r);
            block.finish_backward();

            auto f = [&] {
                block.prepare(H, W);
                return oracle::project(block.forward(x), r);
            };
            CHECK(oracle::rel_error(dx, oracle::numeric_grad(x, f)) < 1e-5);
            for (auto& np : ps) {
                const Tensor analytic = np.param->grad;
                const double err = oracle::rel_error(analytic, oracle::numeric_grad(np.param->value, f));
                CHECK_MESSAGE(err < 1e-5, np.name << " seed " << seed);
                CHECK_MESSAGE(max_abs(analytic) > 0.0, np.name << " has no gradient");
            }
        }
    }
}

TEST_CASE("disabled branches own no parameters") {
    Rng rng(1);
    MewOptions o;
    o.mask = BranchMask::parse("dw,hw");
    MewMixer m(8, o, rng);
    ParamList ps;
    m.collect(ps, "m");
    for (const auto& p : ps) {
        CHECK(p.name.find("w_cw") == std::string::npos);
        CHECK(p.name.find("w_ch") == std::string::npos);
    }
    CHECK(ps.size() == 1 + 6 + 1 + 2);  // init, irb (3 convs x 2), dw, pw
}
