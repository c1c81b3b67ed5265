// Acceptance suite: one pass/fail line per criterion. Tolerances and budgets
// are fixed below; nothing is read from the environment.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "mew/runner.hpp"
#include "oracles.hpp"

using namespace mew;
namespace fs = std::filesystem;

namespace {

constexpr double kSpectralTol = 1e-10;
constexpr double kParsevalRelTol = 1e-9;
constexpr double kIdentityTol = 1e-10;
constexpr std::size_t kIdentityInputs = 100;
constexpr double kGradRelTol = 1e-5;
constexpr std::uint64_t kGradSeeds = 5;
constexpr std::size_t kOverfitSteps = 200;
constexpr double kOverfitLr = 5e-3;
constexpr double kOverfitLoss = 0.01;
constexpr double kTaskMiou = 0.85;
constexpr std::size_t kTaskEpochs = 60;
constexpr std::size_t kAblationEpochs = 20;
constexpr std::size_t kAblationSeeds = 3;
constexpr std::size_t kMetricPairs = 500;
constexpr std::size_t kDeterminismEpochs = 2;

// Wall-clock budgets in seconds.
constexpr double kBudget[10] = {0, 10, 5, 300, 120, 900, 5400, 30, 30, 600};

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// 1. Spectral correctness

Outcome spectral() {
    double worst_dft = 0, worst_rt = 0, worst_lin = 0, worst_parseval = 0;
    const AxisPair pairs[] = {kAxesHW, kAxesCW, kAxesCH};
    std::uint64_t seed = 1;
    for (std::size_t c = 1; c <= 4; ++c)
        for (std::size_t h = 1; h <= 8; ++h)
            for (std::size_t w = 1; w <= 8; ++w) {
                const Shape s{c, h, w};
                const Tensor x = oracle::randu(s, seed++), y = oracle::randu(s, seed++);
                for (AxisPair p : pairs) {
                    const ComplexTensor X = rdft2(x, p);
                    const ComplexTensor want =
                        oracle::keep_half(oracle::dft2_full(x, p.first, p.second), s, p.first, p.second);
                    worst_dft = std::max(worst_dft, max_abs_diff(X, want));
                    worst_rt = std::max(worst_rt, max_abs_diff(irdft2(X, p, s), x));

                    const SpectrumLayout l = SpectrumLayout::of(s, p);
                    const Shape& hs = X.shape();
                    double energy = 0, spec = 0;
                    for (double v : x.data()) energy += v * v;
                    for (std::size_t i = 0; i < hs[0]; ++i)
                        for (std::size_t j = 0; j < hs[1]; ++j)
                            for (std::size_t k = 0; k < hs[2]; ++k) {
                                const std::size_t id[3] = {i, j, k};
                                spec += l.column_weight(id[p.second]) * std::norm(X[(i * hs[1] + j) * hs[2] + k]);
                            }
                    spec /= double(l.n1 * l.n2);
                    worst_parseval = std::max(worst_parseval, std::abs(spec - energy) / energy);

                    const ComplexTensor L = rdft2(add(scale(x, 0.7), scale(y, -1.3)), p), Y = rdft2(y, p);
                    for (std::size_t i = 0; i < L.size(); ++i)
                        worst_lin = std::max(worst_lin, std::abs(L[i] - (0.7 * X[i] - 1.3 * Y[i])));
                }
            }
    char buf[256];
    std::snprintf(buf, sizeof buf, "dft %.2e, round-trip %.2e, linearity %.2e, Parseval rel %.2e", worst_dft,
                  worst_rt, worst_lin, worst_parseval);
    return {worst_dft < kSpectralTol && worst_rt < kSpectralTol && worst_lin < kSpectralTol &&
                worst_parseval < kParsevalRelTol,
            buf};
}

// ---------------------------------------------------------------------------
// 2. Identity invariant

void make_identity(MewMixer& m) {
    for (WeightGenerator* g : {&m.weights.hw, &m.weights.cw, &m.weights.ch}) {
        if (g->init.value.empty()) continue;
        const std::size_t n = g->init.value.size() / 2;
        for (std::size_t i = 0; i < n; ++i) {
            g->init.value[i] = 1.0;
            g->init.value[n + i] = 0.0;
        }
    }
    if (m.mask.dw) {
        const std::size_t q = m.channels / 4;
        for (double& v : m.dw.weight.value.data()) v = 0.0;
        for (double& v : m.pw.weight.value.data()) v = 0.0;
        for (double& v : m.pw.bias.value.data()) v = 0.0;
        for (std::size_t c = 0; c < q; ++c) {
            m.dw.weight.value[c * 9 + 4] = 1.0;
            m.pw.weight.value[c * q + c] = 1.0;
        }
    }
}

Outcome identity() {
    MewOptions opt;
    opt.generator = GeneratorMode::raw;
    double worst = 0;
    const std::size_t C = 8, H = 16, W = 12;
    for (const char* mask : {"dw,hw,cw,ch", "hw", "cw", "ch", "dw"}) {
        opt.mask = BranchMask::parse(mask);
        Rng rng(1);
        MewMixer m(C, opt, rng, H, W);
        make_identity(m);
        for (std::size_t i = 0; i < kIdentityInputs; ++i) {
            const Tensor x = oracle::randu({C, H, W}, 5000 + i, -10, 10);
            worst = std::max(worst, max_abs_diff(m.forward(x), scale(x, 2.0)));
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "max |mew(x) - 2x| = %.2e over %zu inputs x 5 masks", worst, kIdentityInputs);
    return {worst < kIdentityTol, buf};
}

// ---------------------------------------------------------------------------
// 3. Gradient suite

struct Probe {
    Probe(std::function<Tensor()> f, std::function<Tensor(const Tensor&)> b,
          std::function<void()> done = [] {})
        : forward(std::move(f)), backward(std::move(b)), finish(std::move(done)) {}

    std::function<Tensor()> forward;
    std::function<Tensor(const Tensor&)> backward;
    std::function<void()> finish;
    Tensor* input = nullptr;
    ParamList params;
};

double check_probe(Probe& p, std::uint64_t seed) {
    for (auto& np : p.params) np.param->zero_grad();
    const Tensor y = p.forward();
    const Tensor r = oracle::randu(y.shape(), seed * 7919 + 13);
    const Tensor dx = p.backward(r);
    p.finish();
    auto f = [&] { return oracle::project(p.forward(), r); };
    double worst = 0;
    if (p.input) worst = oracle::rel_error(dx, oracle::numeric_grad(*p.input, f));
    for (auto& np : p.params) {
        const Tensor g = np.param->grad;
        worst = std::max(worst, oracle::rel_error(g, oracle::numeric_grad(np.param->value, f)));
        if (max_abs(g) == 0.0) worst = std::max(worst, 1.0);  // dead parameter
    }
    return worst;
}

void lift(ParamList& ps, std::uint64_t seed) {
    for (auto& p : ps)
        if (p.name.find(".init") != std::string::npos || p.name.find("irb.project.weight") != std::string::npos)
            p.param->value = oracle::randu(p.param->value.shape(), seed + p.name.size(), -0.8, 0.8);
}

Outcome gradients() {
    std::map<std::string, double> worst;
    auto record = [&](const std::string& name, double e) { worst[name] = std::max(worst[name], e); };
    for (std::uint64_t seed = 1; seed <= kGradSeeds; ++seed) {
        Rng rng(seed);
        {
            Conv2d l(3, 4, 3, 2, 1, rng, 0.5);
            Tensor x = oracle::randu({3, 7, 6}, seed);
            Probe p{[&] { return l.forward(x); }, [&](const Tensor& d) { return l.backward(d); }};
            p.input = &x;
            l.collect(p.params, "conv");
            record("conv2d", check_probe(p, seed));
        }
        {
            DepthwiseConv2d l(4, 3, rng, true, 0.5);
            Tensor x = oracle::randu({4, 6, 5}, seed);
            Probe p{[&] { return l.forward(x); }, [&](const Tensor& d) { return l.backward(d); }};
            p.input = &x;
            l.collect(p.params, "dw");
            record("depthwise", check_probe(p, seed));
        }
        {
            GroupNorm l(8, 4);
            l.gamma.value = oracle::randu({8}, seed + 1);
            l.beta.value = oracle::randu({8}, seed + 2);
            Tensor x = oracle::randu({8, 3, 4}, seed);
            Probe p{[&] { return l.forward(x); }, [&](const Tensor& d) { return l.backward(d); }};
            p.input = &x;
            l.collect(p.params, "gn");
            record("group_norm", check_probe(p, seed));
        }
        {
            Ffn l(4, 4, Activation::gelu, rng);
            Tensor x = oracle::randu({4, 3, 3}, seed);
            Probe p{[&] { return l.forward(x); }, [&](const Tensor& d) { return l.backward(d); }};
            p.input = &x;
            l.collect(p.params, "ffn");
            record("ffn", check_probe(p, seed));
        }
        for (bool ac : {true, false}) {
            Tensor x = oracle::randu({2, 4, 3}, seed);
            Probe p{[&] { return bilinear_interp(x, 8, 7, ac); },
                    [&](const Tensor& d) { return bilinear_interp_backward(d, x.shape(), ac); }};
            p.input = &x;
            record("bilinear", check_probe(p, seed));
        }
        {
            InvertedResidual l(2, 4, Activation::gelu, rng);
            l.project.weight.value = oracle::randu(l.project.weight.value.shape(), seed + 3);
            Tensor x = oracle::randu({2, 5, 4}, seed);
            Probe p{[&] { return l.forward(x); }, [&](const Tensor& d) { return l.backward(d); }};
            p.input = &x;
            l.collect(p.params, "irb");
            record("irb", check_probe(p, seed));
        }
        for (AxisPair ax : {kAxesHW, kAxesCW, kAxesCH}) {
            const Shape s{3, 5, 6};
            Tensor x = oracle::randu(s, seed);
            Probe fwd{[&] { return rdft2(x, ax).to_planes(); },
                      [&](const Tensor& d) { return rdft2_backward(ComplexTensor::from_planes(d), ax, s); }};
            fwd.input = &x;
            record("rdft2", check_probe(fwd, seed));

            Tensor planes = rdft2(oracle::randu(s, seed + 9), ax).to_planes();
            Probe inv{[&] { return irdft2(ComplexTensor::from_planes(planes), ax, s); },
                      [&](const Tensor& d) { return irdft2_backward(d, ax).to_planes(); }};
            inv.input = &planes;
            record("irdft2", check_probe(inv, seed));

            Tensor wp = oracle::randu(planes.shape(), seed + 11);
            Probe mul{[&] {
                          return spectral_mul(ComplexTensor::from_planes(planes), ComplexTensor::from_planes(wp))
                              .to_planes();
                      },
                      [&](const Tensor& d) {
                          const auto g = spectral_mul_backward(ComplexTensor::from_planes(d),
                                                               ComplexTensor::from_planes(planes),
                                                               ComplexTensor::from_planes(wp));
                          return g.da.to_planes();
                      }};
            mul.input = &planes;
            record("spectral_mul", check_probe(mul, seed));
        }
        for (GeneratorMode mode : {GeneratorMode::generated, GeneratorMode::raw}) {
            MewOptions o;
            o.generator = mode;
            MewMixer m(8, o, rng, 6, 5);
            Tensor x = oracle::randu({8, 6, 5}, seed);
            Probe p{[&] {
                        m.prepare(6, 5);
                        return m.forward(x);
                    },
                    [&](const Tensor& d) { return m.backward(d); }, [&] { m.finish_backward(); }};
            p.input = &x;
            m.collect(p.params, "mew");
            lift(p.params, seed);
            record("mew_mixer", check_probe(p, seed));

            MewBlock b(8, 2, o, rng, 6, 5);
            b.norm1.gamma.value = oracle::randu({8}, seed + 5, 0.5, 1.5);
            Probe pb{[&] {
                         b.prepare(6, 5);
                         return b.forward(x);
                     },
                     [&](const Tensor& d) { return b.backward(d); }, [&] { b.finish_backward(); }};
            pb.input = &x;
            b.collect(pb.params, "block");
            lift(pb.params, seed);
            record("mew_block", check_probe(pb, seed));

            ModelConfig c;
            c.in_channels = 2;
            c.base_width = 4;
            c.stage_depths = {1, 1};
            c.ffn_ratio = 2;
            c.image_size = 8;
            c.generator_mode = mode;
            Model model(c, rng);
            Tensor xm = oracle::randu({2, 8, 8}, seed + 6);
            Probe pm{[&] {
                         model.prepare(8, 8);
                         return model.forward_prepared(xm);
                     },
                     [&](const Tensor& d) { return model.backward(d); }, [&] { model.finish_backward(); }};
            pm.input = &xm;
            pm.params = model.params();
            lift(pm.params, seed);
            record("model", check_probe(pm, seed));
        }
        {
            Rng mr(seed);
            Tensor mask({5, 6});
            for (double& v : mask.data()) v = double(mr.uniform_int(2));
            Tensor z = oracle::randu({2, 5, 6}, seed, -3, 3);
            auto f = [&] { return segmentation_loss(z, mask).value; };
            record("loss", oracle::rel_error(segmentation_loss(z, mask).grad, oracle::numeric_grad(z, f)));
        }
    }
    double overall = 0;
    std::string name;
    for (const auto& [k, v] : worst)
        if (v >= overall) {
            overall = v;
            name = k;
        }
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu ops x %llu seeds, worst rel err %.2e (%s)", worst.size(),
                  static_cast<unsigned long long>(kGradSeeds), overall, name.c_str());
    return {overall < kGradRelTol, buf};
}

// ---------------------------------------------------------------------------
// 4. Overfit a single sample

Outcome overfit() {
    const Dataset d = generate_dataset(1, 64, 2, TextureSpec::standard(2), 0, 3);
    Rng rng = Rng(0).fork(0x30de1);
    Model model(ModelConfig{}, rng);
    TrainConfig cfg;
    cfg.optimizer.weight_decay = 0.0;
    Trainer t(model, cfg);
    const std::vector<const SegmentationSample*> batch{&d[0]};
    double loss = 0;
    for (std::size_t i = 0; i < kOverfitSteps; ++i) loss = t.train_step(batch, kOverfitLr);
    model.prepare(64, 64);
    const double final_loss = segmentation_loss(model.forward_prepared(d[0].image), d[0].mask).value;
    char buf[160];
    std::snprintf(buf, sizeof buf, "BceDice after %zu steps: %.5f (last step %.5f)", kOverfitSteps, final_loss, loss);
    return {final_loss < kOverfitLoss, buf};
}

// ---------------------------------------------------------------------------
// 5, 6, 8, 9 use the default dataset on disk.

fs::path ensure_dataset(const fs::path& work) {
    const fs::path root = work / "dataset";
    if (!fs::exists(root / "test" / "index.json")) run_gen_data(RunConfig{}, root);
    return root;
}

Outcome task(const fs::path& work) {
    RunConfig cfg;
    cfg.dataset = ensure_dataset(work).string();
    cfg.train.epochs = kTaskEpochs;
    const TrainOutcome o = run_train(cfg, work / "task");
    const double miou = o.final_report.miou();
    char buf[160];
    std::snprintf(buf, sizeof buf, "final test mIoU %.4f after %zu epochs (DSC %.4f)", miou, kTaskEpochs,
                  o.final_report.mean.dsc);
    return {miou >= kTaskMiou, buf};
}

Outcome ablation(const fs::path& work) {
    RunConfig cfg;
    cfg.dataset = ensure_dataset(work).string();
    cfg.train.epochs = kAblationEpochs;
    const auto results = run_ablate(cfg, work / "ablation", kAblationSeeds);
    std::map<std::string, const AblationResult*> by;
    for (const auto& r : results) by[r.row.name] = &r;
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / double(v.size());
    };
    const AblationResult& dw = *by.at("dw");
    const AblationResult& dw_hw = *by.at("dw+hw");
    const AblationResult& full = *by.at("full");
    const AblationResult& raw = *by.at("full+raw");
    std::size_t gen_wins = 0;
    for (std::size_t k = 0; k < kAblationSeeds; ++k) gen_wins += full.miou[k] > raw.miou[k] ? 1 : 0;
    const double m_dw = mean(dw.miou), m_hw = mean(dw_hw.miou), m_full = mean(full.miou);
    char buf[256];
    std::snprintf(buf, sizeof buf, "mean mIoU full %.4f, dw+hw %.4f, dw %.4f; generated > raw on %zu/%zu seeds",
                  m_full, m_hw, m_dw, gen_wins, kAblationSeeds);
    return {m_full >= m_hw && m_hw >= m_dw && gen_wins * 3 >= 2 * kAblationSeeds, buf};
}

// ---------------------------------------------------------------------------
// 7. Metrics oracle

Outcome metrics() {
    Rng rng(77);
    std::size_t mismatches = 0, checks = 0;
    for (std::size_t t = 0; t < kMetricPairs; ++t) {
        const std::size_t h = 1 + rng.uniform_int(12), w = 1 + rng.uniform_int(12), K = 2 + rng.uniform_int(2);
        Tensor pred({h, w}), gt({h, w});
        const double agree = rng.uniform();
        for (std::size_t i = 0; i < h * w; ++i) {
            gt[i] = double(rng.uniform_int(K));
            pred[i] = rng.bernoulli(agree) ? gt[i] : double(rng.uniform_int(K));
        }
        MetricAccumulator acc(K);
        acc.add(pred, gt);
        const MetricReport rep = acc.report();
        double miou = 0, mdsc = 0;
        for (std::size_t c = 0; c < K; ++c) {
            std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
            Tensor pb({h, w}), gb({h, w});
            for (std::size_t i = 0; i < h * w; ++i) {
                const bool p = pred[i] == double(c), g = gt[i] == double(c);
                tp += p && g;
                fp += p && !g;
                fn += !p && g;
                tn += !p && !g;
                pb[i] = p;
                gb[i] = g;
            }
            const double iou = tp + fp + fn ? double(tp) / double(tp + fp + fn) : 1.0;
            const double dsc = tp + fp + fn ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 1.0;
            const double a = double(tp + tn) / double(h * w);
            const double sen = tp + fn ? double(tp) / double(tp + fn) : 1.0;
            const double spe = tn + fp ? double(tn) / double(tn + fp) : 1.0;
            const Rates& r = rep.classes[c].rates;
            const double hd_want = oracle::hd95(pb, gb), hd_got = hd95(pb, gb);
            const bool hd_ok = std::isinf(hd_want) ? std::isinf(hd_got) : hd_got == hd_want;
            mismatches += !(r.iou == iou && r.dsc == dsc && r.acc == a && r.sen == sen && r.spe == spe && hd_ok);
            ++checks;
            miou += iou;
            mdsc += dsc;
        }
        mismatches += rep.mean.iou != miou / double(K) || rep.mean.dsc != mdsc / double(K);
    }
    Tensor a = Tensor::zeros({5, 5}), b = Tensor::zeros({5, 5});
    a[0] = 1;
    b[3 * 5 + 4] = 1;
    const double hand = hd95(a, b);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu mismatches over %zu pairs (%zu class checks); hd95((0,0),(3,4)) = %.17g",
                  mismatches, kMetricPairs, checks, hand);
    return {mismatches == 0 && hand == 5.0, buf};
}

// ---------------------------------------------------------------------------

Outcome frequency(const fs::path& work) {
    const fs::path root = ensure_dataset(work);
    const FreqAnalysis fa = run_analyze_freq(root / "test", work / "freq");
    char buf[160];
    std::snprintf(buf, sizeof buf, "single-axis intersections %zu, multi-axis intersections %zu (%zu/%zu patches)",
                  fa.separation.single_crossings, fa.separation.multi_crossings, fa.regions.at(0).patches,
                  fa.regions.at(1).patches);
    return {fa.separation.single_crossings > 0 && fa.separation.multi_crossings == 0, buf};
}

Outcome determinism(const fs::path& work) {
    RunConfig cfg;
    cfg.dataset = ensure_dataset(work).string();
    cfg.train.epochs = kDeterminismEpochs;
    cfg.train.seed = 7;
    run_train(cfg, work / "det_a");
    run_train(cfg, work / "det_b");
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const std::string a = slurp(work / "det_a" / "metrics.csv"), b = slurp(work / "det_b" / "metrics.csv");
    char buf[160];
    std::snprintf(buf, sizeof buf, "metrics.csv %s across two %zu-epoch runs (%zu bytes)",
                  a == b ? "byte-identical" : "DIFFERS", kDeterminismEpochs, a.size());
    return {!a.empty() && a == b, buf};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    std::string work = (fs::temp_directory_path() / "mew_acceptance").string();
    app.add_option("--only", only, "criteria to run (default: all)");
    app.add_option("--work", work, "scratch directory for datasets and runs (cleared first)");
    CLI11_PARSE(app, argc, argv);
    std::set<int> selected(only.begin(), only.end());
    if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

    const fs::path wd(work);
    fs::remove_all(wd);
    fs::create_directories(wd);
    const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
        {1, {"spectral correctness", spectral}},
        {2, {"identity invariant", identity}},
        {3, {"gradient suite", gradients}},
        {4, {"overfit sanity", overfit}},
        {5, {"synthetic task", [&] { return task(wd); }}},
        {6, {"ablation trend", [&] { return ablation(wd); }}},
        {7, {"metrics oracle", metrics}},
        {8, {"frequency separability", [&] { return frequency(wd); }}},
        {9, {"determinism", [&] { return determinism(wd); }}},
    };

    std::size_t failed = 0;
    for (int id : selected) {
        const auto it = criteria.find(id);
        if (it == criteria.end()) {
            std::fprintf(stderr, "unknown criterion %d\n", id);
            return 2;
        }
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = it->second.second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        const bool in_time = secs < kBudget[id];
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("criterion %d %-24s %s  %s; %.1f s of %.0f s budget\n", id, it->second.first,
                    pass ? "PASS" : "FAIL", o.detail.c_str(), secs, kBudget[id]);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
