#include "mew/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "mew/container.hpp"

namespace mew {

TextureSpec TextureSpec::standard(std::size_t n_classes, double a, double noise) {
    TextureSpec s;
    s.regions.push_back({{{'h', 0.2, a, 2 * std::numbers::pi, {}}}, noise});
    s.regions.push_back({{{'w', 0.2, 1.5 * a, 2 * std::numbers::pi, {}}, {'h', 0.3, 0.9 * a, 2 * std::numbers::pi, {}}},
                         1.5 * noise});
    for (std::size_t k = 2; k < n_classes; ++k) {
        const double f = 0.1 + 0.05 * static_cast<double>(k - 2);
        s.regions.push_back({{{'w', f, 1.2 * a, 2 * std::numbers::pi, {}}, {'h', f, 1.2 * a, 2 * std::numbers::pi, {}}},
                             noise});
    }
    return s;
}

void TextureSpec::validate(std::size_t n_classes, std::size_t in_channels) const {
    if (regions.size() != n_classes)
        throw DataError("texture spec has " + std::to_string(regions.size()) + " regions for " +
                        std::to_string(n_classes) + " classes");
    for (const RegionTexture& r : regions) {
        if (!(r.noise >= 0)) throw DataError("texture noise must be >= 0");
        for (const TextureComponent& c : r.components) {
            if (c.axis != 'h' && c.axis != 'w') throw DataError("texture component axis must be 'h' or 'w'");
            if (!(c.frequency >= 0 && c.frequency <= 0.5)) throw DataError("texture frequency must lie in [0, 0.5]");
            if (!c.gains.empty() && c.gains.size() != in_channels)
                throw DataError("texture gains need one entry per input channel");
        }
    }
}

void DataConfig::validate() const {
    if (image_size == 0) throw ConfigError("data.image_size must be >= 1");
    if (in_channels == 0) throw ConfigError("data.in_channels must be >= 1");
    if (n_classes < 2) throw ConfigError("data.n_classes must be >= 2");
    if (!(amplitude > 0) || !(noise >= 0)) throw ConfigError("data.amplitude must be > 0 and data.noise >= 0");
    if (layout.min_shapes == 0 || layout.max_shapes < layout.min_shapes)
        throw ConfigError("data.layout shape counts must satisfy 1 <= min_shapes <= max_shapes");
    if (!(layout.min_radius > 0) || layout.max_radius < layout.min_radius)
        throw ConfigError("data.layout radii must satisfy 0 < min_radius <= max_radius");
}

nlohmann::json to_json(const DataConfig& c) {
    return {{"n_train", c.n_train},
            {"n_test", c.n_test},
            {"image_size", c.image_size},
            {"in_channels", c.in_channels},
            {"n_classes", c.n_classes},
            {"seed", c.seed},
            {"amplitude", c.amplitude},
            {"noise", c.noise},
            {"layout",
             {{"min_shapes", c.layout.min_shapes},
              {"max_shapes", c.layout.max_shapes},
              {"min_radius", c.layout.min_radius},
              {"max_radius", c.layout.max_radius}}}};
}

DataConfig data_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("data config must be a JSON object");
    DataConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "n_train") c.n_train = v.get<std::size_t>();
            else if (key == "n_test") c.n_test = v.get<std::size_t>();
            else if (key == "image_size") c.image_size = v.get<std::size_t>();
            else if (key == "in_channels") c.in_channels = v.get<std::size_t>();
            else if (key == "n_classes") c.n_classes = v.get<std::size_t>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "amplitude") c.amplitude = v.get<double>();
            else if (key == "noise") c.noise = v.get<double>();
            else if (key == "layout") {
                for (const auto& [lk, lv] : v.items()) {
                    if (lk == "min_shapes") c.layout.min_shapes = lv.get<std::size_t>();
                    else if (lk == "max_shapes") c.layout.max_shapes = lv.get<std::size_t>();
                    else if (lk == "min_radius") c.layout.min_radius = lv.get<double>();
                    else if (lk == "max_radius") c.layout.max_radius = lv.get<double>();
                    else throw ConfigError("unknown data.layout key '" + lk + "'");
                }
            } else throw ConfigError("unknown data config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("data config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

// Adds one region's texture (without the base level) to `img` [C,S,S].
void render_texture(Tensor& img, const RegionTexture& r, Rng& rng) {
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    for (const TextureComponent& comp : r.components) {
        const double phase = rng.uniform() * comp.phase_jitter;
        const std::size_t n = comp.axis == 'h' ? H : W;
        std::vector<double> wave(n);
        for (std::size_t t = 0; t < n; ++t)
            wave[t] = comp.amplitude * std::cos(2 * std::numbers::pi * comp.frequency * static_cast<double>(t) + phase);
        for (std::size_t c = 0; c < C; ++c) {
            const double g = comp.gains.empty() ? 1.0 : comp.gains[c];
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) img.at(c, y, x) += g * wave[comp.axis == 'h' ? y : x];
        }
    }
    for (double& v : img.data()) v += r.noise * rng.normal();
}

Tensor draw_layout(std::size_t S, std::size_t n_classes, const LayoutSpec& layout, Rng& rng) {
    Tensor mask({S, S});
    const std::size_t shapes = layout.min_shapes + rng.uniform_int(layout.max_shapes - layout.min_shapes + 1);
    const double side = static_cast<double>(S);
    for (std::size_t e = 0; e < shapes; ++e) {
        const double cy = rng.uniform(0.2 * side, 0.8 * side);
        const double cx = rng.uniform(0.2 * side, 0.8 * side);
        const double ry = rng.uniform(layout.min_radius, layout.max_radius) * side;
        const double rx = rng.uniform(layout.min_radius, layout.max_radius) * side;
        const double th = rng.uniform(0.0, std::numbers::pi);
        const double label = static_cast<double>(1 + rng.uniform_int(n_classes - 1));
        const double cs = std::cos(th), sn = std::sin(th);
        for (std::size_t y = 0; y < S; ++y)
            for (std::size_t x = 0; x < S; ++x) {
                const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
                const double u = (dy * cs + dx * sn) / ry, v = (-dy * sn + dx * cs) / rx;
                if (u * u + v * v <= 1.0) mask[y * S + x] = label;
            }
    }
    return mask;
}

SegmentationSample make_sample(std::size_t index, std::size_t S, std::size_t n_classes, std::size_t C,
                               const TextureSpec& spec, std::uint64_t seed, const LayoutSpec& layout) {
    Rng rng = Rng(seed).fork(index);
    SegmentationSample s;
    s.id = "s" + std::to_string(index);
    s.seed = rng.state().seed;
    s.mask = draw_layout(S, n_classes, layout, rng);
    s.image = Tensor({C, S, S});
    for (std::size_t r = 0; r < n_classes; ++r) {
        Tensor tex({C, S, S});
        render_texture(tex, spec.regions[r], rng);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < S * S; ++i)
                if (s.mask[i] == static_cast<double>(r)) s.image[c * S * S + i] = tex[c * S * S + i];
    }
    for (double& v : s.image.data())
        v = static_cast<double>(static_cast<float>(std::clamp(spec.base_level + v, 0.0, 1.0)));
    return s;
}

}  // namespace

Dataset generate_dataset(std::size_t n, std::size_t image_size, std::size_t n_classes, const TextureSpec& spec,
                         std::uint64_t seed, std::size_t in_channels, const LayoutSpec& layout) {
    if (n_classes < 2) throw DataError("need at least 2 classes");
    if (image_size < 10) throw DataError("image_size must be >= 10");
    spec.validate(n_classes, in_channels);
    Dataset out;
    if (n == 0) return out;
    const Separability sep = texture_separability(spec, in_channels, image_size, seed);
    if (!sep.holds())
        throw DataError("texture spec is not multi-axis separable: single-axis crossings " +
                        std::to_string(sep.single_crossings) + ", multi-axis crossings " +
                        std::to_string(sep.multi_crossings));
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(make_sample(i, image_size, n_classes, in_channels, spec, seed, layout));
    return out;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data, std::size_t n_classes) {
    std::filesystem::create_directories(dir);
    Container c;
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        c.records.push_back({"image/" + std::to_string(i), data[i].image, DType::f32});
        c.records.push_back({"mask/" + std::to_string(i), data[i].mask, DType::f32});
        samples.push_back({{"id", data[i].id}, {"seed", data[i].seed}});
    }
    c.meta = {{"kind", "mewunet-dataset"}, {"n_classes", n_classes}, {"count", data.size()}};
    write_container(dir / "data.mewt", c);
    const nlohmann::json index = {
        {"container", "data.mewt"}, {"n_classes", n_classes}, {"count", data.size()}, {"samples", samples}};
    std::ofstream(dir / "index.json") << index.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
    nlohmann::json index;
    {
        std::ifstream in(dir / "index.json");
        if (!in) throw DataError("dataset index not found: " + (dir / "index.json").string());
        try {
            index = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("bad dataset index " + (dir / "index.json").string() + ": " + e.what());
        }
    }
    Container c;
    try {
        c = read_container(dir / index.value("container", "data.mewt"));
    } catch (const FormatError& e) {
        throw DataError(std::string("corrupt dataset container: ") + e.what());
    }
    const std::size_t n_classes = index.value("n_classes", std::size_t{0});
    const std::size_t count = index.value("count", std::size_t{0});
    if (n_classes < 2) throw DataError("dataset index has invalid n_classes");
    Dataset out;
    for (std::size_t i = 0; i < count; ++i) {
        const Record* img = c.find("image/" + std::to_string(i));
        const Record* msk = c.find("mask/" + std::to_string(i));
        if (!img || !msk) throw DataError("dataset is missing sample " + std::to_string(i));
        if (img->tensor.rank() != 3 || msk->tensor.rank() != 2 || img->tensor.dim(1) != msk->tensor.dim(0) ||
            img->tensor.dim(2) != msk->tensor.dim(1))
            throw DataError("sample " + std::to_string(i) + " has inconsistent image/mask shapes");
        for (double v : msk->tensor.data())
            if (!(v >= 0) || v != std::floor(v) || v >= static_cast<double>(n_classes))
                throw DataError("sample " + std::to_string(i) + " has mask label " + std::to_string(v) +
                                " outside [0," + std::to_string(n_classes) + ")");
        if (!all_finite(img->tensor)) throw DataError("sample " + std::to_string(i) + " has non-finite pixels");
        SegmentationSample s{img->tensor, msk->tensor, "s" + std::to_string(i), 0};
        if (index.contains("samples") && i < index["samples"].size()) {
            s.id = index["samples"][i].value("id", s.id);
            s.seed = index["samples"][i].value("seed", std::uint64_t{0});
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_dataset_root(const std::filesystem::path& root, const DataConfig& cfg) {
    cfg.validate();
    const TextureSpec spec = cfg.texture();
    // The test split uses a derived seed so the two splits never share samples.
    const Dataset train =
        generate_dataset(cfg.n_train, cfg.image_size, cfg.n_classes, spec, cfg.seed, cfg.in_channels, cfg.layout);
    const Dataset test = generate_dataset(cfg.n_test, cfg.image_size, cfg.n_classes, spec,
                                          Rng(cfg.seed).fork(0x7e57).state().seed, cfg.in_channels, cfg.layout);
    save_dataset(root / "train", train, cfg.n_classes);
    save_dataset(root / "test", test, cfg.n_classes);
    std::ofstream(root / "config.json") << to_json(cfg).dump(2) << '\n';
}

Tensor flip_h(const Tensor& t) {
    Tensor out(t.shape());
    const std::size_t w = t.shape().back(), rows = t.size() / w;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t x = 0; x < w; ++x) out[r * w + x] = t[r * w + (w - 1 - x)];
    return out;
}

Tensor flip_v(const Tensor& t) {
    Tensor out(t.shape());
    const std::size_t w = t.shape().back(), h = t.shape()[t.rank() - 2], planes = t.size() / (h * w);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < h; ++y)
            std::copy_n(t.ptr() + (p * h + (h - 1 - y)) * w, w, out.ptr() + (p * h + y) * w);
    return out;
}

Tensor rot90(const Tensor& t, int k) {
    k = ((k % 4) + 4) % 4;
    if (k == 0) return t;
    const std::size_t w = t.shape().back(), h = t.shape()[t.rank() - 2];
    if (h != w) throw ShapeError("rot90 needs square images");
    const std::size_t n = h, planes = t.size() / (n * n);
    Tensor out(t.shape());
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = t.ptr() + p * n * n;
        double* dst = out.ptr() + p * n * n;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) dst[i * n + j] = src[j * n + (n - 1 - i)];
    }
    return rot90(out, k - 1);
}

SegmentationSample augment(const SegmentationSample& s, Rng& rng, const AugmentConfig& cfg) {
    const double u_h = rng.uniform(), u_v = rng.uniform(), u_r = rng.uniform();
    SegmentationSample out = s;
    if (cfg.flip && u_h < 0.5) {
        out.image = flip_h(out.image);
        out.mask = flip_h(out.mask);
    }
    if (cfg.flip && u_v < 0.5) {
        out.image = flip_v(out.image);
        out.mask = flip_v(out.mask);
    }
    const int k = static_cast<int>(u_r * 4.0);
    if (cfg.rot90 && k != 0) {
        out.image = rot90(out.image, k);
        out.mask = rot90(out.mask, k);
    }
    return out;
}

std::vector<double> patch_curve(const Tensor& patch, CurveMode mode) {
    Tensor p = patch;
    const std::size_t C = p.dim(0), n = p.dim(1) * p.dim(2);
    for (std::size_t c = 0; c < C; ++c) {
        double* d = p.ptr() + c * n;
        const double mean = pairwise_sum({d, n}) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) d[i] -= mean;
    }
    return signal_strength_curve(p, mode);
}

namespace {

Tensor extract_patch(const Tensor& img, std::size_t y, std::size_t x, std::size_t patch) {
    if (y + patch > img.dim(1) || x + patch > img.dim(2))
        throw DataError("patch at (" + std::to_string(y) + "," + std::to_string(x) + ") of size " +
                        std::to_string(patch) + " is out of bounds");
    Tensor p({img.dim(0), patch, patch});
    for (std::size_t c = 0; c < img.dim(0); ++c)
        for (std::size_t i = 0; i < patch; ++i)
            for (std::size_t j = 0; j < patch; ++j) p.at(c, i, j) = img.at(c, y + i, x + j);
    return p;
}

void accumulate(std::vector<double>& acc, const std::vector<double>& v) {
    if (acc.empty()) acc.assign(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

void finish_mean(RegionCurves& r) {
    if (r.patches == 0) return;
    const double k = static_cast<double>(r.patches);
    for (double& v : r.single) v /= k;
    for (double& v : r.multi) v /= k;
}

}  // namespace

std::vector<RegionCurves> region_curves(const Dataset& data, std::size_t n_classes, std::size_t patch,
                                        std::size_t max_patches, std::size_t per_image) {
    std::vector<RegionCurves> out(n_classes);
    for (std::size_t r = 0; r < n_classes; ++r) out[r].region = r;
    const std::size_t stride = std::max<std::size_t>(1, patch / 2);
    for (const SegmentationSample& s : data) {
        const std::size_t H = s.mask.dim(0), W = s.mask.dim(1);
        if (H < patch || W < patch) continue;
        std::vector<std::vector<std::pair<std::size_t, std::size_t>>> cand(n_classes);
        for (std::size_t y = 0; y + patch <= H; y += stride)
            for (std::size_t x = 0; x + patch <= W; x += stride) {
                const double label = s.mask[y * W + x];
                bool uniform = true;
                for (std::size_t i = 0; i < patch && uniform; ++i)
                    for (std::size_t j = 0; j < patch; ++j)
                        if (s.mask[(y + i) * W + x + j] != label) {
                            uniform = false;
                            break;
                        }
                if (uniform && label < static_cast<double>(n_classes))
                    cand[static_cast<std::size_t>(label)].push_back({y, x});
            }
        for (std::size_t r = 0; r < n_classes; ++r) {
            const auto& cs = cand[r];
            const std::size_t take = std::min(per_image, cs.size());
            for (std::size_t t = 0; t < take && out[r].patches < max_patches; ++t) {
                const auto [y, x] = cs[t * cs.size() / take];
                const Tensor p = extract_patch(s.image, y, x, patch);
                accumulate(out[r].single, patch_curve(p, CurveMode::single));
                accumulate(out[r].multi, patch_curve(p, CurveMode::multi));
                ++out[r].patches;
            }
        }
    }
    for (RegionCurves& r : out) finish_mean(r);
    return out;
}

RegionCurves patch_set_curves(const Dataset& data, const std::vector<PatchRef>& refs, std::size_t patch) {
    RegionCurves r;
    for (const PatchRef& ref : refs) {
        if (ref.index >= data.size()) throw DataError("patch refers to missing sample " + std::to_string(ref.index));
        const Tensor p = extract_patch(data[ref.index].image, ref.y, ref.x, patch);
        accumulate(r.single, patch_curve(p, CurveMode::single));
        accumulate(r.multi, patch_curve(p, CurveMode::multi));
        ++r.patches;
    }
    finish_mean(r);
    return r;
}

Separability compare_regions(const RegionCurves& a, const RegionCurves& b) {
    if (a.patches == 0 || b.patches == 0) throw DataError("cannot compare a region without patches");
    return {count_intersections(a.single, b.single), count_intersections(a.multi, b.multi)};
}

Separability texture_separability(const TextureSpec& spec, std::size_t in_channels, std::size_t image_size,
                                  std::uint64_t seed, std::size_t patches) {
    if (spec.regions.size() < 2) throw DataError("separability needs two regions");
    const std::size_t patch = 10;
    Rng base = Rng(seed).fork(0x5e9a);
    RegionCurves curves[2];
    for (std::size_t r = 0; r < 2; ++r) {
        curves[r].region = r;
        for (std::size_t k = 0; k < patches; ++k) {
            Rng rng = base.fork(r * patches + k);
            Tensor img({in_channels, image_size, image_size});
            render_texture(img, spec.regions[r], rng);
            const std::size_t y = rng.uniform_int(image_size - patch + 1);
            const std::size_t x = rng.uniform_int(image_size - patch + 1);
            const Tensor p = extract_patch(img, y, x, patch);
            accumulate(curves[r].single, patch_curve(p, CurveMode::single));
            accumulate(curves[r].multi, patch_curve(p, CurveMode::multi));
            ++curves[r].patches;
        }
        finish_mean(curves[r]);
    }
    return compare_regions(curves[0], curves[1]);
}

}  // namespace mew
