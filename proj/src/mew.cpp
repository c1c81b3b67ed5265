#include "mew/mew.hpp"

#include <sstream>
#include <stdexcept>

namespace mew {

BranchMask BranchMask::parse(const std::string& text) {
    BranchMask m{false, false, false, false};
    if (text.empty() || text == "none") return m;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto b = tok.find_first_not_of(" \t");
        const auto e = tok.find_last_not_of(" \t");
        tok = b == std::string::npos ? "" : tok.substr(b, e - b + 1);
        if (tok == "dw") m.dw = true;
        else if (tok == "hw") m.hw = true;
        else if (tok == "cw") m.cw = true;
        else if (tok == "ch") m.ch = true;
        else throw std::invalid_argument("unknown branch '" + tok + "' (expected dw, hw, cw, ch)");
    }
    return m;
}

std::string BranchMask::str() const {
    std::string s;
    auto put = [&](bool on, const char* name) {
        if (!on) return;
        if (!s.empty()) s += ',';
        s += name;
    };
    put(dw, "dw");
    put(hw, "hw");
    put(cw, "cw");
    put(ch, "ch");
    return s.empty() ? "none" : s;
}

GeneratorMode parse_generator_mode(const std::string& s) {
    if (s == "generated") return GeneratorMode::generated;
    if (s == "raw") return GeneratorMode::raw;
    throw std::invalid_argument("unknown generator mode '" + s + "' (expected generated or raw)");
}

const char* to_string(GeneratorMode m) { return m == GeneratorMode::raw ? "raw" : "generated"; }

WeightKind parse_weight_kind(const std::string& s) {
    if (s == "complex") return WeightKind::complex;
    if (s == "real") return WeightKind::real;
    throw std::invalid_argument("unknown weight kind '" + s + "' (expected complex or real)");
}

const char* to_string(WeightKind k) { return k == WeightKind::real ? "real" : "complex"; }

namespace {

Tensor init_planes(std::size_t n1, std::size_t n2, double std, Rng& rng) {
    Tensor re = randn({n1, n2}, rng, std, 1.0);
    Tensor im = randn({n1, n2}, rng, std, 0.0);
    Tensor planes({2, n1, n2});
    std::copy(re.data().begin(), re.data().end(), planes.ptr());
    std::copy(im.data().begin(), im.data().end(), planes.ptr() + n1 * n2);
    return planes;
}

// Strides of a rank-3 row-major shape.
std::array<std::size_t, 3> strides3(const Shape& s) { return {s[1] * s[2], s[2], 1}; }

}  // namespace

WeightGenerator::WeightGenerator(AxisPair axes_, const MewOptions& opt, Rng& rng,
                                 std::optional<std::array<std::size_t, 2>> raw_target)
    : axes(axes_), mode(opt.generator), kind(opt.weight_kind), align_corners(opt.align_corners) {
    if (mode == GeneratorMode::raw) {
        if (!raw_target || (*raw_target)[0] == 0 || (*raw_target)[1] == 0)
            throw ShapeError("raw weight generator needs a target shape");
        init = Param(init_planes((*raw_target)[0], (*raw_target)[1], opt.init_std, rng));
    } else {
        init = Param(init_planes(opt.base_n1, opt.base_n2, opt.init_std, rng));
        irb = InvertedResidual(2, opt.irb_expansion, opt.act, rng);
    }
}

ComplexTensor WeightGenerator::generate(std::size_t n1, std::size_t n2_half) {
    if (n1 == 0 || n2_half == 0) throw ShapeError("weight target must be at least 1x1");
    ComplexTensor z;
    if (mode == GeneratorMode::raw) {
        if (init.value.shape() != Shape{2, n1, n2_half})
            throw ShapeError(std::string("raw ") + axis_pair_name(axes) + " weight has shape " +
                             shape_str(init.value.shape()) + ", branch needs [2," + std::to_string(n1) + "," +
                             std::to_string(n2_half) + "]");
        z = ComplexTensor::from_planes(init.value);
    } else {
        resized_shape_ = {2, n1, n2_half};
        z = ComplexTensor::from_planes(irb.forward(bilinear_interp(init.value, n1, n2_half, align_corners)));
    }
    if (kind == WeightKind::real)
        for (cplx& v : z.data()) v = {v.real(), 0.0};
    return z;
}

void WeightGenerator::backward(const ComplexTensor& grad) {
    Tensor dp = grad.to_planes();
    if (kind == WeightKind::real) {
        const std::size_t n = grad.size();
        std::fill(dp.ptr() + n, dp.ptr() + 2 * n, 0.0);
    }
    if (mode == GeneratorMode::raw) {
        add_inplace(init.grad, dp);
        return;
    }
    if (resized_shape_ != dp.shape()) throw ShapeError("weight generator backward without matching generate()");
    add_inplace(init.grad, bilinear_interp_backward(irb.backward(dp), init.value.shape(), align_corners));
}

void WeightGenerator::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".init", &init});
    if (mode == GeneratorMode::generated) irb.collect(out, prefix + ".irb");
}

WeightGenerator& ExternalWeightSet::get(AxisPair axes) {
    if (axes == kAxesHW) return hw;
    if (axes == kAxesCW) return cw;
    if (axes == kAxesCH) return ch;
    throw ShapeError("no weight generator for this axis pair");
}

ComplexTensor broadcast_weight(const ComplexTensor& w, AxisPair axes, const Shape& spectrum_shape) {
    axes.validate();
    if (spectrum_shape.size() != 3 || w.shape() != Shape{spectrum_shape[axes.first], spectrum_shape[axes.second]})
        throw ShapeError("broadcast_weight: weight " + shape_str(w.shape()) + " does not fit spectrum " +
                         shape_str(spectrum_shape));
    ComplexTensor out(spectrum_shape);
    const auto st = strides3(spectrum_shape);
    const std::size_t n2 = w.dim(1);
    for (std::size_t i = 0; i < spectrum_shape[axes.first]; ++i)
        for (std::size_t j = 0; j < n2; ++j)
            for (std::size_t u = 0; u < spectrum_shape[axes.untransformed()]; ++u)
                out[i * st[axes.first] + j * st[axes.second] + u * st[axes.untransformed()]] = w[i * n2 + j];
    return out;
}

ComplexTensor reduce_weight_grad(const ComplexTensor& g, AxisPair axes) {
    axes.validate();
    const Shape& s = g.shape();
    if (s.size() != 3) throw ShapeError("reduce_weight_grad expects a rank-3 spectrum");
    ComplexTensor out({s[axes.first], s[axes.second]});
    const auto st = strides3(s);
    const std::size_t n2 = s[axes.second];
    for (std::size_t i = 0; i < s[axes.first]; ++i)
        for (std::size_t j = 0; j < n2; ++j) {
            cplx acc{};
            for (std::size_t u = 0; u < s[axes.untransformed()]; ++u)
                acc += g[i * st[axes.first] + j * st[axes.second] + u * st[axes.untransformed()]];
            out[i * n2 + j] = acc;
        }
    return out;
}

MewMixer::MewMixer(std::size_t channels_, const MewOptions& opt, Rng& rng, std::size_t height, std::size_t width)
    : channels(channels_), mask(opt.mask), dw_pointwise(opt.dw_pointwise) {
    if (channels == 0 || channels % 4 != 0)
        throw ShapeError("MEW needs a channel count divisible by 4, got " + std::to_string(channels));
    const std::size_t q = channels / 4;
    const bool raw = opt.generator == GeneratorMode::raw;
    if (raw && (height == 0 || width == 0)) throw ShapeError("raw weights need the block's spatial size");
    auto target = [&](std::size_t n1, std::size_t n2) -> std::optional<std::array<std::size_t, 2>> {
        if (!raw) return std::nullopt;
        return std::array<std::size_t, 2>{n1, n2 / 2 + 1};
    };
    if (mask.hw) weights.hw = WeightGenerator(kAxesHW, opt, rng, target(height, width));
    if (mask.cw) weights.cw = WeightGenerator(kAxesCW, opt, rng, target(q, width));
    if (mask.ch) weights.ch = WeightGenerator(kAxesCH, opt, rng, target(q, height));
    if (mask.dw) {
        dw = DepthwiseConv2d(q, 3, rng, false);
        if (dw_pointwise) pw = Conv2d(q, q, 1, 1, 0, rng);
    }
    branches_[0].axes = kAxesHW;
    branches_[1].axes = kAxesCW;
    branches_[2].axes = kAxesCH;
}

bool MewMixer::enabled(std::size_t i) const {
    switch (i) {
        case 0: return mask.hw;
        case 1: return mask.cw;
        case 2: return mask.ch;
        default: return mask.dw;
    }
}

void MewMixer::prepare(std::size_t h, std::size_t w) {
    const Shape slice{channels / 4, h, w};
    for (std::size_t i = 0; i < 3; ++i) {
        if (!enabled(i)) continue;
        Branch& b = branches_[i];
        const SpectrumLayout lay = SpectrumLayout::of(slice, b.axes);
        b.weight = weights.get(b.axes).generate(lay.n1, lay.n2_half);
        b.weight_grad = ComplexTensor({lay.n1, lay.n2_half});
    }
    prepared_h_ = h;
    prepared_w_ = w;
}

const ComplexTensor& MewMixer::weight(AxisPair axes) const {
    for (const Branch& b : branches_)
        if (b.axes == axes) return b.weight;
    throw ShapeError("no branch for this axis pair");
}

Tensor MewMixer::spectral_forward(Branch& b, const Tensor& x) {
    b.slice_shape = x.shape();
    b.spectrum = rdft2(x, b.axes);
    b.expanded = broadcast_weight(b.weight, b.axes, b.spectrum.shape());
    return irdft2(spectral_mul(b.spectrum, b.expanded), b.axes, x.shape());
}

Tensor MewMixer::spectral_backward(Branch& b, const Tensor& dy) {
    const ComplexTensor gz = irdft2_backward(dy, b.axes);
    SpectralMulGrads g = spectral_mul_backward(gz, b.spectrum, b.expanded);
    const ComplexTensor dw2 = reduce_weight_grad(g.db, b.axes);
    for (std::size_t i = 0; i < dw2.size(); ++i) b.weight_grad[i] += dw2[i];
    return rdft2_backward(g.da, b.axes, b.slice_shape);
}

Tensor MewMixer::forward(const Tensor& x) {
    if (x.rank() != 3 || x.dim(0) != channels)
        throw ShapeError("MEW expects [" + std::to_string(channels) + ",H,W], got " + shape_str(x.shape()));
    if (x.dim(1) != prepared_h_ || x.dim(2) != prepared_w_) prepare(x.dim(1), x.dim(2));
    std::vector<Tensor> parts = split_channels(x, 4);
    for (std::size_t i = 0; i < 3; ++i)
        if (enabled(i)) parts[i] = spectral_forward(branches_[i], parts[i]);
    if (mask.dw) {
        parts[3] = dw.forward(parts[3]);
        if (dw_pointwise) parts[3] = pw.forward(parts[3]);
    }
    Tensor y = concat_channels(parts);
    add_inplace(y, x);
    return y;
}

Tensor MewMixer::backward(const Tensor& dy) {
    std::vector<Tensor> parts = split_channels(dy, 4);
    for (std::size_t i = 0; i < 3; ++i)
        if (enabled(i)) parts[i] = spectral_backward(branches_[i], parts[i]);
    if (mask.dw) {
        if (dw_pointwise) parts[3] = pw.backward(parts[3]);
        parts[3] = dw.backward(parts[3]);
    }
    Tensor dx = concat_channels(parts);
    add_inplace(dx, dy);
    return dx;
}

void MewMixer::finish_backward() {
    for (std::size_t i = 0; i < 3; ++i) {
        if (!enabled(i)) continue;
        Branch& b = branches_[i];
        weights.get(b.axes).backward(b.weight_grad);
        for (cplx& v : b.weight_grad.data()) v = {};
    }
}

void MewMixer::collect(ParamList& out, const std::string& prefix) {
    if (mask.hw) weights.hw.collect(out, prefix + ".w_hw");
    if (mask.cw) weights.cw.collect(out, prefix + ".w_cw");
    if (mask.ch) weights.ch.collect(out, prefix + ".w_ch");
    if (mask.dw) {
        dw.collect(out, prefix + ".dw");
        if (dw_pointwise) pw.collect(out, prefix + ".pw");
    }
}

MewBlock::MewBlock(std::size_t channels, std::size_t ffn_ratio, const MewOptions& opt, Rng& rng, std::size_t height,
                   std::size_t width)
    : norm1(channels, 4),
      mixer(channels, opt, rng, height, width),
      norm2(channels, 4),
      ffn(channels, ffn_ratio, opt.act, rng) {}

Tensor MewBlock::forward(const Tensor& x) {
    Tensor x1 = mixer.forward(norm1.forward(x));
    add_inplace(x1, x);
    Tensor y = ffn.forward(norm2.forward(x1));
    add_inplace(y, x1);
    return y;
}

Tensor MewBlock::backward(const Tensor& dy) {
    Tensor dx1 = norm2.backward(ffn.backward(dy));
    add_inplace(dx1, dy);
    Tensor dx = norm1.backward(mixer.backward(dx1));
    add_inplace(dx, dx1);
    return dx;
}

void MewBlock::collect(ParamList& out, const std::string& prefix) {
    norm1.collect(out, prefix + ".norm1");
    mixer.collect(out, prefix + ".mew");
    norm2.collect(out, prefix + ".norm2");
    ffn.collect(out, prefix + ".ffn");
}

}  // namespace mew
