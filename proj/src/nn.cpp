#include "mew/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mew {

Activation parse_activation(const std::string& s) {
    if (s == "gelu") return Activation::gelu;
    if (s == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

const char* to_string(Activation a) { return a == Activation::gelu ? "gelu" : "identity"; }

double gelu(double x) { return x * (0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0))); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

Tensor activate(const Tensor& x, Activation act) {
    if (act == Activation::identity) return x;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
    return y;
}

Tensor activate_with_derivative(const Tensor& x, Activation act, Tensor& derivative) {
    if (act == Activation::identity) {
        derivative = Tensor::ones(x.shape());
        return x;
    }
    Tensor y(x.shape());
    derivative = Tensor(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        y[i] = v * cdf;
        derivative[i] = cdf + v * (std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi));
    }
    return y;
}

Tensor activate_backward(const Tensor& x, const Tensor& dy, Activation act) {
    if (act == Activation::identity) return dy;
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * gelu_derivative(x[i]);
    return dx;
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeom {
    std::size_t cin, h, w, cout, kh, kw, oh, ow, stride, pad;
};

ConvGeom conv_geom(const Shape& x, const Conv2dParams& p) {
    if (x.size() != 3) throw ShapeError("conv2d expects [C,H,W], got " + shape_str(x));
    const Shape& k = p.kernel.shape();
    if (k.size() != 4) throw ShapeError("conv2d kernel must be [Cout,Cin,kh,kw]");
    if (k[1] != x[0])
        throw ShapeError("conv2d: kernel expects " + std::to_string(k[1]) + " input channels, got " +
                         std::to_string(x[0]));
    if (!p.bias.empty() && p.bias.shape() != Shape{k[0]}) throw ShapeError("conv2d: bias must be [Cout]");
    if (p.stride == 0) throw ShapeError("conv2d: stride must be >= 1");
    if (x[1] + 2 * p.padding < k[2] || x[2] + 2 * p.padding < k[3]) throw ShapeError("conv2d: kernel larger than input");
    ConvGeom g{x[0], x[1], x[2], k[0], k[2], k[3], 0, 0, p.stride, p.padding};
    g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
    g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
    return g;
}

/// Output column range [lo, hi) whose input index ow*stride + kw - pad lies in [0, w).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k, std::size_t stride,
                                                std::size_t pad) {
    // need o*stride + k >= pad  and  o*stride + k - pad < in
    std::size_t lo = 0;
    if (k < pad) lo = (pad - k + stride - 1) / stride;
    std::size_t hi = 0;
    if (in + pad > k) hi = std::min(out, (in + pad - k - 1) / stride + 1);
    return {lo, std::max(lo, hi)};
}

// Four interleaved partial sums; fixed order, so still deterministic.
double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

bool is_pointwise(const ConvGeom& g) { return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

Shape conv2d_output_shape(const Shape& x, const Conv2dParams& p) {
    const ConvGeom g = conv_geom(x, p);
    return {g.cout, g.oh, g.ow};
}

Tensor conv2d(const Tensor& x, const Conv2dParams& p) {
    const ConvGeom g = conv_geom(x.shape(), p);
    Tensor y({g.cout, g.oh, g.ow});
    const std::size_t plane = g.oh * g.ow;
    const double* xp = x.ptr();
    const double* kp = p.kernel.ptr();
    for (std::size_t co = 0; co < g.cout; ++co) {
        double* yc = y.ptr() + co * plane;
        if (!p.bias.empty()) std::fill(yc, yc + plane, p.bias[co]);
        if (is_pointwise(g)) {
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
                const double wv = kp[co * g.cin + ci];
                const double* xc = xp + ci * plane;
                for (std::size_t i = 0; i < plane; ++i) yc[i] += wv * xc[i];
            }
            continue;
        }
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double* xc = xp + ci * g.h * g.w;
            for (std::size_t a = 0; a < g.kh; ++a) {
                const auto [rlo, rhi] = valid_range(g.oh, g.h, a, g.stride, g.pad);
                for (std::size_t b = 0; b < g.kw; ++b) {
                    const double wv = kp[((co * g.cin + ci) * g.kh + a) * g.kw + b];
                    const auto [clo, chi] = valid_range(g.ow, g.w, b, g.stride, g.pad);
                    for (std::size_t r = rlo; r < rhi; ++r) {
                        const double* xr = xc + (r * g.stride + a - g.pad) * g.w;
                        double* yr = yc + r * g.ow;
                        if (g.stride == 1) {
                            for (std::size_t c = clo; c < chi; ++c) yr[c] += wv * xr[c + b - g.pad];
                        } else {
                            for (std::size_t c = clo; c < chi; ++c) yr[c] += wv * xr[c * g.stride + b - g.pad];
                        }
                    }
                }
            }
        }
    }
    return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Conv2dParams& p, const Tensor& dy) {
    const ConvGeom g = conv_geom(x.shape(), p);
    if (dy.shape() != Shape{g.cout, g.oh, g.ow}) throw ShapeError("conv2d_backward: dy shape mismatch");
    Conv2dGrads out{Tensor(x.shape()), Tensor(p.kernel.shape()), p.bias.empty() ? Tensor() : Tensor(p.bias.shape())};
    const std::size_t plane = g.oh * g.ow;
    const double* xp = x.ptr();
    const double* kp = p.kernel.ptr();
    double* dxp = out.dx.ptr();
    double* dkp = out.dkernel.ptr();
    for (std::size_t co = 0; co < g.cout; ++co) {
        const double* dyc = dy.ptr() + co * plane;
        if (!p.bias.empty()) out.dbias[co] = pairwise_sum({dyc, plane});
        if (is_pointwise(g)) {
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
                const double wv = kp[co * g.cin + ci];
                const double* xc = xp + ci * plane;
                double* dxc = dxp + ci * plane;
                for (std::size_t i = 0; i < plane; ++i) dxc[i] += wv * dyc[i];
                dkp[co * g.cin + ci] = dot(dyc, xc, plane);
            }
            continue;
        }
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double* xc = xp + ci * g.h * g.w;
            double* dxc = dxp + ci * g.h * g.w;
            for (std::size_t a = 0; a < g.kh; ++a) {
                const auto [rlo, rhi] = valid_range(g.oh, g.h, a, g.stride, g.pad);
                for (std::size_t b = 0; b < g.kw; ++b) {
                    const double wv = kp[((co * g.cin + ci) * g.kh + a) * g.kw + b];
                    const auto [clo, chi] = valid_range(g.ow, g.w, b, g.stride, g.pad);
                    double acc = 0.0;
                    for (std::size_t r = rlo; r < rhi; ++r) {
                        const std::size_t row = (r * g.stride + a - g.pad) * g.w;
                        const double* xr = xc + row;
                        double* dxr = dxc + row;
                        const double* dyr = dyc + r * g.ow;
                        if (g.stride == 1) {
                            for (std::size_t c = clo; c < chi; ++c) dxr[c + b - g.pad] += wv * dyr[c];
                            if (chi > clo) acc += dot(dyr + clo, xr + (clo + b - g.pad), chi - clo);
                        } else {
                            for (std::size_t c = clo; c < chi; ++c) {
                                const std::size_t ix = c * g.stride + b - g.pad;
                                acc += dyr[c] * xr[ix];
                                dxr[ix] += wv * dyr[c];
                            }
                        }
                    }
                    dkp[((co * g.cin + ci) * g.kh + a) * g.kw + b] = acc;
                }
            }
        }
    }
    return out;
}

namespace {

ConvGeom depthwise_geom(const Shape& x, const Conv2dParams& p) {
    if (x.size() != 3) throw ShapeError("depthwise conv expects [C,H,W]");
    const Shape& k = p.kernel.shape();
    if (k.size() != 4 || k[1] != 1 || k[0] != x[0])
        throw ShapeError("depthwise kernel must be [C,1,kh,kw] with C=" + std::to_string(x[0]) + ", got " +
                         shape_str(k));
    if (!p.bias.empty() && p.bias.shape() != Shape{k[0]}) throw ShapeError("depthwise bias must be [C]");
    if (p.stride != 1) throw ShapeError("depthwise conv supports stride 1 only");
    ConvGeom g{x[0], x[1], x[2], x[0], k[2], k[3], 0, 0, 1, p.padding};
    if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) throw ShapeError("depthwise: kernel larger than input");
    g.oh = g.h + 2 * g.pad - g.kh + 1;
    g.ow = g.w + 2 * g.pad - g.kw + 1;
    return g;
}

}  // namespace

Tensor depthwise_conv2d(const Tensor& x, const Conv2dParams& p) {
    const ConvGeom g = depthwise_geom(x.shape(), p);
    Tensor y({g.cin, g.oh, g.ow});
    for (std::size_t c = 0; c < g.cin; ++c) {
        const double* xc = x.ptr() + c * g.h * g.w;
        double* yc = y.ptr() + c * g.oh * g.ow;
        if (!p.bias.empty()) std::fill(yc, yc + g.oh * g.ow, p.bias[c]);
        for (std::size_t a = 0; a < g.kh; ++a) {
            const auto [rlo, rhi] = valid_range(g.oh, g.h, a, 1, g.pad);
            for (std::size_t b = 0; b < g.kw; ++b) {
                const double wv = p.kernel[(c * g.kh + a) * g.kw + b];
                const auto [clo, chi] = valid_range(g.ow, g.w, b, 1, g.pad);
                for (std::size_t r = rlo; r < rhi; ++r) {
                    const double* xr = xc + (r + a - g.pad) * g.w;
                    double* yr = yc + r * g.ow;
                    for (std::size_t col = clo; col < chi; ++col) yr[col] += wv * xr[col + b - g.pad];
                }
            }
        }
    }
    return y;
}

Conv2dGrads depthwise_conv2d_backward(const Tensor& x, const Conv2dParams& p, const Tensor& dy) {
    const ConvGeom g = depthwise_geom(x.shape(), p);
    if (dy.shape() != Shape{g.cin, g.oh, g.ow}) throw ShapeError("depthwise backward: dy shape mismatch");
    Conv2dGrads out{Tensor(x.shape()), Tensor(p.kernel.shape()), p.bias.empty() ? Tensor() : Tensor(p.bias.shape())};
    for (std::size_t c = 0; c < g.cin; ++c) {
        const double* xc = x.ptr() + c * g.h * g.w;
        double* dxc = out.dx.ptr() + c * g.h * g.w;
        const double* dyc = dy.ptr() + c * g.oh * g.ow;
        if (!p.bias.empty()) out.dbias[c] = pairwise_sum({dyc, g.oh * g.ow});
        for (std::size_t a = 0; a < g.kh; ++a) {
            const auto [rlo, rhi] = valid_range(g.oh, g.h, a, 1, g.pad);
            for (std::size_t b = 0; b < g.kw; ++b) {
                const double wv = p.kernel[(c * g.kh + a) * g.kw + b];
                const auto [clo, chi] = valid_range(g.ow, g.w, b, 1, g.pad);
                double acc = 0.0;
                for (std::size_t r = rlo; r < rhi; ++r) {
                    const std::size_t row = (r + a - g.pad) * g.w;
                    const double* dyr = dyc + r * g.ow;
                    if (chi <= clo) continue;
                    double* dxr = dxc + row + (clo + b - g.pad);
                    const double* xr = xc + row + (clo + b - g.pad);
                    for (std::size_t col = 0; col < chi - clo; ++col) dxr[col] += wv * dyr[clo + col];
                    acc += dot(dyr + clo, xr, chi - clo);
                }
                out.dkernel[(c * g.kh + a) * g.kw + b] = acc;
            }
        }
    }
    return out;
}

Tensor dw_separable_conv(const Tensor& x, const Tensor& dw_kernel, const Conv2dParams& pw) {
    const Tensor mid = depthwise_conv2d(x, Conv2dParams{dw_kernel, Tensor(), 1, 1});
    return conv2d(mid, pw);
}

// ---------------------------------------------------------------------------
// GroupNorm

namespace {

void check_group_norm(const Tensor& x, const GroupNormParams& p) {
    if (x.rank() != 3) throw ShapeError("group_norm expects [C,H,W]");
    const std::size_t c = x.dim(0);
    if (p.groups == 0 || c % p.groups != 0)
        throw ShapeError("group_norm: C=" + std::to_string(c) + " not divisible by groups=" + std::to_string(p.groups));
    if (p.gamma.shape() != Shape{c} || p.beta.shape() != Shape{c}) throw ShapeError("group_norm: gamma/beta must be [C]");
}

struct GroupStats {
    double mean;
    double inv_std;
};

GroupStats group_stats(std::span<const double> v, double eps) {
    const double n = static_cast<double>(v.size());
    const double mean = pairwise_sum(v) / n;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
    const double var = pairwise_sum(sq) / n;
    return {mean, 1.0 / std::sqrt(var + eps)};
}

}  // namespace

Tensor group_norm(const Tensor& x, const GroupNormParams& p) {
    check_group_norm(x, p);
    const std::size_t cpg = x.dim(0) / p.groups;
    const std::size_t plane = x.dim(1) * x.dim(2);
    const std::size_t n = cpg * plane;
    Tensor y(x.shape());
    for (std::size_t g = 0; g < p.groups; ++g) {
        const GroupStats s = group_stats(x.data().subspan(g * n, n), p.eps);
        for (std::size_t c = g * cpg; c < (g + 1) * cpg; ++c) {
            const double a = p.gamma[c] * s.inv_std;
            const double b = p.beta[c] - a * s.mean;
            const double* xc = x.ptr() + c * plane;
            double* yc = y.ptr() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) yc[i] = a * xc[i] + b;
        }
    }
    return y;
}

GroupNormGrads group_norm_backward(const Tensor& x, const GroupNormParams& p, const Tensor& dy) {
    check_group_norm(x, p);
    if (dy.shape() != x.shape()) throw ShapeError("group_norm_backward: dy shape mismatch");
    const std::size_t channels = x.dim(0);
    const std::size_t cpg = channels / p.groups;
    const std::size_t plane = x.dim(1) * x.dim(2);
    const std::size_t n = cpg * plane;
    GroupNormGrads out{Tensor(x.shape()), Tensor({channels}), Tensor({channels})};
    std::vector<double> xhat(n), dxhat(n), prod(n);
    for (std::size_t g = 0; g < p.groups; ++g) {
        const GroupStats s = group_stats(x.data().subspan(g * n, n), p.eps);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = g * cpg + i / plane;
            xhat[i] = (x[g * n + i] - s.mean) * s.inv_std;
            dxhat[i] = dy[g * n + i] * p.gamma[c];
            prod[i] = dxhat[i] * xhat[i];
        }
        for (std::size_t c = 0; c < cpg; ++c) {
            const std::size_t ch = g * cpg + c;
            double dg = 0.0;
            for (std::size_t i = 0; i < plane; ++i) dg += dy[ch * plane + i] * xhat[c * plane + i];
            out.dgamma[ch] = dg;
            out.dbeta[ch] = pairwise_sum(dy.data().subspan(ch * plane, plane));
        }
        const double sum_dxhat = pairwise_sum(dxhat);
        const double sum_prod = pairwise_sum(prod);
        const double nn = static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            out.dx[g * n + i] = s.inv_std / nn * (nn * dxhat[i] - sum_dxhat - xhat[i] * sum_prod);
    }
    return out;
}

Tensor ffn(const Tensor& x, const FfnParams& p) {
    return conv2d(activate(conv2d(x, p.fc1), p.act), p.fc2);
}

// ---------------------------------------------------------------------------
// Bilinear interpolation

namespace {

struct Tap {
    std::size_t i0, i1;
    double frac;
};

std::vector<Tap> taps(std::size_t in, std::size_t out, bool align_corners) {
    std::vector<Tap> t(out);
    for (std::size_t i = 0; i < out; ++i) {
        double src = 0.0;
        if (align_corners) {
            if (out > 1) src = static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
        } else {
            src = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        }
        const auto i0 = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        t[i] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
}

}  // namespace

Tensor bilinear_interp(const Tensor& x, std::size_t out_h, std::size_t out_w, bool align_corners) {
    if (x.rank() != 3) throw ShapeError("bilinear_interp expects [C,h,w]");
    if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_interp: target must be at least 1x1");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto th = taps(h, out_h, align_corners);
    const auto tw = taps(w, out_w, align_corners);
    Tensor y({c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* xc = x.ptr() + ch * h * w;
        double* yc = y.ptr() + ch * out_h * out_w;
        for (std::size_t i = 0; i < out_h; ++i) {
            const Tap& a = th[i];
            const double* r0 = xc + a.i0 * w;
            const double* r1 = xc + a.i1 * w;
            for (std::size_t j = 0; j < out_w; ++j) {
                const Tap& b = tw[j];
                const double top = r0[b.i0] + b.frac * (r0[b.i1] - r0[b.i0]);
                const double bot = r1[b.i0] + b.frac * (r1[b.i1] - r1[b.i0]);
                yc[i * out_w + j] = top + a.frac * (bot - top);
            }
        }
    }
    return y;
}

Tensor bilinear_interp_backward(const Tensor& dy, const Shape& in_shape, bool align_corners) {
    if (dy.rank() != 3 || in_shape.size() != 3 || dy.dim(0) != in_shape[0])
        throw ShapeError("bilinear_interp_backward: shape mismatch");
    const std::size_t c = in_shape[0], h = in_shape[1], w = in_shape[2];
    const std::size_t out_h = dy.dim(1), out_w = dy.dim(2);
    const auto th = taps(h, out_h, align_corners);
    const auto tw = taps(w, out_w, align_corners);
    Tensor dx(in_shape);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double* dxc = dx.ptr() + ch * h * w;
        const double* dyc = dy.ptr() + ch * out_h * out_w;
        for (std::size_t i = 0; i < out_h; ++i) {
            const Tap& a = th[i];
            for (std::size_t j = 0; j < out_w; ++j) {
                const Tap& b = tw[j];
                const double g = dyc[i * out_w + j];
                dxc[a.i0 * w + b.i0] += g * (1.0 - a.frac) * (1.0 - b.frac);
                dxc[a.i0 * w + b.i1] += g * (1.0 - a.frac) * b.frac;
                dxc[a.i1 * w + b.i0] += g * a.frac * (1.0 - b.frac);
                dxc[a.i1 * w + b.i1] += g * a.frac * b.frac;
            }
        }
    }
    return dx;
}

Tensor inverted_residual_block(const Tensor& x, const IrbParams& p) {
    Tensor h = activate(conv2d(x, p.expand), p.act);
    h = activate(depthwise_conv2d(h, p.depthwise), p.act);
    return add(conv2d(h, p.project), x);
}

// ---------------------------------------------------------------------------
// Layers

namespace {

double he_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

}  // namespace

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t stride_, std::size_t padding_, Rng& rng,
               double init_std, bool bias_)
    : weight(randn({out, in, k, k}, rng, init_std > 0 ? init_std : he_std(in * k * k))),
      bias(Tensor::zeros({out})),
      stride(stride_),
      padding(padding_),
      has_bias(bias_) {}

Conv2dParams Conv2d::params() const {
    return {weight.value, has_bias ? bias.value : Tensor(), stride, padding};
}

Tensor Conv2d::forward(const Tensor& x) {
    x_ = x;
    return conv2d(x, params());
}

Tensor Conv2d::backward(const Tensor& dy) {
    Conv2dGrads g = conv2d_backward(x_, params(), dy);
    add_inplace(weight.grad, g.dkernel);
    if (has_bias) add_inplace(bias.grad, g.dbias);
    return std::move(g.dx);
}

void Conv2d::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight});
    if (has_bias) out.push_back({prefix + ".bias", &bias});
}

DepthwiseConv2d::DepthwiseConv2d(std::size_t channels, std::size_t k, Rng& rng, bool bias_, double init_std)
    : weight(randn({channels, 1, k, k}, rng, init_std > 0 ? init_std : he_std(k * k))),
      bias(Tensor::zeros({channels})),
      has_bias(bias_) {}

Conv2dParams DepthwiseConv2d::params() const {
    return {weight.value, has_bias ? bias.value : Tensor(), 1, weight.value.dim(2) / 2};
}

Tensor DepthwiseConv2d::forward(const Tensor& x) {
    x_ = x;
    return depthwise_conv2d(x, params());
}

Tensor DepthwiseConv2d::backward(const Tensor& dy) {
    Conv2dGrads g = depthwise_conv2d_backward(x_, params(), dy);
    add_inplace(weight.grad, g.dkernel);
    if (has_bias) add_inplace(bias.grad, g.dbias);
    return std::move(g.dx);
}

void DepthwiseConv2d::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight});
    if (has_bias) out.push_back({prefix + ".bias", &bias});
}

GroupNorm::GroupNorm(std::size_t channels, std::size_t groups_, double eps_)
    : gamma(Tensor::ones({channels})), beta(Tensor::zeros({channels})), groups(groups_), eps(eps_) {
    if (groups == 0 || channels % groups != 0)
        throw ShapeError("GroupNorm: " + std::to_string(channels) + " channels not divisible by " +
                         std::to_string(groups) + " groups");
}

GroupNormParams GroupNorm::params() const { return {groups, gamma.value, beta.value, eps}; }

Tensor GroupNorm::forward(const Tensor& x) {
    x_ = x;
    return group_norm(x, params());
}

Tensor GroupNorm::backward(const Tensor& dy) {
    GroupNormGrads g = group_norm_backward(x_, params(), dy);
    add_inplace(gamma.grad, g.dgamma);
    add_inplace(beta.grad, g.dbeta);
    return std::move(g.dx);
}

void GroupNorm::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
}

Ffn::Ffn(std::size_t channels, std::size_t ratio, Activation act_, Rng& rng)
    : fc1(channels, channels * ratio, 1, 1, 0, rng), fc2(channels * ratio, channels, 1, 1, 0, rng), act(act_) {}

Tensor Ffn::forward(const Tensor& x) {
    return fc2.forward(activate_with_derivative(fc1.forward(x), act, dact_));
}

Tensor Ffn::backward(const Tensor& dy) {
    const Tensor dh = fc2.backward(dy);
    return fc1.backward(mul(dh, dact_));
}

void Ffn::collect(ParamList& out, const std::string& prefix) {
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
}

InvertedResidual::InvertedResidual(std::size_t channels, std::size_t expansion, Activation act_, Rng& rng)
    : expand(channels, channels * expansion, 1, 1, 0, rng),
      depthwise(channels * expansion, 3, rng, true),
      project(channels * expansion, channels, 1, 1, 0, rng, 0.02),
      act(act_) {}

IrbParams InvertedResidual::params() const { return {expand.params(), depthwise.params(), project.params(), act}; }

Tensor InvertedResidual::forward(const Tensor& x) {
    pre1_ = expand.forward(x);
    pre2_ = depthwise.forward(activate(pre1_, act));
    return add(project.forward(activate(pre2_, act)), x);
}

Tensor InvertedResidual::backward(const Tensor& dy) {
    Tensor d = project.backward(dy);
    d = depthwise.backward(activate_backward(pre2_, d, act));
    d = expand.backward(activate_backward(pre1_, d, act));
    add_inplace(d, dy);
    return d;
}

void InvertedResidual::collect(ParamList& out, const std::string& prefix) {
    expand.collect(out, prefix + ".expand");
    depthwise.collect(out, prefix + ".depthwise");
    project.collect(out, prefix + ".project");
}

}  // namespace mew
