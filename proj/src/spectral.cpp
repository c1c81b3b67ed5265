#include "mew/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace mew {

void AxisPair::validate() const {
    if (first < 0 || first > 2 || second < 0 || second > 2 || first == second)
        throw ShapeError("invalid axis pair (" + std::to_string(first) + "," + std::to_string(second) + ")");
}

const char* axis_pair_name(AxisPair axes) {
    if (axes == kAxesHW) return "HW";
    if (axes == kAxesCW) return "CW";
    if (axes == kAxesCH) return "CH";
    return "custom";
}

SpectrumLayout SpectrumLayout::of(const Shape& real_shape, AxisPair axes) {
    axes.validate();
    if (real_shape.size() != 3) throw ShapeError("spectral ops expect rank-3 tensors, got " + shape_str(real_shape));
    SpectrumLayout l;
    l.n1 = real_shape[static_cast<std::size_t>(axes.first)];
    l.n2 = real_shape[static_cast<std::size_t>(axes.second)];
    l.n2_half = l.n2 / 2 + 1;
    l.other = real_shape[static_cast<std::size_t>(axes.untransformed())];
    return l;
}

Shape SpectrumLayout::spectrum_shape(AxisPair axes) const {
    Shape s(3);
    s[static_cast<std::size_t>(axes.first)] = n1;
    s[static_cast<std::size_t>(axes.second)] = n2_half;
    s[static_cast<std::size_t>(axes.untransformed())] = other;
    return s;
}

// ---------------------------------------------------------------------------
// FFT

FftPlan::FftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw ShapeError("FFT length must be positive");
    std::size_t rest = n;
    std::size_t p = 4;
    while (rest > 1) {
        while (rest % p != 0) p = (p == 4) ? 2 : (p == 2) ? 3 : p + 2;
        rest /= p;
        factors_.push_back(p);
        factors_.push_back(rest);
    }
    twiddles_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        twiddles_[k] = {std::cos(phase), std::sin(phase)};
    }
}

void FftPlan::transform(const cplx* in, cplx* out, bool inverse) const {
    if (n_ == 1) {
        out[0] = in[0];
        return;
    }
    work(out, in, 1, 0, inverse);
}

void FftPlan::work(cplx* out, const cplx* in, std::size_t fstride, std::size_t factor, bool inverse) const {
    const std::size_t p = factors_[factor];
    const std::size_t m = factors_[factor + 1];
    if (m == 1) {
        for (std::size_t j = 0; j < p; ++j) out[j] = in[j * fstride];
    } else {
        for (std::size_t j = 0; j < p; ++j) work(out + j * m, in + j * fstride, fstride * p, factor + 2, inverse);
    }
    if (p == 2)
        butterfly2(out, fstride, m, inverse);
    else if (p == 4)
        butterfly4(out, fstride, m, inverse);
    else
        butterfly_generic(out, fstride, m, p, inverse);
}

void FftPlan::butterfly2(cplx* out, std::size_t fstride, std::size_t m, bool inverse) const {
    for (std::size_t k = 0; k < m; ++k) {
        cplx tw = twiddles_[k * fstride];
        if (inverse) tw = std::conj(tw);
        const cplx t = out[m + k] * tw;
        out[m + k] = out[k] - t;
        out[k] += t;
    }
}

void FftPlan::butterfly4(cplx* out, std::size_t fstride, std::size_t m, bool inverse) const {
    for (std::size_t k = 0; k < m; ++k) {
        cplx w1 = twiddles_[k * fstride], w2 = twiddles_[2 * k * fstride], w3 = twiddles_[3 * k * fstride];
        if (inverse) {
            w1 = std::conj(w1);
            w2 = std::conj(w2);
            w3 = std::conj(w3);
        }
        const cplx s0 = out[m + k] * w1;
        const cplx s1 = out[2 * m + k] * w2;
        const cplx s2 = out[3 * m + k] * w3;
        const cplx s5 = out[k] - s1;
        const cplx a = out[k] + s1;
        const cplx s3 = s0 + s2;
        const cplx s4 = s0 - s2;
        out[2 * m + k] = a - s3;
        out[k] = a + s3;
        if (inverse) {
            out[m + k] = {s5.real() - s4.imag(), s5.imag() + s4.real()};
            out[3 * m + k] = {s5.real() + s4.imag(), s5.imag() - s4.real()};
        } else {
            out[m + k] = {s5.real() + s4.imag(), s5.imag() - s4.real()};
            out[3 * m + k] = {s5.real() - s4.imag(), s5.imag() + s4.real()};
        }
    }
}

void FftPlan::butterfly_generic(cplx* out, std::size_t fstride, std::size_t m, std::size_t p,
                                bool inverse) const {
    std::array<cplx, 64> small{};
    std::vector<cplx> big;
    cplx* scratch = small.data();
    if (p > small.size()) {
        big.resize(p);
        scratch = big.data();
    }
    for (std::size_t u = 0; u < m; ++u) {
        for (std::size_t q = 0; q < p; ++q) scratch[q] = out[u + q * m];
        for (std::size_t q1 = 0; q1 < p; ++q1) {
            const std::size_t k = u + q1 * m;
            std::size_t idx = 0;
            cplx acc = scratch[0];
            for (std::size_t q = 1; q < p; ++q) {
                idx += fstride * k;
                idx %= n_;
                const cplx tw = inverse ? std::conj(twiddles_[idx]) : twiddles_[idx];
                acc += scratch[q] * tw;
            }
            out[k] = acc;
        }
    }
}

const FftPlan& fft_plan(std::size_t n) {
    static std::mutex mu;
    static std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<FftPlan>(n);
    return *slot;
}

// ---------------------------------------------------------------------------
// Axis permutation: transforms run on a [other, n1, n2] layout.

namespace {

std::array<int, 3> work_order(AxisPair axes) { return {axes.untransformed(), axes.first, axes.second}; }

/// Copy `src` (shape `shape`, original axis order) into the work layout.
template <typename T>
std::vector<T> to_work(std::span<const T> src, const Shape& shape, std::array<int, 3> order) {
    const std::array<std::size_t, 3> strides{shape[1] * shape[2], shape[2], 1};
    const std::size_t d0 = shape[order[0]], d1 = shape[order[1]], d2 = shape[order[2]];
    const std::size_t s0 = strides[order[0]], s1 = strides[order[1]], s2 = strides[order[2]];
    std::vector<T> out(d0 * d1 * d2);
    std::size_t o = 0;
    for (std::size_t i = 0; i < d0; ++i)
        for (std::size_t j = 0; j < d1; ++j)
            for (std::size_t k = 0; k < d2; ++k) out[o++] = src[i * s0 + j * s1 + k * s2];
    return out;
}

/// Inverse of to_work: `work` has shape (shape[order[0]], shape[order[1]], shape[order[2]]).
template <typename T>
void from_work(const std::vector<T>& work, std::span<T> dst, const Shape& shape, std::array<int, 3> order) {
    const std::array<std::size_t, 3> strides{shape[1] * shape[2], shape[2], 1};
    const std::size_t d0 = shape[order[0]], d1 = shape[order[1]], d2 = shape[order[2]];
    const std::size_t s0 = strides[order[0]], s1 = strides[order[1]], s2 = strides[order[2]];
    std::size_t o = 0;
    for (std::size_t i = 0; i < d0; ++i)
        for (std::size_t j = 0; j < d1; ++j)
            for (std::size_t k = 0; k < d2; ++k) dst[i * s0 + j * s1 + k * s2] = work[o++];
}

/// In-place FFT along the n1 axis of a [other, n1, cols] work buffer.
void fft_columns(std::vector<cplx>& buf, std::size_t other, std::size_t n1, std::size_t cols, bool inverse) {
    if (n1 == 1) return;
    const FftPlan& plan = fft_plan(n1);
    std::vector<cplx> col(n1), res(n1);
    for (std::size_t u = 0; u < other; ++u) {
        cplx* base = buf.data() + u * n1 * cols;
        for (std::size_t k = 0; k < cols; ++k) {
            for (std::size_t i = 0; i < n1; ++i) col[i] = base[i * cols + k];
            plan.transform(col.data(), res.data(), inverse);
            for (std::size_t i = 0; i < n1; ++i) base[i * cols + k] = res[i];
        }
    }
}

/// Forward: real rows of length n2 -> half spectra, scaled per column by `col_scale`.
std::vector<cplx> forward_impl(const Tensor& x, AxisPair axes, bool weighted_adjoint) {
    const SpectrumLayout l = SpectrumLayout::of(x.shape(), axes);
    const auto order = work_order(axes);
    const std::vector<double> xw = to_work<double>(x.data(), x.shape(), order);
    const FftPlan& plan = fft_plan(l.n2);
    std::vector<cplx> spec(l.other * l.n1 * l.n2_half);
    std::vector<cplx> row(l.n2), res(l.n2);
    const double inv_n = 1.0 / static_cast<double>(l.n1 * l.n2);
    for (std::size_t r = 0; r < l.other * l.n1; ++r) {
        for (std::size_t j = 0; j < l.n2; ++j) row[j] = {xw[r * l.n2 + j], 0.0};
        plan.transform(row.data(), res.data(), false);
        for (std::size_t k = 0; k < l.n2_half; ++k) {
            cplx v = res[k];
            if (weighted_adjoint) v *= l.column_weight(k) * inv_n;
            spec[r * l.n2_half + k] = v;
        }
    }
    fft_columns(spec, l.other, l.n1, l.n2_half, false);
    return spec;
}

Tensor inverse_impl(const ComplexTensor& s, AxisPair axes, const Shape& real_shape, bool adjoint) {
    const SpectrumLayout l = SpectrumLayout::of(real_shape, axes);
    if (s.shape() != l.spectrum_shape(axes))
        throw ShapeError("irdft2: spectrum shape " + shape_str(s.shape()) + " inconsistent with real shape " +
                         shape_str(real_shape));
    const auto order = work_order(axes);
    std::vector<cplx> spec = to_work<cplx>(s.data(), s.shape(), order);
    fft_columns(spec, l.other, l.n1, l.n2_half, true);
    const FftPlan& plan = fft_plan(l.n2);
    std::vector<cplx> ext(l.n2), res(l.n2);
    std::vector<double> out(l.other * l.n1 * l.n2);
    const double norm = adjoint ? 1.0 : 1.0 / static_cast<double>(l.n1 * l.n2);
    for (std::size_t r = 0; r < l.other * l.n1; ++r) {
        const cplx* z = spec.data() + r * l.n2_half;
        ext[0] = {z[0].real(), 0.0};
        for (std::size_t k = 1; k < l.n2_half; ++k) {
            if (2 * k == l.n2) {
                ext[k] = {z[k].real(), 0.0};
            } else {
                // The adjoint of the forward transform counts every stored column once.
                const cplx v = adjoint ? 0.5 * z[k] : z[k];
                ext[k] = v;
                ext[l.n2 - k] = std::conj(v);
            }
        }
        plan.transform(ext.data(), res.data(), true);
        for (std::size_t j = 0; j < l.n2; ++j) out[r * l.n2 + j] = res[j].real() * norm;
    }
    Tensor x(real_shape);
    from_work<double>(out, x.data(), real_shape, order);
    return x;
}

ComplexTensor wrap_spectrum(std::vector<cplx> work, const Shape& real_shape, AxisPair axes) {
    const SpectrumLayout l = SpectrumLayout::of(real_shape, axes);
    const Shape sshape = l.spectrum_shape(axes);
    ComplexTensor s(sshape);
    from_work<cplx>(work, s.data(), sshape, work_order(axes));
    return s;
}

}  // namespace

ComplexTensor rdft2(const Tensor& x, AxisPair axes) {
    return wrap_spectrum(forward_impl(x, axes, false), x.shape(), axes);
}

Tensor irdft2(const ComplexTensor& s, AxisPair axes, const Shape& real_shape) {
    return inverse_impl(s, axes, real_shape, false);
}

Tensor rdft2_backward(const ComplexTensor& grad, AxisPair axes, const Shape& real_shape) {
    return inverse_impl(grad, axes, real_shape, true);
}

ComplexTensor irdft2_backward(const Tensor& grad, AxisPair axes) {
    return wrap_spectrum(forward_impl(grad, axes, true), grad.shape(), axes);
}

ComplexTensor spectral_mul(const ComplexTensor& a, const ComplexTensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("spectral_mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    ComplexTensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

SpectralMulGrads spectral_mul_backward(const ComplexTensor& grad, const ComplexTensor& a, const ComplexTensor& b) {
    if (grad.shape() != a.shape() || a.shape() != b.shape()) throw ShapeError("spectral_mul_backward: shape mismatch");
    SpectralMulGrads g{ComplexTensor(a.shape()), ComplexTensor(a.shape())};
    for (std::size_t i = 0; i < a.size(); ++i) {
        g.da[i] = grad[i] * std::conj(b[i]);
        g.db[i] = grad[i] * std::conj(a[i]);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Strength curves

namespace {

/// |spectrum| averaged over the untransformed axis, flattened in (n1, n2_half) order.
std::vector<double> mean_magnitude(const Tensor& patch, AxisPair axes) {
    const ComplexTensor s = rdft2(patch, axes);
    const SpectrumLayout l = SpectrumLayout::of(patch.shape(), axes);
    const auto order = work_order(axes);
    const std::vector<cplx> w = to_work<cplx>(s.data(), s.shape(), order);
    std::vector<double> mean(l.n1 * l.n2_half, 0.0);
    for (std::size_t u = 0; u < l.other; ++u)
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += std::abs(w[u * mean.size() + i]);
    for (double& v : mean) v /= static_cast<double>(l.other);
    return mean;
}

}  // namespace

std::vector<double> signal_strength_curve(const Tensor& patch, CurveMode mode) {
    if (patch.rank() != 3) throw ShapeError("signal_strength_curve expects [C,H,W]");
    std::vector<double> curve = mean_magnitude(patch, kAxesHW);
    if (mode == CurveMode::multi) {
        const double hw = static_cast<double>(patch.dim(1) * patch.dim(2));
        for (AxisPair axes : {kAxesCW, kAxesCH}) {
            const SpectrumLayout l = SpectrumLayout::of(patch.shape(), axes);
            const double rescale = hw / static_cast<double>(l.n1 * l.n2);
            for (double v : mean_magnitude(patch, axes)) curve.push_back(v * rescale);
        }
    }
    std::sort(curve.begin(), curve.end(), std::greater<>());
    return curve;
}

std::size_t count_intersections(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = std::max(a.size(), b.size());
    double scale = 0.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    for (double v : b) scale = std::max(scale, std::abs(v));
    const double tol = 1e-9 * scale;
    int prev = 0;
    std::size_t crossings = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (i < a.size() ? a[i] : 0.0) - (i < b.size() ? b[i] : 0.0);
        if (std::abs(d) <= tol) continue;
        const int sign = d > 0 ? 1 : -1;
        if (prev != 0 && sign != prev) ++crossings;
        prev = sign;
    }
    return crossings;
}

}  // namespace mew
