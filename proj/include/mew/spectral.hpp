#pragma once

#include <cstddef>
#include <vector>

#include "mew/tensor.hpp"

namespace mew {

/// Pair of transformed axes of a rank-3 [C,H,W] tensor. The half spectrum is
/// stored along `second`; `first` keeps its full extent.
struct AxisPair {
    int first = 1;
    int second = 2;

    int untransformed() const { return 3 - first - second; }
    void validate() const;
    bool operator==(const AxisPair&) const = default;
};

inline constexpr AxisPair kAxesHW{1, 2};
inline constexpr AxisPair kAxesCW{0, 2};
inline constexpr AxisPair kAxesCH{0, 1};

const char* axis_pair_name(AxisPair axes);

/// Extents involved in one real-input 2D transform.
struct SpectrumLayout {
    std::size_t n1 = 0;      ///< full extent of axes.first
    std::size_t n2 = 0;      ///< original extent of axes.second
    std::size_t n2_half = 0; ///< stored extent: floor(n2/2)+1
    std::size_t other = 0;   ///< extent of the untransformed axis

    static SpectrumLayout of(const Shape& real_shape, AxisPair axes);
    /// Shape of the stored spectrum, in the original axis order.
    Shape spectrum_shape(AxisPair axes) const;
    /// 1 for the DC column and (even n2) the Nyquist column, 2 otherwise.
    double column_weight(std::size_t k) const { return (k == 0 || 2 * k == n2) ? 1.0 : 2.0; }
};

/// Mixed-radix complex FFT of a fixed length (unnormalized both ways).
class FftPlan {
public:
    explicit FftPlan(std::size_t n);
    std::size_t size() const { return n_; }
    /// out[k] = sum_j in[j] exp(-2 pi i jk/n); `inverse` flips the sign. in != out.
    void transform(const cplx* in, cplx* out, bool inverse) const;

private:
    void work(cplx* out, const cplx* in, std::size_t fstride, std::size_t factor, bool inverse) const;
    void butterfly2(cplx* out, std::size_t fstride, std::size_t m, bool inverse) const;
    void butterfly4(cplx* out, std::size_t fstride, std::size_t m, bool inverse) const;
    void butterfly_generic(cplx* out, std::size_t fstride, std::size_t m, std::size_t p, bool inverse) const;

    std::size_t n_;
    std::vector<std::size_t> factors_;  // (radix, remaining length) pairs
    std::vector<cplx> twiddles_;
};

/// Cached plan for length n; safe to call from several threads.
const FftPlan& fft_plan(std::size_t n);

/// Forward real 2D DFT over `axes`, unnormalized, half spectrum along axes.second.
ComplexTensor rdft2(const Tensor& x, AxisPair axes);
/// Inverse of rdft2; applies 1/(n1*n2). `real_shape` disambiguates odd/even n2.
Tensor irdft2(const ComplexTensor& s, AxisPair axes, const Shape& real_shape);

/// Pointwise complex product of equally shaped spectra.
ComplexTensor spectral_mul(const ComplexTensor& a, const ComplexTensor& b);

// Adjoints. Complex gradients use the convention g = dL/dRe + i dL/dIm.
Tensor rdft2_backward(const ComplexTensor& grad, AxisPair axes, const Shape& real_shape);
ComplexTensor irdft2_backward(const Tensor& grad, AxisPair axes);

struct SpectralMulGrads {
    ComplexTensor da;
    ComplexTensor db;
};
SpectralMulGrads spectral_mul_backward(const ComplexTensor& grad, const ComplexTensor& a, const ComplexTensor& b);

enum class CurveMode { single, multi };

/// Sorted (descending) magnitude spectrum of a [C,H,W] patch.
///
/// single: |rdft2(patch, HW)| averaged over channels.
/// multi: the HW, CW and CH magnitude spectra, each averaged over its
/// untransformed axis and rescaled by (H*W)/(n1*n2) so that a sinusoid of a
/// given amplitude has the same strength on every axis pair, concatenated.
/// This is an operational definition of "frequency signal strength".
std::vector<double> signal_strength_curve(const Tensor& patch, CurveMode mode);

/// Number of strict sign changes of a - b along the index (shorter curve
/// zero-padded; differences within 1e-9 of the curve scale are ties and skipped).
std::size_t count_intersections(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mew
