#pragma once

#include <cstddef>
#include <string>

#include "mew/param.hpp"
#include "mew/rng.hpp"
#include "mew/tensor.hpp"

namespace mew {

enum class Activation { gelu, identity };

Activation parse_activation(const std::string& s);
const char* to_string(Activation a);

double gelu(double x);
double gelu_derivative(double x);
Tensor activate(const Tensor& x, Activation act);
Tensor activate_backward(const Tensor& x, const Tensor& dy, Activation act);
/// activate() that also returns the elementwise derivative at x.
Tensor activate_with_derivative(const Tensor& x, Activation act, Tensor& derivative);

/// Dense cross-correlation parameters. An empty `bias` means no bias term.
struct Conv2dParams {
    Tensor kernel;  // [Cout, Cin, kh, kw]
    Tensor bias;    // [Cout] or empty
    std::size_t stride = 1;
    std::size_t padding = 0;
};

struct Conv2dGrads {
    Tensor dx;
    Tensor dkernel;
    Tensor dbias;  // empty when the layer has no bias
};

Shape conv2d_output_shape(const Shape& x, const Conv2dParams& p);
Tensor conv2d(const Tensor& x, const Conv2dParams& p);
Conv2dGrads conv2d_backward(const Tensor& x, const Conv2dParams& p, const Tensor& dy);

/// Per-channel convolution; kernel is [C, 1, kh, kw], stride 1.
Tensor depthwise_conv2d(const Tensor& x, const Conv2dParams& p);
Conv2dGrads depthwise_conv2d_backward(const Tensor& x, const Conv2dParams& p, const Tensor& dy);

/// 3x3 depthwise pass (padding 1, no bias) followed by 1x1 pointwise mixing.
Tensor dw_separable_conv(const Tensor& x, const Tensor& dw_kernel, const Conv2dParams& pw);

struct GroupNormParams {
    std::size_t groups = 4;
    Tensor gamma;  // [C]
    Tensor beta;   // [C]
    double eps = 1e-5;
};

struct GroupNormGrads {
    Tensor dx;
    Tensor dgamma;
    Tensor dbeta;
};

Tensor group_norm(const Tensor& x, const GroupNormParams& p);
GroupNormGrads group_norm_backward(const Tensor& x, const GroupNormParams& p, const Tensor& dy);

struct FfnParams {
    Conv2dParams fc1;  // 1x1, C -> rC
    Conv2dParams fc2;  // 1x1, rC -> C
    Activation act = Activation::gelu;
};

Tensor ffn(const Tensor& x, const FfnParams& p);

/// Bilinear resize of the last two axes of [C,h,w]. align_corners maps corner
/// samples exactly; otherwise half-pixel centres are used.
Tensor bilinear_interp(const Tensor& x, std::size_t out_h, std::size_t out_w, bool align_corners = true);
Tensor bilinear_interp_backward(const Tensor& dy, const Shape& in_shape, bool align_corners = true);

struct IrbParams {
    Conv2dParams expand;   // 1x1, C -> eC
    Conv2dParams depthwise;  // [eC,1,3,3], padding 1
    Conv2dParams project;  // 1x1, eC -> C
    Activation act = Activation::gelu;
};

/// expand -> act -> depthwise 3x3 -> act -> project, plus identity residual.
Tensor inverted_residual_block(const Tensor& x, const IrbParams& p);

// ---------------------------------------------------------------------------
// Trainable layers: forward caches what backward needs; backward accumulates
// parameter gradients and returns the input gradient.

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t padding, Rng& rng,
           double init_std = 0.0, bool bias = true);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(ParamList& out, const std::string& prefix);
    Conv2dParams params() const;

    Param weight;
    Param bias;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool has_bias = true;

private:
    Tensor x_;
};

class DepthwiseConv2d {
public:
    DepthwiseConv2d() = default;
    DepthwiseConv2d(std::size_t channels, std::size_t k, Rng& rng, bool bias, double init_std = 0.0);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(ParamList& out, const std::string& prefix);
    Conv2dParams params() const;

    Param weight;
    Param bias;
    bool has_bias = true;

private:
    Tensor x_;
};

class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(std::size_t channels, std::size_t groups, double eps = 1e-5);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(ParamList& out, const std::string& prefix);
    GroupNormParams params() const;

    Param gamma;
    Param beta;
    std::size_t groups = 4;
    double eps = 1e-5;

private:
    Tensor x_;
};

class Ffn {
public:
    Ffn() = default;
    Ffn(std::size_t channels, std::size_t ratio, Activation act, Rng& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(ParamList& out, const std::string& prefix);

    Conv2d fc1;
    Conv2d fc2;
    Activation act = Activation::gelu;

private:
    Tensor dact_;
};

class InvertedResidual {
public:
    InvertedResidual() = default;
    InvertedResidual(std::size_t channels, std::size_t expansion, Activation act, Rng& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(ParamList& out, const std::string& prefix);
    IrbParams params() const;

    Conv2d expand;
    DepthwiseConv2d depthwise;
    Conv2d project;
    Activation act = Activation::gelu;

private:
    Tensor pre1_;
    Tensor pre2_;
};

}  // namespace mew
