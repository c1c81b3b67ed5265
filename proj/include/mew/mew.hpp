#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>

#include "mew/nn.hpp"
#include "mew/param.hpp"
#include "mew/rng.hpp"
#include "mew/spectral.hpp"
#include "mew/tensor.hpp"

namespace mew {

/// Which of the four channel branches are active. A disabled branch passes its
/// channel slice through unchanged.
struct BranchMask {
    bool dw = true;
    bool hw = true;
    bool cw = true;
    bool ch = true;

    /// Parses a comma list such as "dw,hw,cw,ch" (empty string or "none" disables all).
    static BranchMask parse(const std::string& text);
    std::string str() const;
    bool operator==(const BranchMask&) const = default;
};

enum class GeneratorMode { generated, raw };
enum class WeightKind { complex, real };

GeneratorMode parse_generator_mode(const std::string& s);
const char* to_string(GeneratorMode m);
WeightKind parse_weight_kind(const std::string& s);
const char* to_string(WeightKind k);

struct MewOptions {
    BranchMask mask;
    GeneratorMode generator = GeneratorMode::generated;
    WeightKind weight_kind = WeightKind::complex;
    bool dw_pointwise = true;
    Activation act = Activation::gelu;
    bool align_corners = true;
    std::size_t base_n1 = 8;  ///< w_init extent along the first transformed axis
    std::size_t base_n2 = 5;  ///< w_init stored half extent (an 8x8 grid's half spectrum)
    std::size_t irb_expansion = 4;
    double init_std = 0.02;
};

/// Produces the complex spectral weight of one axis pair, sized to the
/// branch's half spectrum. Generated mode: w_init (two real planes) is resized
/// bilinearly and passed through an inverted residual block whose channels are
/// the real/imaginary planes. Raw mode: the weight is a learnable tensor
/// already at its target shape.
class WeightGenerator {
public:
    WeightGenerator() = default;
    /// `raw_target` (n1, n2_half) is required in raw mode.
    WeightGenerator(AxisPair axes, const MewOptions& opt, Rng& rng,
                    std::optional<std::array<std::size_t, 2>> raw_target = std::nullopt);

    /// Weight of shape [n1, n2_half]; caches intermediates for backward.
    ComplexTensor generate(std::size_t n1, std::size_t n2_half);
    /// Back-propagates a weight gradient (g = dL/dRe + i dL/dIm) into the parameters.
    void backward(const ComplexTensor& grad);
    void collect(ParamList& out, const std::string& prefix);

    AxisPair axes;
    GeneratorMode mode = GeneratorMode::generated;
    WeightKind kind = WeightKind::complex;
    bool align_corners = true;
    Param init;
    InvertedResidual irb;

private:
    Shape resized_shape_;
};

/// The three spectral weights owned by one block.
struct ExternalWeightSet {
    WeightGenerator hw;
    WeightGenerator cw;
    WeightGenerator ch;

    WeightGenerator& get(AxisPair axes);
};

/// Multi-axis external weights mixer: split into four channel slices, gate
/// slices 1-3 in the frequency domain over (H,W), (C,W), (C,H), run a
/// depthwise-separable conv on slice 4, concatenate and add the input.
class MewMixer {
public:
    MewMixer() = default;
    /// (height, width) is only needed in raw generator mode.
    MewMixer(std::size_t channels, const MewOptions& opt, Rng& rng, std::size_t height = 0, std::size_t width = 0);

    /// Regenerates the spectral weights for inputs of [channels, h, w] and
    /// clears the accumulated weight gradients.
    void prepare(std::size_t h, std::size_t w);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    /// Pushes weight gradients accumulated since prepare() through the generators.
    void finish_backward();
    void collect(ParamList& out, const std::string& prefix);

    /// Current generated weight for one branch, [n1, n2_half].
    const ComplexTensor& weight(AxisPair axes) const;

    std::size_t channels = 0;
    BranchMask mask;
    ExternalWeightSet weights;
    DepthwiseConv2d dw;
    Conv2d pw;
    bool dw_pointwise = true;

private:
    struct Branch {
        AxisPair axes;
        ComplexTensor weight;       // [n1, n2_half]
        ComplexTensor weight_grad;  // accumulated over backward calls
        ComplexTensor spectrum;     // cached rdft2 of the last input slice
        ComplexTensor expanded;     // weight broadcast to the spectrum shape
        Shape slice_shape;
    };

    Tensor spectral_forward(Branch& b, const Tensor& x);
    Tensor spectral_backward(Branch& b, const Tensor& dy);
    bool enabled(std::size_t i) const;

    std::array<Branch, 3> branches_;
    std::size_t prepared_h_ = 0;
    std::size_t prepared_w_ = 0;
};

/// Broadcast a [n1, n2_half] weight over the untransformed axis of a spectrum.
ComplexTensor broadcast_weight(const ComplexTensor& w, AxisPair axes, const Shape& spectrum_shape);
/// Adjoint of broadcast_weight: sum over the untransformed axis.
ComplexTensor reduce_weight_grad(const ComplexTensor& g, AxisPair axes);

/// Pre-norm block: X' = MEW(GN(X)) + X, Y = FFN(GN(X')) + X'.
class MewBlock {
public:
    MewBlock() = default;
    MewBlock(std::size_t channels, std::size_t ffn_ratio, const MewOptions& opt, Rng& rng, std::size_t height = 0,
             std::size_t width = 0);

    void prepare(std::size_t h, std::size_t w) { mixer.prepare(h, w); }
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void finish_backward() { mixer.finish_backward(); }
    void collect(ParamList& out, const std::string& prefix);

    GroupNorm norm1;
    MewMixer mixer;
    GroupNorm norm2;
    Ffn ffn;
};

}  // namespace mew
