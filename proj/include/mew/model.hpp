#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mew/container.hpp"
#include "mew/errors.hpp"
#include "mew/mew.hpp"
#include "mew/nn.hpp"
#include "mew/param.hpp"
#include "mew/rng.hpp"

namespace mew {

struct ModelConfig {
    std::size_t in_channels = 3;
    std::size_t n_classes = 2;
    std::size_t base_width = 8;
    std::vector<std::size_t> stage_depths{1, 1, 1};
    BranchMask branch_mask;
    GeneratorMode generator_mode = GeneratorMode::generated;
    WeightKind weight_kind = WeightKind::complex;
    std::size_t ffn_ratio = 4;
    std::size_t irb_expansion = 4;
    bool dw_pointwise = true;
    Activation activation = Activation::gelu;
    bool weight_align_corners = true;
    bool upsample_align_corners = false;
    std::size_t weight_base_n1 = 8;
    std::size_t weight_base_n2 = 5;
    double weight_init_std = 0.02;
    std::size_t image_size = 64;  ///< only used to size raw-mode weights

    /// Throws ConfigError when the topology is unusable.
    void validate() const;
    std::size_t stages() const { return stage_depths.size(); }
    std::size_t width(std::size_t stage) const { return base_width << stage; }
    MewOptions mew_options() const;
};

nlohmann::json to_json(const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// MEW-UNet: stem conv, encoder stages of MEW blocks with stride-2 conv
/// downsampling, a bottleneck stage, a decoder that upsamples, adds the
/// matching encoder feature and runs MEW blocks, then a 1x1 head.
///
/// Layers cache activations: forward() and backward() of one sample must be
/// interleaved. prepare() regenerates the spectral weights; call it after
/// every parameter update.
class Model {
public:
    Model(const ModelConfig& config, Rng& rng);

    const ModelConfig& config() const { return config_; }

    /// Raw logits. Accepts [Cin,H,W] or a batch [B,Cin,H,W]; regenerates weights first.
    Tensor forward(const Tensor& x);

    void prepare(std::size_t h, std::size_t w);
    /// Single-sample forward using the weights from the last prepare().
    Tensor forward_prepared(const Tensor& x);
    /// Accumulates parameter gradients for the last forward_prepared() and
    /// returns the input gradient. Spectral weight gradients stay buffered
    /// until finish_backward().
    Tensor backward(const Tensor& dlogits);
    void finish_backward();

    ParamList params();
    std::size_t param_count();
    void zero_grad();

private:
    struct EncoderStage {
        std::vector<MewBlock> blocks;
        Conv2d down;
    };
    struct DecoderStage {
        Conv2d proj;
        std::vector<MewBlock> blocks;
        Shape up_in;
    };

    template <typename F>
    void for_each_block(F f);
    void check_input(const Tensor& x) const;

    ModelConfig config_;
    Conv2d stem_;
    std::vector<EncoderStage> encoders_;
    std::vector<MewBlock> bottleneck_;
    std::vector<DecoderStage> decoders_;  // decoders_[i] produces stage-i width
    Conv2d head_;
    std::size_t prepared_h_ = 0;
    std::size_t prepared_w_ = 0;
};

/// Malformed checkpoint or one that does not fit the model.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Writes parameters (f64 records named like params()), a manifest with the
/// config echo, names and shapes, plus any caller metadata and extra records.
void save_checkpoint(const std::filesystem::path& path, Model& model, const nlohmann::json& extra_meta = {},
                     const std::vector<Record>& extra_records = {});
/// Copies checkpoint parameters into `model`. Any difference in names or
/// shapes is reported in full and nothing is modified.
void load_parameters(Model& model, const Container& checkpoint);
/// Rebuilds the model from the checkpoint's config echo.
Model load_model(const std::filesystem::path& path);

}  // namespace mew
