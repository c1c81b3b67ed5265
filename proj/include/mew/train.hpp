#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mew/container.hpp"
#include "mew/data.hpp"
#include "mew/errors.hpp"
#include "mew/metrics.hpp"
#include "mew/model.hpp"
#include "mew/param.hpp"

namespace mew {

// ---------------------------------------------------------------------------
// Losses

struct LossWeights {
    double bce = 1.0;
    double dice = 1.0;
    double smooth = 1.0;
};

struct LossResult {
    double value = 0;
    Tensor grad;  ///< dL/dlogits, same shape as the logits
};

/// Binary BceDice on one logit map: logits [1,H,W] or [H,W], mask in {0,1}.
/// wb * mean BCE(sigmoid(z), g) + wd * (1 - (2 sum pg + s) / (sum p + sum g + s)).
LossResult bce_dice_loss(const Tensor& logits, const Tensor& mask, const LossWeights& w = {});

/// Softmax cross-entropy plus the mean over classes of one-vs-rest soft-dice loss.
LossResult multiclass_dice_ce_loss(const Tensor& logits, const Tensor& mask, const LossWeights& w = {});

/// Loss for K-channel logits. With K = 2 the binary loss is applied to the
/// logit difference z1 - z0, so the argmax prediction and the sigmoid agree.
LossResult segmentation_loss(const Tensor& logits, const Tensor& mask, const LossWeights& w = {});

// ---------------------------------------------------------------------------
// Optimizers and schedule

enum class OptimizerKind { adamw, sgd };
OptimizerKind parse_optimizer(const std::string& s);
const char* to_string(OptimizerKind k);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adamw;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;  ///< decoupled for AdamW, added to the gradient for SGD
    double momentum = 0.9;
};

class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

    /// Updates every parameter from its accumulated gradient.
    void step(const ParamList& params, double lr);
    std::size_t steps() const { return t_; }
    const OptimizerConfig& config() const { return cfg_; }

    /// State as container records ("opt.m.<name>", "opt.v.<name>") plus metadata.
    std::vector<Record> state_records(const ParamList& params) const;
    nlohmann::json state_meta() const;
    void load_state(const ParamList& params, const Container& c);

private:
    OptimizerConfig cfg_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

/// eta_min + (lr_init - eta_min) * (1 + cos(pi t / T_max)) / 2, 0 <= t <= T_max.
double cosine_annealing_lr(std::size_t t, std::size_t t_max, double lr_init, double eta_min);

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
    double lr_init = 1e-3;
    std::size_t epochs = 60;
    OptimizerConfig optimizer;
    std::size_t batch_size = 8;
    double eta_min = 1e-5;
    std::uint64_t seed = 0;
    AugmentConfig augment;
    LossWeights loss;
    std::size_t eval_every = 1;  ///< evaluate the test split every n epochs (and at the end)

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochStats {
    std::size_t epoch = 0;
    double lr = 0;
    double loss = 0;
    std::optional<MetricReport> test;
};

/// Owns the optimizer state for one model. Every random draw derives from
/// TrainConfig::seed and the epoch index, so runs are reproducible bit for bit.
class Trainer {
public:
    Trainer(Model& model, TrainConfig cfg);

    /// Shuffle, augment, forward/backward per sample, one optimizer step per
    /// batch. Throws NumericError on a non-finite loss.
    EpochStats train_epoch(const Dataset& train, std::size_t epoch);
    /// Mean loss of one optimizer step over `batch` (no augmentation).
    double train_step(const std::vector<const SegmentationSample*>& batch, double lr);

    Optimizer& optimizer() { return opt_; }
    const TrainConfig& config() const { return cfg_; }

private:
    Model& model_;
    TrainConfig cfg_;
    Optimizer opt_;
};

MetricReport evaluate(Model& model, const Dataset& data);

/// Full run: trains for cfg.epochs, evaluating on `test` per eval_every.
/// `on_epoch` sees each epoch's stats as they complete.
std::vector<EpochStats> train(Model& model, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace mew
