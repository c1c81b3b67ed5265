#include "mew/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mew {

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_labels(const Tensor& mask, std::size_t n_classes) {
    for (double v : mask.data())
        if (!(v >= 0) || v != std::floor(v) || v >= static_cast<double>(n_classes))
            throw std::invalid_argument("mask value " + std::to_string(v) + " outside [0," + std::to_string(n_classes) +
                                        ")");
}

}  // namespace

LossResult bce_dice_loss(const Tensor& logits, const Tensor& mask, const LossWeights& w) {
    if (logits.size() != mask.size() || mask.rank() != 2)
        throw ShapeError("bce_dice_loss: logits " + shape_str(logits.shape()) + " do not match mask " +
                         shape_str(mask.shape()));
    check_labels(mask, 2);
    const std::size_t n = logits.size();
    std::vector<double> bce(n), p(n), pg(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits[i], g = mask[i];
        bce[i] = softplus(z) - g * z;
        p[i] = sigmoid(z);
        pg[i] = p[i] * g;
    }
    const double N = static_cast<double>(n);
    const double I = pairwise_sum(pg), P = pairwise_sum(p), G = sum(mask);
    const double den = P + G + w.smooth;
    const double dice = (2 * I + w.smooth) / den;
    LossResult r;
    r.value = w.bce * pairwise_sum(bce) / N + w.dice * (1.0 - dice);
    r.grad = Tensor(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double g = mask[i];
        const double ddice_dp = (2 * g * den - (2 * I + w.smooth)) / (den * den);
        r.grad[i] = w.bce * (p[i] - g) / N - w.dice * ddice_dp * p[i] * (1.0 - p[i]);
    }
    return r;
}

LossResult multiclass_dice_ce_loss(const Tensor& logits, const Tensor& mask, const LossWeights& w) {
    if (logits.rank() != 3 || mask.rank() != 2 || logits.dim(1) != mask.dim(0) || logits.dim(2) != mask.dim(1))
        throw ShapeError("multiclass loss: logits " + shape_str(logits.shape()) + " do not match mask " +
                         shape_str(mask.shape()));
    const std::size_t K = logits.dim(0), n = mask.size();
    check_labels(mask, K);
    const double N = static_cast<double>(n);
    Tensor p(logits.shape());
    std::vector<double> ce(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits[i];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, logits[k * n + i]);
        double z = 0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[k * n + i] - mx);
        for (std::size_t k = 0; k < K; ++k) p[k * n + i] = std::exp(logits[k * n + i] - mx) / z;
        const std::size_t y = static_cast<std::size_t>(mask[i]);
        ce[i] = -(logits[y * n + i] - mx - std::log(z));
    }
    // dL/dp for the dice part, then through the softmax Jacobian.
    Tensor dp(logits.shape());
    double dice_loss = 0;
    std::vector<double> pg(n), pk(n), gk(n);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            gk[i] = mask[i] == static_cast<double>(k) ? 1.0 : 0.0;
            pk[i] = p[k * n + i];
            pg[i] = pk[i] * gk[i];
        }
        const double I = pairwise_sum(pg), P = pairwise_sum(pk), G = pairwise_sum(gk);
        const double den = P + G + w.smooth;
        dice_loss += 1.0 - (2 * I + w.smooth) / den;
        for (std::size_t i = 0; i < n; ++i)
            dp[k * n + i] = -w.dice / static_cast<double>(K) * (2 * gk[i] * den - (2 * I + w.smooth)) / (den * den);
    }
    LossResult r;
    r.value = w.bce * pairwise_sum(ce) / N + w.dice * dice_loss / static_cast<double>(K);
    r.grad = Tensor(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0;
        for (std::size_t k = 0; k < K; ++k) dot += p[k * n + i] * dp[k * n + i];
        const std::size_t y = static_cast<std::size_t>(mask[i]);
        for (std::size_t k = 0; k < K; ++k) {
            const double pk_i = p[k * n + i];
            r.grad[k * n + i] = w.bce * (pk_i - (k == y ? 1.0 : 0.0)) / N + pk_i * (dp[k * n + i] - dot);
        }
    }
    return r;
}

LossResult segmentation_loss(const Tensor& logits, const Tensor& mask, const LossWeights& w) {
    if (logits.rank() != 3) throw ShapeError("segmentation_loss expects [K,H,W] logits");
    if (logits.dim(0) != 2) return multiclass_dice_ce_loss(logits, mask, w);
    const std::size_t n = mask.size();
    if (logits.dim(1) * logits.dim(2) != n) throw ShapeError("segmentation_loss: logits do not match mask");
    Tensor diff(mask.shape());
    for (std::size_t i = 0; i < n; ++i) diff[i] = logits[n + i] - logits[i];
    LossResult b = bce_dice_loss(diff, mask, w);
    LossResult r;
    r.value = b.value;
    r.grad = Tensor(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        r.grad[i] = -b.grad[i];
        r.grad[n + i] = b.grad[i];
    }
    return r;
}

// ---------------------------------------------------------------------------

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adamw") return OptimizerKind::adamw;
    if (s == "sgd") return OptimizerKind::sgd;
    throw ConfigError("unknown optimizer '" + s + "' (expected adamw or sgd)");
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adamw"; }

void Optimizer::step(const ParamList& params, double lr) {
    if (m_.empty()) {
        for (const NamedParam& p : params) {
            m_.push_back(Tensor::zeros(p.param->value.shape()));
            if (cfg_.kind == OptimizerKind::adamw) v_.push_back(Tensor::zeros(p.param->value.shape()));
        }
    }
    if (m_.size() != params.size()) throw ShapeError("optimizer state does not match the parameter list");
    ++t_;
    const double t = static_cast<double>(t_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t), bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Param& p = *params[k].param;
        if (p.grad.shape() != p.value.shape() || m_[k].shape() != p.value.shape())
            throw ShapeError("optimizer: shape mismatch for " + params[k].name);
        double* x = p.value.ptr();
        const double* g = p.grad.ptr();
        double* m = m_[k].ptr();
        if (cfg_.kind == OptimizerKind::adamw) {
            double* v = v_[k].ptr();
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                x[i] -= lr * cfg_.weight_decay * x[i];
                m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
                x[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
            }
        } else {
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double gi = g[i] + cfg_.weight_decay * x[i];
                m[i] = cfg_.momentum * m[i] + gi;
                x[i] -= lr * m[i];
            }
        }
    }
}

std::vector<Record> Optimizer::state_records(const ParamList& params) const {
    std::vector<Record> out;
    for (std::size_t k = 0; k < m_.size() && k < params.size(); ++k) {
        out.push_back({"opt.m." + params[k].name, m_[k], DType::f64});
        if (k < v_.size()) out.push_back({"opt.v." + params[k].name, v_[k], DType::f64});
    }
    return out;
}

nlohmann::json Optimizer::state_meta() const {
    return {{"kind", to_string(cfg_.kind)}, {"step", t_}};
}

void Optimizer::load_state(const ParamList& params, const Container& c) {
    const nlohmann::json meta = c.meta.value("optimizer", nlohmann::json::object());
    if (meta.value("kind", std::string(to_string(cfg_.kind))) != to_string(cfg_.kind))
        throw CheckpointError("checkpoint optimizer kind differs from the configured one");
    t_ = meta.value("step", std::size_t{0});
    m_.clear();
    v_.clear();
    if (t_ == 0) return;
    for (const NamedParam& p : params) {
        const Record* m = c.find("opt.m." + p.name);
        if (!m || m->tensor.shape() != p.param->value.shape())
            throw CheckpointError("checkpoint lacks optimizer state for " + p.name);
        m_.push_back(m->tensor);
        if (cfg_.kind == OptimizerKind::adamw) {
            const Record* v = c.find("opt.v." + p.name);
            if (!v || v->tensor.shape() != p.param->value.shape())
                throw CheckpointError("checkpoint lacks optimizer state for " + p.name);
            v_.push_back(v->tensor);
        }
    }
}

double cosine_annealing_lr(std::size_t t, std::size_t t_max, double lr_init, double eta_min) {
    if (t_max == 0 || t > t_max) throw std::invalid_argument("cosine_annealing_lr: need 0 <= t <= T_max, T_max > 0");
    return eta_min + (lr_init - eta_min) *
                         (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(t_max))) / 2.0;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (!(lr_init > 0)) throw ConfigError("train.lr_init must be > 0");
    if (!(eta_min >= 0)) throw ConfigError("train.eta_min must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
    if (!(optimizer.weight_decay >= 0)) throw ConfigError("train.weight_decay must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"lr_init", c.lr_init},
            {"epochs", c.epochs},
            {"optimizer", to_string(c.optimizer.kind)},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps},
            {"weight_decay", c.optimizer.weight_decay},
            {"momentum", c.optimizer.momentum},
            {"batch_size", c.batch_size},
            {"eta_min", c.eta_min},
            {"seed", c.seed},
            {"augment_flip", c.augment.flip},
            {"augment_rot90", c.augment.rot90},
            {"loss_bce_weight", c.loss.bce},
            {"loss_dice_weight", c.loss.dice},
            {"loss_smooth", c.loss.smooth},
            {"eval_every", c.eval_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    TrainConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "lr_init") c.lr_init = v.get<double>();
            else if (key == "epochs") c.epochs = v.get<std::size_t>();
            else if (key == "optimizer") c.optimizer.kind = parse_optimizer(v.get<std::string>());
            else if (key == "beta1") c.optimizer.beta1 = v.get<double>();
            else if (key == "beta2") c.optimizer.beta2 = v.get<double>();
            else if (key == "eps") c.optimizer.eps = v.get<double>();
            else if (key == "weight_decay") c.optimizer.weight_decay = v.get<double>();
            else if (key == "momentum") c.optimizer.momentum = v.get<double>();
            else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "eta_min") c.eta_min = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "augment_flip") c.augment.flip = v.get<bool>();
            else if (key == "augment_rot90") c.augment.rot90 = v.get<bool>();
            else if (key == "loss_bce_weight") c.loss.bce = v.get<double>();
            else if (key == "loss_dice_weight") c.loss.dice = v.get<double>();
            else if (key == "loss_smooth") c.loss.smooth = v.get<double>();
            else if (key == "eval_every") c.eval_every = v.get<std::size_t>();
            else throw ConfigError("unknown train config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

Trainer::Trainer(Model& model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)), opt_(cfg_.optimizer) {
    cfg_.validate();
}

double Trainer::train_step(const std::vector<const SegmentationSample*>& batch, double lr) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    const Tensor& first = batch.front()->image;
    model_.prepare(first.dim(1), first.dim(2));
    model_.zero_grad();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0;
    for (const SegmentationSample* s : batch) {
        const Tensor logits = model_.forward_prepared(s->image);
        LossResult l = segmentation_loss(logits, s->mask, cfg_.loss);
        if (!std::isfinite(l.value)) throw NumericError("non-finite loss in sample " + s->id);
        total += l.value;
        for (double& g : l.grad.data()) g *= inv_b;
        model_.backward(l.grad);
    }
    model_.finish_backward();
    opt_.step(model_.params(), lr);
    return total * inv_b;
}

EpochStats Trainer::train_epoch(const Dataset& train, std::size_t epoch) {
    if (train.empty()) throw DataError("training set is empty");
    EpochStats st;
    st.epoch = epoch;
    st.lr = cosine_annealing_lr(epoch, cfg_.epochs, cfg_.lr_init, cfg_.eta_min);
    Rng rng = Rng(cfg_.seed).fork(0x7a1e0000 + epoch);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
        std::vector<SegmentationSample> aug;
        aug.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) aug.push_back(augment(train[order[i]], rng, cfg_.augment));
        std::vector<const SegmentationSample*> batch;
        for (const SegmentationSample& s : aug) batch.push_back(&s);
        total += train_step(batch, st.lr) * static_cast<double>(batch.size());
    }
    st.loss = total / static_cast<double>(train.size());
    return st;
}

MetricReport evaluate(Model& model, const Dataset& data) {
    MetricAccumulator acc(model.config().n_classes);
    std::size_t h = 0, w = 0;
    for (const SegmentationSample& s : data) {
        if (s.image.dim(1) != h || s.image.dim(2) != w) {
            h = s.image.dim(1);
            w = s.image.dim(2);
            model.prepare(h, w);
        }
        const Tensor logits = model.forward_prepared(s.image);
        if (!all_finite(logits)) throw NumericError("non-finite logits for sample " + s.id);
        acc.add(predict_labels(logits), s.mask);
    }
    return acc.report();
}

std::vector<EpochStats> train(Model& model, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch) {
    Trainer trainer(model, cfg);
    std::vector<EpochStats> history;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        EpochStats st = trainer.train_epoch(train_set, e);
        if (!test_set.empty() && ((e + 1) % cfg.eval_every == 0 || e + 1 == cfg.epochs))
            st.test = evaluate(model, test_set);
        if (on_epoch) on_epoch(st);
        history.push_back(std::move(st));
    }
    return history;
}

}  // namespace mew
