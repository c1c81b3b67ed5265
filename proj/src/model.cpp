#include "mew/model.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace mew {

void ModelConfig::validate() const {
    if (in_channels == 0) throw ConfigError("model.in_channels must be >= 1");
    if (n_classes < 2) throw ConfigError("model.n_classes must be >= 2");
    if (stage_depths.size() < 2) throw ConfigError("model.stage_depths needs at least 2 stages");
    for (std::size_t d : stage_depths)
        if (d == 0) throw ConfigError("model.stage_depths entries must be >= 1");
    if (base_width == 0 || base_width % 4 != 0)
        throw ConfigError("model.base_width must be a positive multiple of 4, got " + std::to_string(base_width));
    if (ffn_ratio == 0 || irb_expansion == 0) throw ConfigError("model.ffn_ratio and irb_expansion must be >= 1");
    if (weight_base_n1 == 0 || weight_base_n2 == 0) throw ConfigError("model.weight_base must be at least 1x1");
    if (!(weight_init_std > 0)) throw ConfigError("model.weight_init_std must be > 0");
    if (generator_mode == GeneratorMode::raw && (image_size == 0 || image_size % (std::size_t{1} << (stages() - 1))))
        throw ConfigError("raw weights need model.image_size divisible by 2^(stages-1)");
}

MewOptions ModelConfig::mew_options() const {
    MewOptions o;
    o.mask = branch_mask;
    o.generator = generator_mode;
    o.weight_kind = weight_kind;
    o.dw_pointwise = dw_pointwise;
    o.act = activation;
    o.align_corners = weight_align_corners;
    o.base_n1 = weight_base_n1;
    o.base_n2 = weight_base_n2;
    o.irb_expansion = irb_expansion;
    o.init_std = weight_init_std;
    return o;
}

nlohmann::json to_json(const ModelConfig& c) {
    return {
        {"in_channels", c.in_channels},
        {"n_classes", c.n_classes},
        {"base_width", c.base_width},
        {"stage_depths", c.stage_depths},
        {"branch_mask", c.branch_mask.str()},
        {"generator_mode", to_string(c.generator_mode)},
        {"weight_kind", to_string(c.weight_kind)},
        {"ffn_ratio", c.ffn_ratio},
        {"irb_expansion", c.irb_expansion},
        {"dw_pointwise", c.dw_pointwise},
        {"activation", to_string(c.activation)},
        {"weight_align_corners", c.weight_align_corners},
        {"upsample_align_corners", c.upsample_align_corners},
        {"weight_base", {c.weight_base_n1, c.weight_base_n2}},
        {"weight_init_std", c.weight_init_std},
        {"image_size", c.image_size},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    ModelConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "in_channels") c.in_channels = v.get<std::size_t>();
            else if (key == "n_classes") c.n_classes = v.get<std::size_t>();
            else if (key == "base_width") c.base_width = v.get<std::size_t>();
            else if (key == "stage_depths") c.stage_depths = v.get<std::vector<std::size_t>>();
            else if (key == "branch_mask") c.branch_mask = BranchMask::parse(v.get<std::string>());
            else if (key == "generator_mode") c.generator_mode = parse_generator_mode(v.get<std::string>());
            else if (key == "weight_kind") c.weight_kind = parse_weight_kind(v.get<std::string>());
            else if (key == "ffn_ratio") c.ffn_ratio = v.get<std::size_t>();
            else if (key == "irb_expansion") c.irb_expansion = v.get<std::size_t>();
            else if (key == "dw_pointwise") c.dw_pointwise = v.get<bool>();
            else if (key == "activation") c.activation = parse_activation(v.get<std::string>());
            else if (key == "weight_align_corners") c.weight_align_corners = v.get<bool>();
            else if (key == "upsample_align_corners") c.upsample_align_corners = v.get<bool>();
            else if (key == "weight_base") {
                const auto b = v.get<std::vector<std::size_t>>();
                if (b.size() != 2) throw ConfigError("model.weight_base must be [n1, n2_half]");
                c.weight_base_n1 = b[0];
                c.weight_base_n2 = b[1];
            } else if (key == "weight_init_std") c.weight_init_std = v.get<double>();
            else if (key == "image_size") c.image_size = v.get<std::size_t>();
            else throw ConfigError("unknown model config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

Model::Model(const ModelConfig& config, Rng& rng) : config_(config) {
    config_.validate();
    const std::size_t S = config_.stages();
    const MewOptions opt = config_.mew_options();
    auto side = [&](std::size_t stage) { return config_.image_size >> stage; };
    auto make_blocks = [&](std::size_t stage, std::size_t depth) {
        std::vector<MewBlock> v;
        for (std::size_t d = 0; d < depth; ++d)
            v.emplace_back(config_.width(stage), config_.ffn_ratio, opt, rng, side(stage), side(stage));
        return v;
    };
    stem_ = Conv2d(config_.in_channels, config_.width(0), 3, 1, 1, rng);
    for (std::size_t i = 0; i + 1 < S; ++i) {
        EncoderStage e;
        e.blocks = make_blocks(i, config_.stage_depths[i]);
        e.down = Conv2d(config_.width(i), config_.width(i + 1), 3, 2, 1, rng);
        encoders_.push_back(std::move(e));
    }
    bottleneck_ = make_blocks(S - 1, config_.stage_depths[S - 1]);
    decoders_.resize(S - 1);
    for (std::size_t k = S - 1; k-- > 0;) {
        DecoderStage& d = decoders_[k];
        d.proj = Conv2d(config_.width(k + 1), config_.width(k), 1, 1, 0, rng);
        d.blocks = make_blocks(k, config_.stage_depths[k]);
    }
    head_ = Conv2d(config_.width(0), config_.n_classes, 1, 1, 0, rng);
}

template <typename F>
void Model::for_each_block(F f) {
    for (std::size_t i = 0; i < encoders_.size(); ++i)
        for (MewBlock& b : encoders_[i].blocks) f(b, i);
    for (MewBlock& b : bottleneck_) f(b, encoders_.size());
    for (std::size_t i = 0; i < decoders_.size(); ++i)
        for (MewBlock& b : decoders_[i].blocks) f(b, i);
}

void Model::check_input(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(0) != config_.in_channels)
        throw ShapeError("model expects [" + std::to_string(config_.in_channels) + ",H,W], got " +
                         shape_str(x.shape()));
    const std::size_t m = std::size_t{1} << (config_.stages() - 1);
    if (x.dim(1) % m != 0 || x.dim(2) % m != 0)
        throw ShapeError("spatial size " + std::to_string(x.dim(1)) + "x" + std::to_string(x.dim(2)) +
                         " not divisible by " + std::to_string(m));
}

void Model::prepare(std::size_t h, std::size_t w) {
    for_each_block([&](MewBlock& b, std::size_t stage) { b.prepare(h >> stage, w >> stage); });
    prepared_h_ = h;
    prepared_w_ = w;
}

Tensor Model::forward(const Tensor& x) {
    if (x.rank() == 4) {
        std::vector<Tensor> out;
        for (std::size_t i = 0; i < x.dim(0); ++i) {
            Tensor xi = unstack_item(x, i);
            if (i == 0) {
                check_input(xi);
                prepare(xi.dim(1), xi.dim(2));
            }
            out.push_back(forward_prepared(xi));
        }
        return stack(out);
    }
    check_input(x);
    prepare(x.dim(1), x.dim(2));
    return forward_prepared(x);
}

Tensor Model::forward_prepared(const Tensor& x) {
    check_input(x);
    if (x.dim(1) != prepared_h_ || x.dim(2) != prepared_w_)
        throw ShapeError("forward_prepared: weights were prepared for a different input size");
    std::vector<Tensor> skips;
    Tensor h = stem_.forward(x);
    for (EncoderStage& e : encoders_) {
        for (MewBlock& b : e.blocks) h = b.forward(h);
        skips.push_back(h);
        h = e.down.forward(h);
    }
    for (MewBlock& b : bottleneck_) h = b.forward(h);
    for (std::size_t k = decoders_.size(); k-- > 0;) {
        DecoderStage& d = decoders_[k];
        h = d.proj.forward(h);
        d.up_in = h.shape();
        h = bilinear_interp(h, h.dim(1) * 2, h.dim(2) * 2, config_.upsample_align_corners);
        add_inplace(h, skips[k]);
        for (MewBlock& b : d.blocks) h = b.forward(h);
    }
    return head_.forward(h);
}

Tensor Model::backward(const Tensor& dlogits) {
    Tensor d = head_.backward(dlogits);
    std::vector<Tensor> dskips(decoders_.size());
    for (std::size_t k = 0; k < decoders_.size(); ++k) {
        DecoderStage& dec = decoders_[k];
        for (auto it = dec.blocks.rbegin(); it != dec.blocks.rend(); ++it) d = it->backward(d);
        dskips[k] = d;
        d = dec.proj.backward(bilinear_interp_backward(d, dec.up_in, config_.upsample_align_corners));
    }
    for (auto it = bottleneck_.rbegin(); it != bottleneck_.rend(); ++it) d = it->backward(d);
    for (std::size_t i = encoders_.size(); i-- > 0;) {
        EncoderStage& e = encoders_[i];
        d = e.down.backward(d);
        add_inplace(d, dskips[i]);
        for (auto it = e.blocks.rbegin(); it != e.blocks.rend(); ++it) d = it->backward(d);
    }
    return stem_.backward(d);
}

void Model::finish_backward() {
    for_each_block([](MewBlock& b, std::size_t) { b.finish_backward(); });
}

ParamList Model::params() {
    ParamList out;
    stem_.collect(out, "stem");
    for (std::size_t i = 0; i < encoders_.size(); ++i) {
        for (std::size_t j = 0; j < encoders_[i].blocks.size(); ++j)
            encoders_[i].blocks[j].collect(out, "enc" + std::to_string(i) + ".block" + std::to_string(j));
        encoders_[i].down.collect(out, "enc" + std::to_string(i) + ".down");
    }
    for (std::size_t j = 0; j < bottleneck_.size(); ++j) bottleneck_[j].collect(out, "mid.block" + std::to_string(j));
    for (std::size_t k = decoders_.size(); k-- > 0;) {
        decoders_[k].proj.collect(out, "dec" + std::to_string(k) + ".proj");
        for (std::size_t j = 0; j < decoders_[k].blocks.size(); ++j)
            decoders_[k].blocks[j].collect(out, "dec" + std::to_string(k) + ".block" + std::to_string(j));
    }
    head_.collect(out, "head");
    return out;
}

std::size_t Model::param_count() {
    std::size_t n = 0;
    for (const NamedParam& p : params()) n += p.param->value.size();
    return n;
}

void Model::zero_grad() {
    for (const NamedParam& p : params()) p.param->zero_grad();
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, Model& model, const nlohmann::json& extra_meta,
                     const std::vector<Record>& extra_records) {
    Container c;
    nlohmann::json params = nlohmann::json::array();
    for (const NamedParam& p : model.params()) {
        c.records.push_back({p.name, p.param->value, DType::f64});
        params.push_back({{"name", p.name}, {"shape", p.param->value.shape()}});
    }
    for (const Record& r : extra_records) c.records.push_back(r);
    c.meta = extra_meta.is_object() ? extra_meta : nlohmann::json::object();
    c.meta["kind"] = "mewunet-checkpoint";
    c.meta["config"] = to_json(model.config());
    c.meta["params"] = params;
    write_container(path, c);
}

void load_parameters(Model& model, const Container& checkpoint) {
    ParamList params = model.params();
    std::ostringstream diff;
    std::set<std::string> expected;
    for (const NamedParam& p : params) {
        expected.insert(p.name);
        const Record* r = checkpoint.find(p.name);
        if (!r) diff << "  missing in checkpoint: " << p.name << ' ' << shape_str(p.param->value.shape()) << '\n';
        else if (r->tensor.shape() != p.param->value.shape())
            diff << "  shape mismatch: " << p.name << " checkpoint " << shape_str(r->tensor.shape()) << " vs model "
                 << shape_str(p.param->value.shape()) << '\n';
    }
    if (checkpoint.meta.contains("params"))
        for (const auto& e : checkpoint.meta["params"]) {
            const std::string name = e.value("name", "");
            if (!expected.count(name)) diff << "  unexpected in checkpoint: " << name << '\n';
        }
    if (!diff.str().empty()) throw CheckpointError("checkpoint does not match the model:\n" + diff.str());
    for (const NamedParam& p : params) p.param->value = checkpoint.tensor(p.name);
}

Model load_model(const std::filesystem::path& path) {
    const Container c = read_container(path);
    if (c.meta.value("kind", "") != "mewunet-checkpoint" || !c.meta.contains("config"))
        throw CheckpointError(path.string() + " is not a model checkpoint");
    Rng rng(0);
    Model m(model_config_from_json(c.meta["config"]), rng);
    load_parameters(m, c);
    return m;
}

}  // namespace mew
