#pragma once

#include <string>
#include <vector>

#include "mew/tensor.hpp"

namespace mew {

/// Trainable tensor with its gradient accumulator.
struct Param {
    Tensor value;
    Tensor grad;

    Param() = default;
    explicit Param(Tensor v) : value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

    void zero_grad() {
        for (double& g : grad.data()) g = 0.0;
    }
};

struct NamedParam {
    std::string name;
    Param* param = nullptr;
};

using ParamList = std::vector<NamedParam>;

/// Gradient buffers of a parameter list plus the number of backward passes
/// accumulated since the last reset.
class GradStore {
public:
    explicit GradStore(ParamList params) : params_(std::move(params)) {}

    void reset() {
        for (auto& p : params_) p.param->zero_grad();
        count_ = 0;
    }
    void record_backward() { ++count_; }
    std::size_t count() const { return count_; }
    const ParamList& params() const { return params_; }

private:
    ParamList params_;
    std::size_t count_ = 0;
};

}  // namespace mew
