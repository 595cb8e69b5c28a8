#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "aigan/tape.hpp"
#include "aigan/tensor.hpp"

namespace aigan {

struct NamedParam {
    std::string name;
    Tensor* tensor;
};
using ParamRefs = std::vector<NamedParam>;

enum class OptKind { Sgd, Adam };

// Optimizer state. Adam moments are keyed by parameter name and allocated on
// first use; the step counter advances by exactly one per opt_step call.
struct OptState {
    OptKind kind = OptKind::Sgd;
    float lr = 0.01f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    long step_count = 0;

    struct Moments {
        Tensor m, v;
    };
    std::unordered_map<std::string, Moments> moments;

    static OptState sgd(float lr) {
        OptState s;
        s.kind = OptKind::Sgd;
        s.lr = lr;
        return s;
    }
    static OptState adam(float lr, float beta1 = 0.9f, float beta2 = 0.999f,
                         float eps = 1e-8f) {
        OptState s;
        s.kind = OptKind::Adam;
        s.lr = lr;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.eps = eps;
        return s;
    }
};

// In-place update of every parameter from its gradient. Missing gradient
// entries are a contract violation.
void opt_step(const ParamRefs& params, const Gradients& grads, OptState& state);

} // namespace aigan
