#include "aigan/optim.hpp"

#include <cmath>

#include "aigan/errors.hpp"
#include "aigan/kernels.hpp"

namespace aigan {

void opt_step(const ParamRefs& params, const Gradients& grads, OptState& state) {
    for (const auto& p : params)
        if (!grads.has(p.tensor))
            throw ContractError("opt_step: no gradient for parameter '" + p.name + "'");

    state.step_count += 1;

    if (state.kind == OptKind::Sgd) {
        for (const auto& p : params) {
            const Tensor& g = grads.at(p.tensor);
            kern::active().axpy(-state.lr, g.data(), p.tensor->data(), g.numel());
        }
        return;
    }

    const float mhat_c =
        1.0f / (1.0f - std::pow(state.beta1, static_cast<float>(state.step_count)));
    const float vhat_c =
        1.0f / (1.0f - std::pow(state.beta2, static_cast<float>(state.step_count)));
    for (const auto& p : params) {
        const Tensor& g = grads.at(p.tensor);
        auto& mom = state.moments[p.name];
        if (mom.m.numel() == 0) {
            mom.m = Tensor::zeros(p.tensor->shape());
            mom.v = Tensor::zeros(p.tensor->shape());
        }
        if (!mom.m.same_shape(*p.tensor))
            throw ContractError("opt_step: moment shape drifted for '" + p.name + "'");
        kern::active().adam_step(p.tensor->data(), g.data(), mom.m.data(), mom.v.data(),
                                 state.lr, state.beta1, state.beta2, state.eps, mhat_c,
                                 vhat_c, g.numel());
    }
}

} // namespace aigan
