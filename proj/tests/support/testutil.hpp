#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "aigan/rng.hpp"
#include "aigan/tape.hpp"
#include "aigan/tensor.hpp"

namespace testutil {

inline aigan::Tensor random_tensor(std::vector<int> shape, aigan::Rng& rng, float lo = -1.0f,
                                   float hi = 1.0f) {
    aigan::Tensor t(std::move(shape));
    rng.fill_uniform(t, lo, hi);
    return t;
}

inline bool bitwise_equal(const aigan::Tensor& a, const aigan::Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        // compare representations so that -0.0f vs 0.0f counts as a difference
        float x = a[i], y = b[i];
        if (std::memcmp(&x, &y, sizeof(float)) != 0) return false;
    }
    return true;
}

inline float max_abs_diff(const aigan::Tensor& a, const aigan::Tensor& b) {
    float m = 0.0f;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// Central finite-difference check of a graph-building function.
//
// build() receives a tape plus the inputs already registered on it (all
// grad-requiring) and must return a scalar loss Value. Every element of every
// input is checked: |analytic - numeric| / max(|analytic|, |numeric|, guard)
// must stay below tol.
struct FdReport {
    float worst = 0.0f;
    std::int64_t checked = 0;
};

inline FdReport finite_diff_check(
    const std::function<aigan::Value(aigan::Tape&, std::vector<aigan::Value>&)>& build,
    std::vector<aigan::Tensor> inputs, float h = 5e-3f, float tol = 1e-3f,
    float guard = 0.3f) {
    using namespace aigan;

    auto eval = [&](const std::vector<Tensor>& ins) -> float {
        Tape tape;
        std::vector<Value> vals;
        vals.reserve(ins.size());
        for (const auto& t : ins) vals.push_back(tape.input(t));
        Value loss = build(tape, vals);
        return tape.val(loss)[0];
    };

    // analytic gradients
    Tape tape;
    std::vector<Value> vals;
    for (const auto& t : inputs) vals.push_back(tape.input(t));
    Value loss = build(tape, vals);
    Gradients grads = tape.backward(loss);

    FdReport rep;
    for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
        const Tensor& g = grads.at_node(vals[vi].id);
        for (std::int64_t e = 0; e < inputs[vi].numel(); ++e) {
            std::vector<Tensor> plus = inputs;
            std::vector<Tensor> minus = inputs;
            plus[vi][e] += h;
            minus[vi][e] -= h;
            const float numeric = (eval(plus) - eval(minus)) / (2.0f * h);
            const float analytic = g[e];
            const float denom =
                std::max({std::fabs(numeric), std::fabs(analytic), guard});
            const float rel = std::fabs(numeric - analytic) / denom;
            rep.worst = std::max(rep.worst, rel);
            ++rep.checked;
            if (rel >= tol) return rep; // caller asserts on worst < tol
        }
    }
    return rep;
}

} // namespace testutil
