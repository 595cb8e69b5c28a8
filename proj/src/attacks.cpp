#include "aigan/attacks.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "aigan/errors.hpp"
#include "aigan/kernels.hpp"
#include "aigan/optim.hpp"
#include "aigan/tape.hpp"

namespace aigan {

AttackKind parse_attack_kind(const std::string& name) {
    if (name == "fgsm") return AttackKind::Fgsm;
    if (name == "pgd") return AttackKind::Pgd;
    if (name == "margin") return AttackKind::Margin;
    throw ConfigError("unknown attack kind '" + name + "'");
}

const char* attack_kind_name(AttackKind k) {
    switch (k) {
        case AttackKind::Fgsm: return "fgsm";
        case AttackKind::Pgd: return "pgd";
        case AttackKind::Margin: return "margin";
    }
    return "?";
}

void AttackSpec::validate() const {
    if (!(epsilon >= 0.0f) || epsilon > 1.0f)
        throw ConfigError("attack epsilon must lie in [0, 1], got " + std::to_string(epsilon));
    if (kind != AttackKind::Fgsm && epsilon > 0.0f) {
        if (!(alpha > 0.0f)) throw ConfigError("attack alpha must be positive");
        if (steps < 1) throw ConfigError("attack steps must be >= 1");
    }
    if (kind == AttackKind::Margin && !targeted)
        throw ConfigError("margin attack is targeted only");
}

AttackSpec AttackSpec::pgd_default(float eps) {
    AttackSpec s;
    s.kind = AttackKind::Pgd;
    s.epsilon = eps;
    if (eps > 0.1f) { // grayscale-scale budget
        s.steps = 40;
        s.alpha = 0.01f;
    } else {
        s.steps = 20;
        s.alpha = 2.0f / 255.0f;
    }
    s.random_start = true;
    return s;
}

AttackSpec AttackSpec::fgsm_default(float eps) {
    AttackSpec s;
    s.kind = AttackKind::Fgsm;
    s.epsilon = eps;
    s.random_start = false;
    return s;
}

AttackSpec AttackSpec::margin_default(float eps) {
    AttackSpec s;
    s.kind = AttackKind::Margin;
    s.epsilon = eps;
    s.alpha = 0.05f;
    s.steps = 50;
    s.targeted = true;
    s.random_start = false;
    s.c = 1.0f;
    s.kappa = 0.0f;
    return s;
}

AttackSpec AttackSpec::attacker_default(float eps) {
    AttackSpec s;
    s.kind = AttackKind::Pgd;
    s.epsilon = eps;
    s.steps = 7;
    s.alpha = 2.5f * eps / 7.0f;
    s.targeted = false;
    s.random_start = true;
    return s;
}

void check_adv_batch(const AdvBatch& b, float slack) {
    Tensor::check_same_shape(b.x_clean, b.x_adv, "adv batch");
    for (std::int64_t i = 0; i < b.x_adv.numel(); ++i) {
        const float d = std::fabs(b.x_adv[i] - b.x_clean[i]);
        if (d > b.epsilon + slack)
            throw ContractError("adv batch violates the eps-ball: |delta|=" +
                                std::to_string(d) + " > " + std::to_string(b.epsilon));
        if (b.x_adv[i] < 0.0f || b.x_adv[i] > 1.0f)
            throw ContractError("adv batch pixel outside [0,1]: " +
                                std::to_string(b.x_adv[i]));
    }
}

namespace {

const kern::Table& K() { return kern::active(); }

// logits builder: registers x on the tape, runs some network, returns logits
using LogitsFn = std::function<Value(Tape&, Value)>;

Tensor grad_wrt_input(const LogitsFn& fwd, const Tensor& x, const std::vector<int>& labels) {
    Tape t;
    Value xv = t.input(x);
    Value loss = softmax_ce(fwd(t, xv), labels);
    return t.backward(loss).at_node(xv.id);
}

void check_attack_args(const Tensor& x, const std::vector<int>& y,
                       const std::vector<int>& targets, const AttackSpec& spec) {
    spec.validate();
    if (static_cast<int>(y.size()) != x.dim(0))
        throw ShapeError("attack: " + std::to_string(y.size()) + " labels for batch of " +
                         std::to_string(x.dim(0)));
    if (spec.targeted && targets.size() != y.size())
        throw ContractError("targeted attack needs one target class per sample");
}

AdvBatch identity_batch(const Tensor& x, const std::vector<int>& y,
                        const std::vector<int>& targets, float eps) {
    return AdvBatch{x, y, targets, x, eps};
}

// shared FGSM/PGD loop; fgsm == one full-step iteration without random start
AdvBatch pgd_core(const LogitsFn& fwd, const Tensor& x, const std::vector<int>& y,
                  const std::vector<int>& targets, const AttackSpec& spec, float alpha,
                  int steps, bool random_start, Rng& rng) {
    const std::vector<int>& guide = spec.targeted ? targets : y;
    // targeted descends toward t, untargeted ascends away from y
    const float dir = spec.targeted ? -1.0f : 1.0f;
    const float eps = spec.epsilon;

    Tensor x_adv = x;
    if (random_start) {
        for (std::int64_t i = 0; i < x_adv.numel(); ++i)
            x_adv[i] = x[i] + rng.uniform(-eps, eps);
        K().project_box(x_adv.data(), x.data(), eps, 0.0f, 1.0f, x_adv.data(),
                        x_adv.numel());
    }
    for (int it = 0; it < steps; ++it) {
        Tensor g = grad_wrt_input(fwd, x_adv, guide);
        K().sign_step(x_adv.data(), g.data(), dir * alpha, x_adv.data(), x_adv.numel());
        K().project_box(x_adv.data(), x.data(), eps, 0.0f, 1.0f, x_adv.data(),
                        x_adv.numel());
    }
    return AdvBatch{x, y, targets, std::move(x_adv), eps};
}

} // namespace

Tensor input_gradient(Model& model, const Tensor& x, const std::vector<int>& labels) {
    check_batch_shape(x, model.in_shape(), "input_gradient");
    return grad_wrt_input(
        [&model](Tape& t, Value xv) { return model.forward(t, xv, false); }, x, labels);
}

AdvBatch fgsm(Model& model, const Tensor& x, const std::vector<int>& y,
              const std::vector<int>& targets, const AttackSpec& spec) {
    if (spec.kind != AttackKind::Fgsm) throw ContractError("fgsm called with wrong spec kind");
    check_attack_args(x, y, targets, spec);
    check_batch_shape(x, model.in_shape(), "fgsm");
    if (spec.epsilon == 0.0f) return identity_batch(x, y, targets, 0.0f);
    Rng unused(0);
    return pgd_core([&model](Tape& t, Value xv) { return model.forward(t, xv, false); }, x, y,
                    targets, spec, spec.epsilon, 1, false, unused);
}

AdvBatch pgd(Model& model, const Tensor& x, const std::vector<int>& y,
             const std::vector<int>& targets, const AttackSpec& spec, Rng rng) {
    if (spec.kind != AttackKind::Pgd) throw ContractError("pgd called with wrong spec kind");
    check_attack_args(x, y, targets, spec);
    check_batch_shape(x, model.in_shape(), "pgd");
    if (spec.epsilon == 0.0f) return identity_batch(x, y, targets, 0.0f);
    return pgd_core([&model](Tape& t, Value xv) { return model.forward(t, xv, false); }, x, y,
                    targets, spec, spec.alpha, spec.steps, spec.random_start, rng);
}

AdvBatch margin_attack(Model& model, const Tensor& x, const std::vector<int>& y,
                       const std::vector<int>& targets, const AttackSpec& spec) {
    if (spec.kind != AttackKind::Margin)
        throw ContractError("margin_attack called with wrong spec kind");
    check_attack_args(x, y, targets, spec);
    check_batch_shape(x, model.in_shape(), "margin_attack");
    if (spec.epsilon == 0.0f) return identity_batch(x, y, targets, 0.0f);

    const int n = x.dim(0);
    const float eps = spec.epsilon;
    Tensor delta = Tensor::zeros(x.shape());
    Tensor best_delta = delta;
    std::vector<float> best_loss(static_cast<std::size_t>(n),
                                 std::numeric_limits<float>::infinity());
    OptState opt = OptState::adam(spec.alpha);
    const std::int64_t per = x.numel() / n;

    auto margins = [&](const Tensor& logits) {
        std::vector<float> m(static_cast<std::size_t>(n));
        const int k = logits.dim(1);
        for (int i = 0; i < n; ++i) {
            const float* row = logits.data() + static_cast<std::int64_t>(i) * k;
            const int ti = targets[(std::size_t)i];
            float other = -std::numeric_limits<float>::infinity();
            for (int j = 0; j < k; ++j)
                if (j != ti) other = std::max(other, row[j]);
            m[(std::size_t)i] = std::max(other - row[ti], -spec.kappa);
        }
        return m;
    };

    // one extra evaluation pass so the final iterate competes for "best"
    for (int it = 0; it <= spec.steps; ++it) {
        Tape t;
        Value dv = t.param(&delta);
        Value x_adv = clamp_op(add(t.leaf(x), dv), 0.0f, 1.0f);
        Value logits = model.forward(t, x_adv, false);
        const auto per_sample = margins(t.val(logits));
        for (int i = 0; i < n; ++i) {
            if (per_sample[(std::size_t)i] < best_loss[(std::size_t)i]) {
                best_loss[(std::size_t)i] = per_sample[(std::size_t)i];
                std::memcpy(best_delta.data() + i * per, delta.data() + i * per,
                            sizeof(float) * static_cast<std::size_t>(per));
            }
        }
        if (it == spec.steps) break;

        Value loss = scale(margin_loss(logits, targets, spec.kappa), spec.c);
        Gradients g = t.backward(loss);
        opt_step({{"delta", &delta}}, g, opt);
        // keep delta in the ball and x+delta in range
        Tensor moved(x.shape());
        K().add(x.data(), delta.data(), moved.data(), x.numel());
        K().project_box(moved.data(), x.data(), eps, 0.0f, 1.0f, moved.data(), x.numel());
        K().sub(moved.data(), x.data(), delta.data(), x.numel());
    }

    Tensor x_adv(x.shape());
    K().add(x.data(), best_delta.data(), x_adv.data(), x.numel());
    K().project_box(x_adv.data(), x.data(), eps, 0.0f, 1.0f, x_adv.data(), x.numel());
    return AdvBatch{x, y, targets, std::move(x_adv), eps};
}

AdvBatch attacker_A(Discriminator& disc, const Tensor& x, const std::vector<int>& y,
                    const AttackSpec& spec, Rng rng) {
    if (spec.kind != AttackKind::Pgd)
        throw ContractError("attacker_A is pinned to pgd against head-C");
    check_attack_args(x, y, {}, spec);
    check_batch_shape(x, disc.in_shape(), "attacker_A");
    if (spec.epsilon == 0.0f) return identity_batch(x, y, {}, 0.0f);
    // eval-mode forward: per-sample gradients, running statistics untouched
    return pgd_core(
        [&disc](Tape& t, Value xv) { return disc.forward(t, xv, false).c; }, x, y, {}, spec,
        spec.alpha, spec.steps, spec.random_start, rng);
}

AdvBatch run_attack(Model& model, const Tensor& x, const std::vector<int>& y,
                    const std::vector<int>& targets, const AttackSpec& spec, Rng rng) {
    switch (spec.kind) {
        case AttackKind::Fgsm: return fgsm(model, x, y, targets, spec);
        case AttackKind::Pgd: return pgd(model, x, y, targets, spec, rng);
        case AttackKind::Margin: {
            if (!targets.empty()) return margin_attack(model, x, y, targets, spec);
            std::vector<int> derived(y.size());
            for (std::size_t i = 0; i < y.size(); ++i)
                derived[i] = (y[i] + 1) % model.classes();
            return margin_attack(model, x, y, derived, spec);
        }
    }
    throw ContractError("unreachable attack kind");
}

} // namespace aigan
