#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aigan/models.hpp"
#include "aigan/rng.hpp"
#include "aigan/tensor.hpp"

namespace aigan {

enum class AttackKind { Fgsm, Pgd, Margin };

AttackKind parse_attack_kind(const std::string& name);
const char* attack_kind_name(AttackKind k);

struct AttackSpec {
    AttackKind kind = AttackKind::Pgd;
    float epsilon = 0.3f; // L-inf budget as a pixel fraction; 0 is the identity attack
    float alpha = 0.01f;  // step size (pgd / margin)
    int steps = 40;
    bool targeted = false;
    bool random_start = true;
    float c = 1.0f;     // margin attack constant
    float kappa = 0.0f; // margin confidence

    void validate() const; // throws ConfigError on out-of-range fields

    // pinned defaults: 40 steps alpha 0.01 at eps 0.3 (grayscale);
    // 20 steps alpha 2/255 at eps 8/255 (color)
    static AttackSpec pgd_default(float eps);
    static AttackSpec fgsm_default(float eps);
    static AttackSpec margin_default(float eps);
    // the in-loop attacker: pgd, 7 steps, alpha = 2.5*eps/steps, random start
    static AttackSpec attacker_default(float eps);
};

struct AdvBatch {
    Tensor x_clean;
    std::vector<int> y;       // true labels
    std::vector<int> targets; // empty for untargeted batches
    Tensor x_adv;
    float epsilon = 0.0f;
};

// throws ContractError if ball containment or [0,1] range is violated
void check_adv_batch(const AdvBatch& b, float slack = 1e-6f);

// single sign step: clip01(x ± eps*sign(grad CE))
AdvBatch fgsm(Model& model, const Tensor& x, const std::vector<int>& y,
              const std::vector<int>& targets, const AttackSpec& spec);

// iterated sign steps with projection onto the eps-ball and [0,1]
AdvBatch pgd(Model& model, const Tensor& x, const std::vector<int>& y,
             const std::vector<int>& targets, const AttackSpec& spec, Rng rng);

// adam on delta minimizing c*max(max_{j!=t} Z_j - Z_t, -kappa); targeted only
AdvBatch margin_attack(Model& model, const Tensor& x, const std::vector<int>& y,
                       const std::vector<int>& targets, const AttackSpec& spec);

// the in-loop attacker A: untargeted pgd against the discriminator's class head
AdvBatch attacker_A(Discriminator& disc, const Tensor& x, const std::vector<int>& y,
                    const AttackSpec& spec, Rng rng);

// dispatch on spec.kind (margin derives per-sample targets from y when
// targets are not supplied: next class mod K)
AdvBatch run_attack(Model& model, const Tensor& x, const std::vector<int>& y,
                    const std::vector<int>& targets, const AttackSpec& spec, Rng rng);

// gradient of mean CE w.r.t. the input batch (eval-mode forward)
Tensor input_gradient(Model& model, const Tensor& x, const std::vector<int>& labels);

} // namespace aigan
