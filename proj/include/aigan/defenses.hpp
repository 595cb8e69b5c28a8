#pragma once

#include <string>
#include <vector>

#include "aigan/attacks.hpp"
#include "aigan/dataset.hpp"
#include "aigan/models.hpp"

namespace aigan {

enum class DefenseKind { AdvFgsm, Ensemble, AdvPgd };

DefenseKind parse_defense_kind(const std::string& name);
const char* defense_kind_name(DefenseKind k);

struct DefenseSpec {
    DefenseKind kind = DefenseKind::AdvPgd;
    AttackSpec inner;   // attack generating the training-time examples
    float mix = 1.0f;   // lambda: fraction of each batch replaced by adversarial examples
    int epochs = 6;
    float lr = 1e-3f;
    int batch = 64;
    std::vector<std::string> static_checkpoints; // ensemble only

    void validate() const;
    // lambda 0.5 for adv_fgsm/ensemble, 1.0 for adv_pgd; adv_pgd trains with
    // the 7-step attacker-style pgd while evaluation keeps the full budget
    static DefenseSpec defaults_for(DefenseKind kind, float eps);
};

// Standard CE training; adversarial training is the lambda > 0 case where the
// leading round(lambda*batch) samples are replaced by on-the-fly adversarial
// examples against the current model. lambda == 0 reproduces plain training
// bit-for-bit under the same seed.
void adv_train(Model& model, const DatasetSplit& data, const DefenseSpec& spec,
               std::uint64_t seed);

// plain CE training (the lambda = 0 reduction, shared code path)
void train_classifier(Model& model, const DatasetSplit& data, int epochs, float lr,
                      int batch, std::uint64_t seed);

// per batch the attack source is drawn uniformly from {current model} + statics
void ensemble_adv_train(Model& model, const DatasetSplit& data, const DefenseSpec& spec,
                        std::vector<Model*> statics, std::uint64_t seed);

// fraction of samples still classified correctly after the attack
double robust_accuracy(Model& model, const DatasetSplit& data, const AttackSpec& attack,
                       std::uint64_t seed, int batch = 128);

} // namespace aigan
