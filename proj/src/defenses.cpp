#include "aigan/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "aigan/errors.hpp"
#include "aigan/gan.hpp"
#include "aigan/optim.hpp"
#include "aigan/tape.hpp"

namespace aigan {

DefenseKind parse_defense_kind(const std::string& name) {
    if (name == "adv_fgsm") return DefenseKind::AdvFgsm;
    if (name == "ensemble") return DefenseKind::Ensemble;
    if (name == "adv_pgd") return DefenseKind::AdvPgd;
    throw ConfigError("unknown defense kind '" + name + "'");
}

const char* defense_kind_name(DefenseKind k) {
    switch (k) {
        case DefenseKind::AdvFgsm: return "adv_fgsm";
        case DefenseKind::Ensemble: return "ensemble";
        case DefenseKind::AdvPgd: return "adv_pgd";
    }
    return "?";
}

void DefenseSpec::validate() const {
    if (mix < 0.0f || mix > 1.0f) throw ConfigError("defense mix lambda must lie in [0, 1]");
    if (epochs < 0) throw ConfigError("defense epochs must be >= 0");
    if (batch < 1) throw ConfigError("defense batch must be >= 1");
    inner.validate();
    if (kind == DefenseKind::Ensemble && inner.kind != AttackKind::Fgsm)
        throw ConfigError("ensemble adversarial training uses fgsm inner attacks");
}

DefenseSpec DefenseSpec::defaults_for(DefenseKind kind, float eps) {
    DefenseSpec s;
    s.kind = kind;
    switch (kind) {
        case DefenseKind::AdvFgsm:
            s.inner = AttackSpec::fgsm_default(eps);
            s.mix = 0.5f;
            break;
        case DefenseKind::Ensemble:
            s.inner = AttackSpec::fgsm_default(eps);
            s.mix = 0.5f;
            break;
        case DefenseKind::AdvPgd:
            s.inner = AttackSpec::attacker_default(eps); // 7-step pgd during training
            s.mix = 1.0f;
            break;
    }
    return s;
}

namespace {

// One training loop for every defense. source_for(batch_index) names the
// model the adversarial examples are generated against; it is never consulted
// when no adversarial samples are requested, so the lambda = 0 trajectory is
// bitwise the plain one.
void mixed_training_loop(Model& model, const DatasetSplit& data, int epochs, float lr,
                         int batch, float mix, const AttackSpec& inner, std::uint64_t seed,
                         const std::function<Model*(long)>& source_for) {
    if (data.size() == 0) throw ContractError("training: empty dataset");
    const int n = data.size();
    Rng rng(seed);
    OptState opt = OptState::adam(lr);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    long batch_counter = 0;
    for (int e = 0; e < epochs; ++e) {
        for (int i = n - 1; i > 0; --i)
            std::swap(order[(std::size_t)i], order[(std::size_t)rng.below(i + 1)]);
        for (int start = 0; start < n; start += batch) {
            const int count = std::min(batch, n - start);
            std::vector<int> idx(order.begin() + start, order.begin() + start + count);
            DatasetSplit b = take_indices(data, idx);

            const int k = static_cast<int>(std::lround(mix * count));
            if (k > 0) {
                Model* src = source_for(batch_counter);
                Tensor head = slice_images(b.images, 0, k);
                std::vector<int> head_y = slice_labels(b.labels, 0, k);
                AdvBatch adv = run_attack(*src, head, head_y, {}, inner,
                                          rng.fork(0xDEF + batch_counter));
                std::memcpy(b.images.data(), adv.x_adv.data(),
                            sizeof(float) * static_cast<std::size_t>(adv.x_adv.numel()));
            }

            Tape t;
            Value logits = model.forward(t, t.leaf(b.images), true);
            Value loss = softmax_ce(logits, b.labels);
            Gradients g = t.backward(loss);
            opt_step(model.params(), g, opt);
            ++batch_counter;
        }
    }
}

} // namespace

void train_classifier(Model& model, const DatasetSplit& data, int epochs, float lr,
                      int batch, std::uint64_t seed) {
    mixed_training_loop(model, data, epochs, lr, batch, 0.0f, AttackSpec::fgsm_default(0.0f),
                        seed, [&model](long) { return &model; });
}

void adv_train(Model& model, const DatasetSplit& data, const DefenseSpec& spec,
               std::uint64_t seed) {
    spec.validate();
    if (spec.kind == DefenseKind::Ensemble)
        throw ContractError("use ensemble_adv_train for the ensemble defense");
    mixed_training_loop(model, data, spec.epochs, spec.lr, spec.batch, spec.mix, spec.inner,
                        seed, [&model](long) { return &model; });
}

void ensemble_adv_train(Model& model, const DatasetSplit& data, const DefenseSpec& spec,
                        std::vector<Model*> statics, std::uint64_t seed) {
    spec.validate();
    // zero statics degenerates to adv_train(adv_fgsm): the draw is skipped
    if (statics.empty()) {
        mixed_training_loop(model, data, spec.epochs, spec.lr, spec.batch, spec.mix,
                            spec.inner, seed, [&model](long) { return &model; });
        return;
    }
    Rng pick_rng(Rng(seed).fork(0x5e1ec7));
    mixed_training_loop(model, data, spec.epochs, spec.lr, spec.batch, spec.mix, spec.inner,
                        seed, [&model, &statics, &pick_rng](long) -> Model* {
                            const int pick = pick_rng.below(1 + static_cast<int>(statics.size()));
                            if (pick == 0) return &model;
                            return statics[(std::size_t)(pick - 1)];
                        });
}

double robust_accuracy(Model& model, const DatasetSplit& data, const AttackSpec& attack,
                       std::uint64_t seed, int batch) {
    if (data.size() == 0) throw ContractError("robust_accuracy: empty dataset");
    attack.validate();
    const int n = data.size();
    Rng rng(seed);
    int hits = 0;
    for (int start = 0; start < n; start += batch) {
        const int count = std::min(batch, n - start);
        Tensor x = slice_images(data.images, start, count);
        std::vector<int> y = slice_labels(data.labels, start, count);
        AdvBatch adv = run_attack(model, x, y, {}, attack, rng.fork(0xACC + start));
        auto pred = argmax_rows(classify(model, adv.x_adv));
        for (int i = 0; i < count; ++i) hits += pred[(std::size_t)i] == y[(std::size_t)i];
    }
    return static_cast<double>(hits) / n;
}

} // namespace aigan
