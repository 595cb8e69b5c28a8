#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aigan/attacks.hpp"
#include "aigan/dataset.hpp"
#include "aigan/models.hpp"
#include "aigan/optim.hpp"

namespace aigan {

struct AiGanConfig {
    float epsilon = 0.3f; // 0.3 for 28x28 grayscale, 8/255 for 32x32 color
    int classes = 10;
    int stage1_epochs = 1;
    int stage2_epochs = 8;
    int batch = 64;
    float g_lr = 1e-4f;
    float d_lr = 1e-4f;
    float adam_beta1 = 0.5f;
    AttackSpec attacker = AttackSpec::attacker_default(0.3f);
    float w_target = 1.0f, w_d = 1.0f, w_s = 1.0f;
    int pretrain_epochs = 3;
    float pretrain_lr = 1e-3f;
    float min_target_acc = 0.9f; // reject unconverged target models below this
    std::uint64_t seed = 0;

    void validate() const;
    static AiGanConfig defaults_for(InShape in);
};

// generator objective terms (minimization form), one record per step
struct StepRecord {
    int stage = 2;
    int epoch = 0;
    long step = 0;
    float d_total = 0, d_s = 0, d_c_adv = 0, d_c_pert = 0;
    float g_total = 0, g_target = 0, g_d = 0, g_s = 0;
};

struct EpochRecord {
    int stage = 0; // 1 or 2
    int epoch = 0;
    float mean_d = 0, mean_g = 0;
    float aux = 0; // stage 1: reconstruction mse / warm-up accuracy
};

struct TrainHistory {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;

    void export_csv(const std::string& path) const; // step, epoch, each loss term
};

struct TrainState {
    Generator* gen = nullptr;
    Discriminator* disc = nullptr;
    Model* target = nullptr; // frozen
    OptState g_opt, d_opt;
    int epoch = 0;
    long step = 0;
    Rng rng{0};
    TrainHistory history;
};

// ---- loss assembly (graph ops; terms are read back for bookkeeping) ----

struct DLossParts {
    Value total;
    float term_s = 0, term_c_adv = 0, term_c_pert = 0;
};

// minimization form of the discriminator objective: BCE(s_real, real) +
// BCE(s_pert, pert) + CE(c_adv, y) + CE(c_pert, y)
DLossParts d_loss(Value s_real, Value s_pert, Value c_adv_logits,
                  const std::vector<int>& y_adv, Value c_pert_logits,
                  const std::vector<int>& y_pert);

struct GLossParts {
    Value total;
    float term_target = 0, term_d = 0, term_s = 0;
};

// minimization form of the generator objective: w_target*CE(target logits, t)
// + w_d*CE(head-C logits, t) + w_s*BCE(s_pert, real). The last term is the
// non-saturating realization of -L_S.
GLossParts g_loss(Value target_logits_on_pert, Value d_class_logits_on_pert, Value s_pert,
                  const std::vector<int>& targets, float w_target, float w_d, float w_s);

// ---- training ----

struct PretrainReport {
    float initial_mse = 0;
    float final_mse = 0;
    int epochs = 0;
};

// Self-supervised encoder pretraining: reconstruction autoencoding with a
// throwaway decoder head. Held-out MSE is measured on the trailing 10%.
PretrainReport pretrain_encoder(Generator& gen, const DatasetSplit& data, int epochs,
                                float lr, std::uint64_t seed);

// one alternating update (sample targets, craft x_pert, attack, D step, G step)
void train_step(TrainState& st, const Tensor& x, const std::vector<int>& y,
                const AiGanConfig& cfg);

struct TrainResult {
    Generator generator;
    Discriminator discriminator;
    TrainHistory history;
};

// Stage 1 (encoder pretraining + head-C warm-up on clean and attacked data,
// no generator updates) followed by Stage 2 (alternating adversarial play).
TrainResult train_aigan(const AiGanConfig& cfg, const DatasetSplit& data, Model& target);

// single-forward crafting with the trained generator: clip01(x + G(x,t))
AdvBatch craft(Generator& gen, const Tensor& x, const std::vector<int>& targets, float eps,
               const std::vector<int>& y = {});

// clean top-1 accuracy, batched
double accuracy(Model& m, const DatasetSplit& data, int batch = 256);

} // namespace aigan
