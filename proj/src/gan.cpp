#include "aigan/gan.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "aigan/errors.hpp"
#include "aigan/kernels.hpp"

namespace aigan {

void AiGanConfig::validate() const {
    if (!(epsilon > 0.0f) || epsilon > 1.0f)
        throw ConfigError("aigan epsilon must lie in (0, 1]");
    if (classes < 2) throw ConfigError("aigan needs at least 2 classes");
    if (batch < 1) throw ConfigError("aigan batch must be >= 1");
    if (stage1_epochs < 0 || stage2_epochs < 0 || pretrain_epochs < 0)
        throw ConfigError("epoch counts must be >= 0");
    if (w_target <= 0.0f) throw ConfigError("w_target must be positive");
    if (w_d < 0.0f || w_s < 0.0f) throw ConfigError("loss weights must be >= 0");
    attacker.validate();
}

AiGanConfig AiGanConfig::defaults_for(InShape in) {
    AiGanConfig c;
    c.epsilon = (in.c == 3) ? 8.0f / 255.0f : 0.3f;
    c.attacker = AttackSpec::attacker_default(c.epsilon);
    return c;
}

void TrainHistory::export_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write history csv '" + path + "'");
    out << "stage,epoch,step,d_total,d_s,d_c_adv,d_c_pert,g_total,g_target,g_d,g_s\n";
    for (const auto& r : steps)
        out << r.stage << ',' << r.epoch << ',' << r.step << ',' << r.d_total << ',' << r.d_s
            << ',' << r.d_c_adv << ',' << r.d_c_pert << ',' << r.g_total << ',' << r.g_target
            << ',' << r.g_d << ',' << r.g_s << '\n';
}

// ---- losses ----

DLossParts d_loss(Value s_real, Value s_pert, Value c_adv_logits,
                  const std::vector<int>& y_adv, Value c_pert_logits,
                  const std::vector<int>& y_pert) {
    Tape& t = *s_real.tape;
    const int n_real = t.val(s_real).dim(0);
    const int n_pert = t.val(s_pert).dim(0);
    const int n_adv = t.val(c_adv_logits).dim(0);
    if (n_real != n_pert || n_pert != t.val(c_pert_logits).dim(0) ||
        n_adv != static_cast<int>(y_adv.size()) ||
        t.val(c_pert_logits).dim(0) != static_cast<int>(y_pert.size()))
        throw ShapeError("d_loss: batch sizes disagree across terms");

    Value ls = add(bce_logits(s_real, 1.0f), bce_logits(s_pert, 0.0f));
    Value lc_adv = softmax_ce(c_adv_logits, y_adv);
    Value lc_pert = softmax_ce(c_pert_logits, y_pert);
    DLossParts parts;
    parts.term_s = t.val(ls)[0];
    parts.term_c_adv = t.val(lc_adv)[0];
    parts.term_c_pert = t.val(lc_pert)[0];
    parts.total = add(add(ls, lc_adv), lc_pert);
    return parts;
}

GLossParts g_loss(Value target_logits_on_pert, Value d_class_logits_on_pert, Value s_pert,
                  const std::vector<int>& targets, float w_target, float w_d, float w_s) {
    Tape& t = *target_logits_on_pert.tape;
    const int n = t.val(target_logits_on_pert).dim(0);
    if (n != t.val(d_class_logits_on_pert).dim(0) || n != t.val(s_pert).dim(0) ||
        n != static_cast<int>(targets.size()))
        throw ShapeError("g_loss: batch sizes disagree across terms");

    Value l_target = softmax_ce(target_logits_on_pert, targets);
    Value l_d = softmax_ce(d_class_logits_on_pert, targets);
    Value l_s = bce_logits(s_pert, 1.0f); // fool head-S into "real"
    GLossParts parts;
    parts.term_target = t.val(l_target)[0];
    parts.term_d = t.val(l_d)[0];
    parts.term_s = t.val(l_s)[0];
    parts.total = add(add(scale(l_target, w_target), scale(l_d, w_d)), scale(l_s, w_s));
    return parts;
}

// ---- encoder pretraining ----

namespace {

// throwaway reconstruction head mirroring the decoder, without conditioning
struct ReconHead {
    ConvT2dLayer up1, up2, up3;
    BatchNormLayer bn1, bn2, bn3;
    Conv2dLayer out;

    void init(InShape in, Rng& rng, const Generator& gen) {
        auto bs = gen.bottleneck_shape();
        auto out_pad_for = [](int from, int to) { return to - ((from - 1) * 2 - 2 + 3); };
        const int h1 = (in.h + 1) / 2, h2 = (h1 + 1) / 2;
        up1.init(bs[0], 64, 3, 2, 1, out_pad_for(bs[1], h2), rng);
        bn1.init(64);
        up2.init(64, 32, 3, 2, 1, out_pad_for(h2, h1), rng);
        bn2.init(32);
        up3.init(32, 32, 3, 2, 1, out_pad_for(h1, in.h), rng);
        bn3.init(32);
        out.init(32, in.c, 3, 1, 1, rng);
    }

    Value forward(Tape& t, Value feat, bool training) {
        Value h = relu(bn1.forward(t, up1.forward(t, feat), training));
        h = relu(bn2.forward(t, up2.forward(t, h), training));
        h = relu(bn3.forward(t, up3.forward(t, h), training));
        return sigmoid_op(out.forward(t, h));
    }

    ParamRefs params() {
        ParamRefs out_refs;
        auto add = [&out_refs](const std::string& n, Tensor& t, bool p) {
            if (p) out_refs.push_back({n, &t});
        };
        up1.visit("recon.up1", add);
        bn1.visit("recon.bn1", add);
        up2.visit("recon.up2", add);
        bn2.visit("recon.bn2", add);
        up3.visit("recon.up3", add);
        bn3.visit("recon.bn3", add);
        out.visit("recon.out", add);
        return out_refs;
    }
};

float recon_mse(Generator& gen, ReconHead& head, const Tensor& images, int batch) {
    const int n = images.dim(0);
    double total = 0.0;
    for (int start = 0; start < n; start += batch) {
        const int count = std::min(batch, n - start);
        Tensor x = slice_images(images, start, count);
        Tape t;
        Value xv = t.leaf(x);
        Value rec = head.forward(t, gen.encode(t, xv, false), false);
        Tape t2;
        Value l = mse(t2.leaf(t.val(rec)), t2.leaf(x));
        total += static_cast<double>(t2.val(l)[0]) * count;
    }
    return static_cast<float>(total / n);
}

} // namespace

PretrainReport pretrain_encoder(Generator& gen, const DatasetSplit& data, int epochs,
                                float lr, std::uint64_t seed) {
    if (data.size() == 0) throw ContractError("pretrain_encoder: empty dataset");
    PretrainReport rep;
    rep.epochs = epochs;

    const int n = data.size();
    const int held = std::max(1, n / 10);
    const int train_n = std::max(1, n - held);

    Rng rng(seed);
    ReconHead head;
    head.init(gen.in_shape(), rng, gen);

    rep.initial_mse = recon_mse(gen, head, slice_images(data.images, train_n, held), 64);
    if (epochs == 0) {
        rep.final_mse = rep.initial_mse;
        return rep;
    }

    ParamRefs params = gen.encoder_params();
    ParamRefs head_params = head.params();
    params.insert(params.end(), head_params.begin(), head_params.end());
    OptState opt = OptState::adam(lr);

    const int batch = 64;
    std::vector<int> order(static_cast<std::size_t>(train_n));
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < epochs; ++e) {
        for (int i = train_n - 1; i > 0; --i)
            std::swap(order[(std::size_t)i], order[(std::size_t)rng.below(i + 1)]);
        for (int start = 0; start < train_n; start += batch) {
            const int count = std::min(batch, train_n - start);
            std::vector<int> idx(order.begin() + start, order.begin() + start + count);
            DatasetSplit b = take_indices(data, idx);
            Tape t;
            Value xv = t.leaf(b.images);
            Value rec = head.forward(t, gen.encode(t, xv, true), true);
            Value loss = mse(rec, xv);
            Gradients g = t.backward(loss);
            opt_step(params, g, opt);
        }
    }
    rep.final_mse = recon_mse(gen, head, slice_images(data.images, train_n, held), 64);
    return rep;
}

// ---- alternating step ----

void train_step(TrainState& st, const Tensor& x, const std::vector<int>& y,
                const AiGanConfig& cfg) {
    Generator& gen = *st.gen;
    Discriminator& disc = *st.disc;
    Model& target = *st.target;
    const int n = x.dim(0);

    // (1) targets sampled uniformly over all classes, own class included
    std::vector<int> t_cls(static_cast<std::size_t>(n));
    for (auto& tc : t_cls) tc = st.rng.below(cfg.classes);

    // (2) x_pert from the current generator (train-mode batch statistics)
    Tensor x_pert;
    {
        Tape tg;
        Value xv = tg.leaf(x);
        Value delta = gen.perturb(tg, xv, t_cls, cfg.epsilon, true);
        Value xp = clamp_op(add(xv, delta), 0.0f, 1.0f);
        x_pert = tg.val(xp);
    }

    // (3) attacker examples against the current head-C
    AdvBatch adv = attacker_A(disc, x, y, cfg.attacker, st.rng.fork(0xA77A + st.step));

    StepRecord rec;
    rec.stage = 2;
    rec.epoch = st.epoch;
    rec.step = st.step;

    // (4) discriminator update
    {
        Tape t;
        auto real_heads = disc.forward(t, t.leaf(x), true);
        auto pert_heads = disc.forward(t, t.leaf(x_pert), true);
        auto adv_heads = disc.forward(t, t.leaf(adv.x_adv), true);
        DLossParts dl = d_loss(real_heads.s, pert_heads.s, adv_heads.c, y, pert_heads.c, y);
        Gradients g = t.backward(dl.total);
        opt_step(disc.params(), g, st.d_opt);
        rec.d_total = t.val(dl.total)[0];
        rec.d_s = dl.term_s;
        rec.d_c_adv = dl.term_c_adv;
        rec.d_c_pert = dl.term_c_pert;
    }

    // (5) generator update; discriminator and target run frozen
    {
        Tape t;
        Value xv = t.leaf(x);
        Value delta = gen.perturb(t, xv, t_cls, cfg.epsilon, true);
        Value xp = clamp_op(add(xv, delta), 0.0f, 1.0f);
        Discriminator::Heads heads;
        Value target_logits;
        {
            FreezeParams freeze(t);
            heads = disc.forward(t, xp, true);
            target_logits = target.forward(t, xp, false);
        }
        GLossParts gl =
            g_loss(target_logits, heads.c, heads.s, t_cls, cfg.w_target, cfg.w_d, cfg.w_s);
        Gradients g = t.backward(gl.total);
        opt_step(gen.params(), g, st.g_opt);
        rec.g_total = t.val(gl.total)[0];
        rec.g_target = gl.term_target;
        rec.g_d = gl.term_d;
        rec.g_s = gl.term_s;
    }

    st.history.steps.push_back(rec);
    st.step += 1;
}

// ---- full two-stage training ----

double accuracy(Model& m, const DatasetSplit& data, int batch) {
    const int n = data.size();
    if (n == 0) throw ContractError("accuracy: empty dataset");
    int hits = 0;
    for (int start = 0; start < n; start += batch) {
        const int count = std::min(batch, n - start);
        Tensor logits = m.logits(slice_images(data.images, start, count));
        auto pred = argmax_rows(logits);
        for (int i = 0; i < count; ++i)
            hits += pred[(std::size_t)i] == data.labels[(std::size_t)(start + i)];
    }
    return static_cast<double>(hits) / n;
}

TrainResult train_aigan(const AiGanConfig& cfg, const DatasetSplit& data, Model& target) {
    cfg.validate();
    if (data.size() == 0) throw ContractError("train_aigan: empty dataset");
    if (target.classes() != cfg.classes)
        throw ConfigError("target classifier has " + std::to_string(target.classes()) +
                          " classes, config says " + std::to_string(cfg.classes));

    {
        const int probe = std::min(data.size(), 2000);
        const double acc = accuracy(target, subset(data, 0, probe));
        if (acc < cfg.min_target_acc)
            throw ContractError("target model clean accuracy " + std::to_string(acc) +
                                " below required " + std::to_string(cfg.min_target_acc));
    }

    TrainResult result;
    result.generator =
        Generator::build(target.in_shape(), cfg.classes, cfg.epsilon, cfg.seed ^ 0x6e6);
    result.discriminator =
        Discriminator::build(target.in_shape(), cfg.classes, cfg.seed ^ 0xd15c);

    TrainState st;
    st.gen = &result.generator;
    st.disc = &result.discriminator;
    st.target = &target;
    st.g_opt = OptState::adam(cfg.g_lr, cfg.adam_beta1);
    st.d_opt = OptState::adam(cfg.d_lr, cfg.adam_beta1);
    st.rng = Rng(cfg.seed);

    // Stage 1a: self-supervised encoder pretraining
    PretrainReport pre = pretrain_encoder(result.generator, data, cfg.pretrain_epochs,
                                          cfg.pretrain_lr, cfg.seed ^ 0xeeee);

    const int n = data.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto shuffle = [&order, &st, n] {
        for (int i = n - 1; i > 0; --i)
            std::swap(order[(std::size_t)i], order[(std::size_t)st.rng.below(i + 1)]);
    };

    // Stage 1b: warm up head-C on clean and attacker examples, no G updates
    for (int e = 0; e < cfg.stage1_epochs; ++e) {
        shuffle();
        double loss_sum = 0.0;
        int steps = 0;
        // full batches only; batchnorm statistics want a real batch
        for (int start = 0; start < n; start += cfg.batch) {
            const int count = std::min(cfg.batch, n - start);
            if (count < 2 && n > 2) break;
            std::vector<int> idx(order.begin() + start, order.begin() + start + count);
            DatasetSplit b = take_indices(data, idx);
            AdvBatch adv = attacker_A(*st.disc, b.images, b.labels, cfg.attacker,
                                      st.rng.fork(0x57A6E1 + st.step));
            Tape t;
            auto clean_heads = st.disc->forward(t, t.leaf(b.images), true);
            auto adv_heads = st.disc->forward(t, t.leaf(adv.x_adv), true);
            Value loss =
                add(softmax_ce(clean_heads.c, b.labels), softmax_ce(adv_heads.c, b.labels));
            Gradients g = t.backward(loss);
            opt_step(st.disc->params(), g, st.d_opt);
            loss_sum += t.val(loss)[0];
            ++steps;
            ++st.step;
        }
        EpochRecord er;
        er.stage = 1;
        er.epoch = e;
        er.mean_d = steps ? static_cast<float>(loss_sum / steps) : 0.0f;
        er.aux = (e == 0) ? pre.final_mse : 0.0f;
        st.history.epochs.push_back(er);
    }

    // Stage 2: alternating adversarial play
    st.step = 0;
    for (int e = 0; e < cfg.stage2_epochs; ++e) {
        st.epoch = e;
        shuffle();
        const std::size_t first_step = st.history.steps.size();
        for (int start = 0; start < n; start += cfg.batch) {
            const int count = std::min(cfg.batch, n - start);
            if (count < 2 && n > 2) break;
            std::vector<int> idx(order.begin() + start, order.begin() + start + count);
            DatasetSplit b = take_indices(data, idx);
            train_step(st, b.images, b.labels, cfg);
        }
        EpochRecord er;
        er.stage = 2;
        er.epoch = e;
        double dsum = 0, gsum = 0;
        const std::size_t cnt = st.history.steps.size() - first_step;
        for (std::size_t i = first_step; i < st.history.steps.size(); ++i) {
            dsum += st.history.steps[i].d_total;
            gsum += st.history.steps[i].g_total;
        }
        if (cnt) {
            er.mean_d = static_cast<float>(dsum / cnt);
            er.mean_g = static_cast<float>(gsum / cnt);
        }
        st.history.epochs.push_back(er);
    }

    result.history = std::move(st.history);
    return result;
}

AdvBatch craft(Generator& gen, const Tensor& x, const std::vector<int>& targets, float eps,
               const std::vector<int>& y) {
    Tensor delta = gen.perturb_eval(x, targets, eps);
    Tensor x_adv(x.shape());
    kern::active().add(x.data(), delta.data(), x_adv.data(), x.numel());
    kern::active().clamp(x_adv.data(), 0.0f, 1.0f, x_adv.data(), x_adv.numel());
    AdvBatch out{x, y, targets, std::move(x_adv), eps};
    return out;
}

} // namespace aigan
