// Loss assembly per the discriminator/generator objectives, encoder
// pretraining contracts, crafting, and single-step training mechanics.

#include <doctest.h>

#include <cmath>

#include "aigan/defenses.hpp"
#include "aigan/gan.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using namespace aigan;
using testutil::bitwise_equal;
using testutil::random_tensor;

namespace {

std::vector<int> random_labels(int n, int k, Rng& rng) {
    std::vector<int> out(static_cast<std::size_t>(n));
    for (auto& y : out) y = rng.below(k);
    return out;
}

} // namespace

TEST_CASE("d_loss: perfect discriminator drives the loss to zero") {
    Tape t;
    Value s_real = t.leaf(Tensor::full({4}, 50.0f));  // confidently real
    Value s_pert = t.leaf(Tensor::full({4}, -50.0f)); // confidently perturbed
    Tensor logits({4, 3});
    std::vector<int> y = {0, 1, 2, 0};
    for (int i = 0; i < 4; ++i) logits[i * 3 + y[(std::size_t)i]] = 60.0f;
    DLossParts dl = d_loss(s_real, s_pert, t.leaf(logits), y, t.leaf(logits), y);
    CHECK(t.val(dl.total)[0] == doctest::Approx(0.0).epsilon(1e-4));
}

TEST_CASE("d_loss: maximally uncertain head-S contributes 2 ln 2") {
    Tape t;
    Value s_real = t.leaf(Tensor::zeros({8}));
    Value s_pert = t.leaf(Tensor::zeros({8}));
    Tensor logits({8, 4});
    std::vector<int> y(8, 0);
    for (int i = 0; i < 8; ++i) logits[i * 4] = 40.0f; // class terms ~0
    DLossParts dl = d_loss(s_real, s_pert, t.leaf(logits), y, t.leaf(logits), y);
    CHECK(dl.term_s == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-5));
    CHECK(t.val(dl.total)[0] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-4));
}

TEST_CASE("d_loss: random logits match the scalar oracle, 20 instances") {
    Rng rng(3);
    for (int it = 0; it < 20; ++it) {
        const int n = 2 + rng.below(6), k = 2 + rng.below(5);
        Tensor s_real = random_tensor({n}, rng, -3.0f, 3.0f);
        Tensor s_pert = random_tensor({n}, rng, -3.0f, 3.0f);
        Tensor c_adv = random_tensor({n, k}, rng, -3.0f, 3.0f);
        Tensor c_pert = random_tensor({n, k}, rng, -3.0f, 3.0f);
        auto y = random_labels(n, k, rng);
        Tape t;
        DLossParts dl =
            d_loss(t.leaf(s_real), t.leaf(s_pert), t.leaf(c_adv), y, t.leaf(c_pert), y);
        const double want = oracle::d_loss(s_real, s_pert, c_adv, y, c_pert, y);
        CHECK(t.val(dl.total)[0] == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("d_loss: batch-size mismatch across terms rejected") {
    Tape t;
    Value s8 = t.leaf(Tensor::zeros({8}));
    Value s4 = t.leaf(Tensor::zeros({4}));
    Value c8 = t.leaf(Tensor::zeros({8, 3}));
    std::vector<int> y8(8, 0);
    CHECK_THROWS_AS(d_loss(s8, s4, c8, y8, c8, y8), ShapeError);
}

TEST_CASE("g_loss: generator fooling everything drives the loss to zero") {
    Tape t;
    std::vector<int> targets = {1, 2, 0};
    Tensor tl({3, 3}), dl_({3, 3});
    for (int i = 0; i < 3; ++i) {
        tl[i * 3 + targets[(std::size_t)i]] = 60.0f;
        dl_[i * 3 + targets[(std::size_t)i]] = 60.0f;
    }
    Value s_pert = t.leaf(Tensor::full({3}, 50.0f)); // head-S says "real"
    GLossParts gl = g_loss(t.leaf(tl), t.leaf(dl_), s_pert, targets, 1, 1, 1);
    CHECK(t.val(gl.total)[0] == doctest::Approx(0.0).epsilon(1e-4));
}

TEST_CASE("g_loss: w_d = w_s = 0 reduces to plain targeted cross-entropy") {
    Rng rng(5);
    const int n = 5, k = 4;
    Tensor tl = random_tensor({n, k}, rng, -2.0f, 2.0f);
    Tensor dl_ = random_tensor({n, k}, rng, -2.0f, 2.0f);
    Tensor sp = random_tensor({n}, rng, -2.0f, 2.0f);
    auto targets = random_labels(n, k, rng);
    Tape t;
    GLossParts gl = g_loss(t.leaf(tl), t.leaf(dl_), t.leaf(sp), targets, 1.0f, 0.0f, 0.0f);
    CHECK(t.val(gl.total)[0] ==
          doctest::Approx(oracle::softmax_ce(tl, targets)).epsilon(1e-5));
}

TEST_CASE("g_loss: random inputs match the scalar oracle, 20 instances") {
    Rng rng(7);
    for (int it = 0; it < 20; ++it) {
        const int n = 2 + rng.below(6), k = 2 + rng.below(5);
        Tensor tl = random_tensor({n, k}, rng, -3.0f, 3.0f);
        Tensor dl_ = random_tensor({n, k}, rng, -3.0f, 3.0f);
        Tensor sp = random_tensor({n}, rng, -3.0f, 3.0f);
        auto targets = random_labels(n, k, rng);
        const float wt = 0.5f + rng.uniform(), wd = rng.uniform(), ws = rng.uniform();
        Tape t;
        GLossParts gl = g_loss(t.leaf(tl), t.leaf(dl_), t.leaf(sp), targets, wt, wd, ws);
        const double want = oracle::g_loss(tl, dl_, sp, targets, wt, wd, ws);
        CHECK(t.val(gl.total)[0] == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("loss bookkeeping: totals equal the sum of recorded terms") {
    Rng rng(9);
    const int n = 6, k = 5;
    Tensor s_real = random_tensor({n}, rng), s_pert = random_tensor({n}, rng);
    Tensor c_adv = random_tensor({n, k}, rng), c_pert = random_tensor({n, k}, rng);
    auto y = random_labels(n, k, rng);
    Tape t;
    DLossParts dl = d_loss(t.leaf(s_real), t.leaf(s_pert), t.leaf(c_adv), y, t.leaf(c_pert), y);
    CHECK(t.val(dl.total)[0] ==
          doctest::Approx(dl.term_s + dl.term_c_adv + dl.term_c_pert).epsilon(1e-6));

    const float wt = 1.0f, wd = 0.7f, ws = 0.3f;
    GLossParts gl = g_loss(t.leaf(c_adv), t.leaf(c_pert), t.leaf(s_pert), y, wt, wd, ws);
    CHECK(t.val(gl.total)[0] ==
          doctest::Approx(wt * gl.term_target + wd * gl.term_d + ws * gl.term_s)
              .epsilon(1e-6));
}

TEST_CASE("targeted CE terms agree when head-C and the target see identical logits") {
    Rng rng(11);
    Tensor logits = random_tensor({4, 6}, rng, -2.0f, 2.0f);
    Tensor sp = random_tensor({4}, rng);
    auto targets = random_labels(4, 6, rng);
    Tape t;
    GLossParts gl = g_loss(t.leaf(logits), t.leaf(logits), t.leaf(sp), targets, 1, 1, 0);
    CHECK(gl.term_target == doctest::Approx(gl.term_d).epsilon(1e-6));
}

TEST_CASE("pretrain_encoder: epochs=0 leaves parameters unchanged") {
    Generator gen = Generator::build({1, 8, 8}, 4, 0.3f, 13);
    DatasetSplit data = make_blobs(4, 200, 17);
    std::vector<Tensor> before;
    gen.visit([&before](const std::string&, Tensor& t, bool) { before.push_back(t); });
    PretrainReport rep = pretrain_encoder(gen, data, 0, 1e-3f, 19);
    std::size_t i = 0;
    bool same = true;
    gen.visit([&](const std::string&, Tensor& t, bool) {
        same = same && bitwise_equal(before[i++], t);
    });
    CHECK(same);
    CHECK(rep.initial_mse == rep.final_mse);
}

TEST_CASE("pretrain_encoder: held-out reconstruction improves on blobs") {
    Generator gen = Generator::build({1, 8, 8}, 4, 0.3f, 23);
    DatasetSplit data = make_blobs(4, 1000, 29);
    PretrainReport rep = pretrain_encoder(gen, data, 5, 1e-3f, 31);
    CHECK(rep.final_mse < rep.initial_mse);
}

TEST_CASE("pretrain_encoder: deterministic under a fixed seed") {
    auto run = [] {
        Generator gen = Generator::build({1, 8, 8}, 4, 0.3f, 37);
        DatasetSplit data = make_blobs(4, 200, 41);
        pretrain_encoder(gen, data, 2, 1e-3f, 43);
        std::vector<Tensor> snap;
        gen.visit([&snap](const std::string&, Tensor& t, bool) { snap.push_back(t); });
        return snap;
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(a[i], b[i]));
}

TEST_CASE("pretrain_encoder: empty dataset rejected") {
    Generator gen = Generator::build({1, 8, 8}, 4, 0.3f, 47);
    DatasetSplit empty;
    CHECK_THROWS_AS(pretrain_encoder(gen, empty, 1, 1e-3f, 1), ContractError);
}

TEST_CASE("craft: eps=0 is the identity, bound always holds") {
    Generator gen = Generator::build({1, 8, 8}, 4, 0.3f, 53);
    gen.visit([](const std::string&, Tensor& t, bool p) {
        if (p)
            for (std::int64_t i = 0; i < t.numel(); ++i) t[i] += 0.05f * ((i % 7) - 3);
    });
    Rng rng(59);
    Tensor x = random_tensor({5, 1, 8, 8}, rng, 0.0f, 1.0f);
    std::vector<int> targets = {0, 1, 2, 3, 0};

    AdvBatch zero = craft(gen, x, targets, 0.0f);
    CHECK(bitwise_equal(zero.x_adv, x));

    AdvBatch adv = craft(gen, x, targets, 0.3f);
    check_adv_batch(adv);
    CHECK(adv.x_adv.max_abs() <= 1.0f);

    // crafting determinism
    AdvBatch again = craft(gen, x, targets, 0.3f);
    CHECK(bitwise_equal(adv.x_adv, again.x_adv));
}

TEST_CASE("train_step: parameters move, target stays frozen, history records terms") {
    DatasetSplit data = make_blobs(4, 64, 61);
    auto target = build_classifier(ArchId::ModelA, {1, 8, 8}, 4, 67);
    train_classifier(*target, data, 3, 1e-3f, 32, 71);

    AiGanConfig cfg = AiGanConfig::defaults_for({1, 8, 8});
    cfg.classes = 4;
    cfg.seed = 73;

    Generator gen = Generator::build({1, 8, 8}, 4, cfg.epsilon, 79);
    Discriminator disc = Discriminator::build({1, 8, 8}, 4, 83);
    TrainState st;
    st.gen = &gen;
    st.disc = &disc;
    st.target = target.get();
    st.g_opt = OptState::adam(cfg.g_lr, cfg.adam_beta1);
    st.d_opt = OptState::adam(cfg.d_lr, cfg.adam_beta1);
    st.rng = Rng(cfg.seed);

    std::vector<Tensor> tgt_before;
    target->visit([&](const std::string&, Tensor& t, bool) { tgt_before.push_back(t); });
    Tensor g_w_before, d_w_before;
    gen.visit([&](const std::string& n, Tensor& t, bool) {
        if (n == "out.w") g_w_before = t;
    });
    disc.visit([&](const std::string& n, Tensor& t, bool) {
        if (n == "c1.w") d_w_before = t;
    });

    train_step(st, slice_images(data.images, 0, 32), slice_labels(data.labels, 0, 32), cfg);

    std::size_t i = 0;
    bool frozen = true;
    target->visit([&](const std::string&, Tensor& t, bool) {
        frozen = frozen && bitwise_equal(tgt_before[i++], t);
    });
    CHECK(frozen);

    bool g_moved = false, d_moved = false;
    gen.visit([&](const std::string& n, Tensor& t, bool) {
        if (n == "out.w") g_moved = !bitwise_equal(g_w_before, t);
    });
    disc.visit([&](const std::string& n, Tensor& t, bool) {
        if (n == "c1.w") d_moved = !bitwise_equal(d_w_before, t);
    });
    CHECK(g_moved);
    CHECK(d_moved);

    REQUIRE(st.history.steps.size() == 1);
    const StepRecord& r = st.history.steps[0];
    CHECK(r.d_total ==
          doctest::Approx(r.d_s + r.d_c_adv + r.d_c_pert).epsilon(1e-5));
    CHECK(r.g_total ==
          doctest::Approx(cfg.w_target * r.g_target + cfg.w_d * r.g_d + cfg.w_s * r.g_s)
              .epsilon(1e-5));
}

TEST_CASE("train_aigan: rejects an unconverged target model") {
    DatasetSplit data = make_blobs(4, 64, 89);
    auto target = build_classifier(ArchId::ModelA, {1, 8, 8}, 4, 97); // untrained
    AiGanConfig cfg = AiGanConfig::defaults_for({1, 8, 8});
    cfg.classes = 4;
    CHECK_THROWS_AS(train_aigan(cfg, data, *target), ContractError);
}

TEST_CASE("train_aigan: stage2_epochs=0 keeps the zero-perturbation start") {
    DatasetSplit data = make_blobs(4, 128, 101);
    auto target = build_classifier(ArchId::ModelA, {1, 8, 8}, 4, 103);
    train_classifier(*target, data, 4, 1e-3f, 32, 107);
    REQUIRE(accuracy(*target, data) >= 0.9);

    AiGanConfig cfg = AiGanConfig::defaults_for({1, 8, 8});
    cfg.classes = 4;
    cfg.stage1_epochs = 1;
    cfg.stage2_epochs = 0;
    cfg.pretrain_epochs = 1;
    cfg.seed = 109;
    TrainResult res = train_aigan(cfg, data, *target);

    // decoder untouched by stage 1: crafted perturbation is exactly zero
    Tensor x = slice_images(data.images, 0, 8);
    AdvBatch adv = craft(res.generator, x, std::vector<int>(8, 2), cfg.epsilon);
    CHECK(bitwise_equal(adv.x_adv, x));
    // one epoch record per stage-1 + stage-2 epoch
    CHECK(res.history.epochs.size() == 1);
}

TEST_CASE("train_aigan: epoch records cover both stages") {
    DatasetSplit data = make_blobs(4, 128, 113);
    auto target = build_classifier(ArchId::ModelA, {1, 8, 8}, 4, 127);
    train_classifier(*target, data, 4, 1e-3f, 32, 131);
    REQUIRE(accuracy(*target, data) >= 0.9);

    AiGanConfig cfg = AiGanConfig::defaults_for({1, 8, 8});
    cfg.classes = 4;
    cfg.stage1_epochs = 2;
    cfg.stage2_epochs = 3;
    cfg.pretrain_epochs = 0;
    cfg.seed = 137;
    TrainResult res = train_aigan(cfg, data, *target);
    CHECK(res.history.epochs.size() == 5);
    int s1 = 0, s2 = 0;
    for (const auto& e : res.history.epochs) (e.stage == 1 ? s1 : s2) += 1;
    CHECK(s1 == 2);
    CHECK(s2 == 3);
    CHECK(!res.history.steps.empty());
}
