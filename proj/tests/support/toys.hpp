#pragma once

// Tiny hand-rolled models for attack tests: a fixed-weight logistic toy with
// an analytic gradient, a constant-output model, and a small trainable MLP on
// 2-feature inputs packed as [N,1,1,2] batches.

#include "aigan/dataset.hpp"
#include "aigan/models.hpp"
#include "aigan/rng.hpp"

namespace toys {

using namespace aigan;

// logits [0, w.x]: CE toward class 1 is exactly -log sigmoid(w.x)
class Logistic final : public Model {
public:
    Logistic(float w0, float w1)
        : Model(ArchId::ModelA, InShape{1, 1, 2}, 2), w_({2, 1}, {w0, w1}) {}

    Value forward(Tape& t, Value x, bool) override {
        Value flat = reshape(x, {t.val(x).dim(0), 2});
        Value z = matmul(flat, t.param(&w_));          // [N,1]
        Value zeros = t.leaf(Tensor({t.val(x).dim(0), 1}));
        return concat_cols(t, zeros, z);
    }

    void visit(const TensorVisitFn& fn) override { fn("w", w_, true); }

private:
    // [N,1] + [N,1] -> [N,2] via reshape of a channel concat
    static Value concat_cols(Tape& t, Value a, Value b) {
        const int n = t.val(a).dim(0);
        Value a4 = reshape(a, {n, 1, 1, 1});
        Value b4 = reshape(b, {n, 1, 1, 1});
        return reshape(concat_channels(a4, b4), {n, 2});
    }

    Tensor w_;
};

class ConstantOutput final : public Model {
public:
    ConstantOutput(InShape in, int classes, int always)
        : Model(ArchId::ModelA, in, classes), always_(always), dummy_({1}) {}

    Value forward(Tape& t, Value x, bool) override {
        const int n = t.val(x).dim(0);
        Tensor logits({n, classes_});
        for (int i = 0; i < n; ++i) logits[i * classes_ + always_] = 10.0f;
        // keep a differentiable-through-zero path so attacks see a gradient op
        Value probe = mean_op(mul(x, t.leaf(Tensor::zeros(t.val(x).shape()))));
        Value base = t.leaf(logits);
        return add_rowvec(base, reshape(stack_scalar(t, probe, classes_), {classes_}));
    }

    void visit(const TensorVisitFn& fn) override { fn("dummy", dummy_, true); }

private:
    static Value stack_scalar(Tape& t, Value s, int k) {
        Value v = reshape(s, {1, 1, 1, 1});
        Value out = v;
        for (int i = 1; i < k; ++i) out = concat_channels(out, v);
        return out;
    }

    int always_;
    Tensor dummy_;
};

class TinyMlp final : public Model {
public:
    explicit TinyMlp(std::uint64_t seed) : Model(ArchId::ModelA, InShape{1, 1, 2}, 2) {
        Rng rng(seed);
        fc1_.init(2, 16, rng);
        fc2_.init(16, 2, rng);
    }

    Value forward(Tape& t, Value x, bool) override {
        Value flat = reshape(x, {t.val(x).dim(0), 2});
        Value h = relu(fc1_.forward(t, flat));
        return fc2_.forward(t, h);
    }

    void visit(const TensorVisitFn& fn) override {
        fc1_.visit("fc1", fn);
        fc2_.visit("fc2", fn);
    }

private:
    LinearLayer fc1_, fc2_;
};

// two linearly separable 2-d blobs around (0.3,0.3) and (0.7,0.7)
inline DatasetSplit blobs2d(int n, std::uint64_t seed, float noise = 0.05f) {
    Rng rng(seed);
    DatasetSplit out;
    out.images = Tensor({n, 1, 1, 2});
    out.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int k = i % 2;
        const float cx = k == 0 ? 0.3f : 0.7f;
        out.images[i * 2 + 0] = cx + rng.uniform(-noise, noise);
        out.images[i * 2 + 1] = cx + rng.uniform(-noise, noise);
        out.labels[(std::size_t)i] = k;
    }
    out.provenance = "blobs2d";
    return out;
}

} // namespace toys
