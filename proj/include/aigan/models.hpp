#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "aigan/optim.hpp"
#include "aigan/rng.hpp"
#include "aigan/tape.hpp"

namespace aigan {

enum class ArchId { ModelA, ModelB, SmallResnet, Generator, Discriminator };

ArchId parse_arch(const std::string& name); // throws ConfigError on unknown ids
const char* arch_name(ArchId id);

struct InShape {
    int c = 1, h = 28, w = 28;
    bool operator==(const InShape&) const = default;
};

// visits (name, tensor, is_param) in a fixed order; buffers (batchnorm
// running statistics) report is_param = false but are still checkpointed
using TensorVisitFn = std::function<void(const std::string&, Tensor&, bool)>;

// ---- layers ----

struct LinearLayer {
    Tensor w, b; // w[in,out]
    void init(int in, int out, Rng& rng, bool zero = false);
    Value forward(Tape& t, Value x);
    void visit(const std::string& prefix, const TensorVisitFn& fn);
};

struct Conv2dLayer {
    Tensor w, b; // w[F,C,kh,kw]
    int stride = 1, pad = 0;
    void init(int cin, int cout, int k, int stride, int pad, Rng& rng, bool zero = false);
    Value forward(Tape& t, Value x);
    void visit(const std::string& prefix, const TensorVisitFn& fn);
};

struct ConvT2dLayer {
    Tensor w, b; // w[Cin,Cout,kh,kw]
    int stride = 2, pad = 1, out_pad = 0;
    void init(int cin, int cout, int k, int stride, int pad, int out_pad, Rng& rng);
    Value forward(Tape& t, Value x);
    void visit(const std::string& prefix, const TensorVisitFn& fn);
};

struct BatchNormLayer {
    Tensor gamma, beta, run_mean, run_var;
    float momentum = 0.1f, eps = 1e-5f;
    void init(int channels);
    Value forward(Tape& t, Value x, bool training);
    void visit(const std::string& prefix, const TensorVisitFn& fn);
};

// ---- target classifiers ----

class Model {
public:
    virtual ~Model() = default;
    ArchId arch() const { return arch_; }
    InShape in_shape() const { return in_; }
    int classes() const { return classes_; }

    // logits [N,K]; training flag is accepted for interface uniformity, the
    // bundled classifiers carry no batch statistics
    virtual Value forward(Tape& t, Value x, bool training) = 0;
    virtual void visit(const TensorVisitFn& fn) = 0;

    ParamRefs params();
    Tensor logits(const Tensor& x); // eval-mode forward, no gradients kept

protected:
    Model(ArchId a, InShape in, int classes) : arch_(a), in_(in), classes_(classes) {}
    ArchId arch_;
    InShape in_;
    int classes_;
};

std::unique_ptr<Model> build_classifier(ArchId id, InShape in, int classes,
                                        std::uint64_t seed);
std::unique_ptr<Model> clone_classifier(Model& m); // same arch+seed-free deep copy

// logits for a batch in [0,1]; throws ShapeError on layout mismatch
Tensor classify(Model& m, const Tensor& x);

// ---- conditional perturbation generator ----

// Encoder-decoder with the tiled one-hot target concatenated at the
// bottleneck. The raw decoder output is passed through eps*tanh, so every
// emitted perturbation satisfies max|delta| <= eps by construction.
class Generator {
public:
    Generator() = default;
    static Generator build(InShape in, int classes, float eps_max, std::uint64_t seed);

    Value encode(Tape& t, Value x, bool training);
    // feat from encode() on the same tape; targets one per sample
    Value decode(Tape& t, Value feat, const std::vector<int>& targets, float eps,
                 bool training);
    Value perturb(Tape& t, Value x, const std::vector<int>& targets, float eps,
                  bool training);

    Tensor perturb_eval(const Tensor& x, const std::vector<int>& targets, float eps);
    Tensor encode_eval(const Tensor& x);

    void visit(const TensorVisitFn& fn);
    ParamRefs params();
    ParamRefs encoder_params();

    InShape in_shape() const { return in_; }
    int classes() const { return classes_; }
    float eps_max() const { return eps_max_; }
    // [C,H,W] of the encoder output
    std::vector<int> bottleneck_shape() const { return {128, bh_, bw_}; }

private:
    InShape in_;
    int classes_ = 0;
    float eps_max_ = 0.0f;
    int h1_ = 0, w1_ = 0, h2_ = 0, w2_ = 0, bh_ = 0, bw_ = 0;

    Conv2dLayer enc1_, enc2_, enc3_;
    BatchNormLayer ebn1_, ebn2_, ebn3_;
    ConvT2dLayer dec1_, dec2_, dec3_;
    BatchNormLayer dbn1_, dbn2_, dbn3_;
    Conv2dLayer out_; // zero-initialized: a fresh generator emits delta = 0
};

Tensor perturb(Generator& g, const Tensor& x, const std::vector<int>& targets, float eps);
Tensor encode(Generator& g, const Tensor& x);

// ---- two-head discriminator ----

// Shared conv trunk; head S emits one real-vs-perturbed logit per sample,
// head C emits K class logits.
class Discriminator {
public:
    struct Heads {
        Value s; // [N]
        Value c; // [N,K]
    };

    Discriminator() = default;
    static Discriminator build(InShape in, int classes, std::uint64_t seed);

    Heads forward(Tape& t, Value x, bool training);

    void visit(const TensorVisitFn& fn);
    ParamRefs params();
    InShape in_shape() const { return in_; }
    int classes() const { return classes_; }

private:
    InShape in_;
    int classes_ = 0;
    int fh_ = 0, fw_ = 0;

    Conv2dLayer c1_, c2_, c3_;
    BatchNormLayer bn2_, bn3_;
    LinearLayer head_s_, head_c_;
};

// (sigmoid(s) is P(real), softmax(c) is P(class))
std::pair<Tensor, Tensor> discriminate(Discriminator& d, const Tensor& x);

// [N,K,h,w] with ones in each sample's target channel
Tensor onehot_tiled(const std::vector<int>& targets, int classes, int h, int w);

void check_batch_shape(const Tensor& x, InShape in, const char* who);

} // namespace aigan
