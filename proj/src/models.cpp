#include "aigan/models.hpp"

#include <cmath>

#include "aigan/errors.hpp"

namespace aigan {

ArchId parse_arch(const std::string& name) {
    if (name == "model_a") return ArchId::ModelA;
    if (name == "model_b") return ArchId::ModelB;
    if (name == "small_resnet") return ArchId::SmallResnet;
    if (name == "generator") return ArchId::Generator;
    if (name == "discriminator") return ArchId::Discriminator;
    throw ConfigError("unknown architecture '" + name + "'");
}

const char* arch_name(ArchId id) {
    switch (id) {
        case ArchId::ModelA: return "model_a";
        case ArchId::ModelB: return "model_b";
        case ArchId::SmallResnet: return "small_resnet";
        case ArchId::Generator: return "generator";
        case ArchId::Discriminator: return "discriminator";
    }
    return "?";
}

namespace {

void check_in_shape(InShape in) {
    const bool ok = (in.c == 1 && in.h == 28 && in.w == 28) ||
                    (in.c == 3 && in.h == 32 && in.w == 32) ||
                    (in.c == 1 && in.h == 8 && in.w == 8);
    if (!ok)
        throw ConfigError("unsupported input shape " + std::to_string(in.c) + "x" +
                          std::to_string(in.h) + "x" + std::to_string(in.w));
}

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// kaiming fan-in scaling
void kaiming_init(Tensor& w, int fan_in, Rng& rng) {
    rng.fill_normal(w, 0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
}

} // namespace

void check_batch_shape(const Tensor& x, InShape in, const char* who) {
    if (x.rank() != 4 || x.dim(1) != in.c || x.dim(2) != in.h || x.dim(3) != in.w)
        throw ShapeError(std::string(who) + ": expected [N, " + std::to_string(in.c) + ", " +
                         std::to_string(in.h) + ", " + std::to_string(in.w) + "], got " +
                         x.shape_str());
    if (x.dim(0) < 1) throw ShapeError(std::string(who) + ": empty batch");
}

// ---- layers ----

void LinearLayer::init(int in, int out, Rng& rng, bool zero) {
    w = Tensor({in, out});
    b = Tensor({out});
    if (!zero) kaiming_init(w, in, rng);
}

Value LinearLayer::forward(Tape& t, Value x) {
    return add_rowvec(matmul(x, t.param(&w)), t.param(&b));
}

void LinearLayer::visit(const std::string& prefix, const TensorVisitFn& fn) {
    fn(prefix + ".w", w, true);
    fn(prefix + ".b", b, true);
}

void Conv2dLayer::init(int cin, int cout, int k, int stride_, int pad_, Rng& rng, bool zero) {
    w = Tensor({cout, cin, k, k});
    b = Tensor({cout});
    stride = stride_;
    pad = pad_;
    if (!zero) kaiming_init(w, cin * k * k, rng);
}

Value Conv2dLayer::forward(Tape& t, Value x) {
    return add_chan_bias(conv2d(x, t.param(&w), stride, pad), t.param(&b));
}

void Conv2dLayer::visit(const std::string& prefix, const TensorVisitFn& fn) {
    fn(prefix + ".w", w, true);
    fn(prefix + ".b", b, true);
}

void ConvT2dLayer::init(int cin, int cout, int k, int stride_, int pad_, int out_pad_,
                        Rng& rng) {
    w = Tensor({cin, cout, k, k});
    b = Tensor({cout});
    stride = stride_;
    pad = pad_;
    out_pad = out_pad_;
    kaiming_init(w, cin * k * k, rng);
}

Value ConvT2dLayer::forward(Tape& t, Value x) {
    return add_chan_bias(conv2d_transpose(x, t.param(&w), stride, pad, out_pad), t.param(&b));
}

void ConvT2dLayer::visit(const std::string& prefix, const TensorVisitFn& fn) {
    fn(prefix + ".w", w, true);
    fn(prefix + ".b", b, true);
}

void BatchNormLayer::init(int channels) {
    gamma = Tensor::full({channels}, 1.0f);
    beta = Tensor({channels});
    run_mean = Tensor({channels});
    run_var = Tensor::full({channels}, 1.0f);
}

Value BatchNormLayer::forward(Tape& t, Value x, bool training) {
    return batchnorm2d(x, t.param(&gamma), t.param(&beta), &run_mean, &run_var, training,
                       momentum, eps);
}

void BatchNormLayer::visit(const std::string& prefix, const TensorVisitFn& fn) {
    fn(prefix + ".gamma", gamma, true);
    fn(prefix + ".beta", beta, true);
    fn(prefix + ".running_mean", run_mean, false);
    fn(prefix + ".running_var", run_var, false);
}

// ---- classifiers ----

ParamRefs Model::params() {
    ParamRefs out;
    visit([&out](const std::string& name, Tensor& t, bool is_param) {
        if (is_param) out.push_back({name, &t});
    });
    return out;
}

Tensor Model::logits(const Tensor& x) {
    check_batch_shape(x, in_, arch_name(arch_));
    Tape t;
    Value out = forward(t, t.leaf(x), false);
    return t.val(out);
}

Tensor classify(Model& m, const Tensor& x) { return m.logits(x); }

namespace {

// conv5x5(64)/relu -> conv5x5(64)/relu -> fc(128)/relu -> fc(K), stride-2 convs
class ModelA final : public Model {
public:
    ModelA(InShape in, int classes, std::uint64_t seed) : Model(ArchId::ModelA, in, classes) {
        Rng rng(seed);
        conv1_.init(in.c, 64, 5, 2, 2, rng);
        const int h1 = conv_out(in.h, 5, 2, 2), w1 = conv_out(in.w, 5, 2, 2);
        conv2_.init(64, 64, 5, 2, 2, rng);
        h2_ = conv_out(h1, 5, 2, 2);
        w2_ = conv_out(w1, 5, 2, 2);
        fc1_.init(64 * h2_ * w2_, 128, rng);
        fc2_.init(128, classes, rng);
    }

    Value forward(Tape& t, Value x, bool) override {
        Value h = relu(conv1_.forward(t, x));
        h = relu(conv2_.forward(t, h));
        h = reshape(h, {t.val(h).dim(0), 64 * h2_ * w2_});
        h = relu(fc1_.forward(t, h));
        return fc2_.forward(t, h);
    }

    void visit(const TensorVisitFn& fn) override {
        conv1_.visit("conv1", fn);
        conv2_.visit("conv2", fn);
        fc1_.visit("fc1", fn);
        fc2_.visit("fc2", fn);
    }

private:
    Conv2dLayer conv1_, conv2_;
    LinearLayer fc1_, fc2_;
    int h2_ = 0, w2_ = 0;
};

// conv3x3(32)x2/relu -> maxpool -> conv3x3(64)x2/relu -> maxpool ->
// fc(200)/relu -> fc(200)/relu -> fc(K)
class ModelB final : public Model {
public:
    ModelB(InShape in, int classes, std::uint64_t seed) : Model(ArchId::ModelB, in, classes) {
        Rng rng(seed);
        conv1_.init(in.c, 32, 3, 1, 1, rng);
        conv2_.init(32, 32, 3, 1, 1, rng);
        const int h1 = in.h / 2, w1 = in.w / 2;
        conv3_.init(32, 64, 3, 1, 1, rng);
        conv4_.init(64, 64, 3, 1, 1, rng);
        h2_ = h1 / 2;
        w2_ = w1 / 2;
        fc1_.init(64 * h2_ * w2_, 200, rng);
        fc2_.init(200, 200, rng);
        fc3_.init(200, classes, rng);
    }

    Value forward(Tape& t, Value x, bool) override {
        Value h = relu(conv1_.forward(t, x));
        h = maxpool2x2(relu(conv2_.forward(t, h)));
        h = relu(conv3_.forward(t, h));
        h = maxpool2x2(relu(conv4_.forward(t, h)));
        h = reshape(h, {t.val(h).dim(0), 64 * h2_ * w2_});
        h = relu(fc1_.forward(t, h));
        h = relu(fc2_.forward(t, h));
        return fc3_.forward(t, h);
    }

    void visit(const TensorVisitFn& fn) override {
        conv1_.visit("conv1", fn);
        conv2_.visit("conv2", fn);
        conv3_.visit("conv3", fn);
        conv4_.visit("conv4", fn);
        fc1_.visit("fc1", fn);
        fc2_.visit("fc2", fn);
        fc3_.visit("fc3", fn);
    }

private:
    Conv2dLayer conv1_, conv2_, conv3_, conv4_;
    LinearLayer fc1_, fc2_, fc3_;
    int h2_ = 0, w2_ = 0;
};

struct ResBlock {
    Conv2dLayer conv1, conv2;
    Conv2dLayer proj; // 1x1 when channels or stride change
    bool has_proj = false;

    void init(int cin, int cout, int stride, Rng& rng) {
        conv1.init(cin, cout, 3, stride, 1, rng);
        conv2.init(cout, cout, 3, 1, 1, rng);
        has_proj = (cin != cout) || (stride != 1);
        if (has_proj) proj.init(cin, cout, 1, stride, 0, rng);
    }

    Value forward(Tape& t, Value x) {
        Value h = relu(conv1.forward(t, x));
        h = conv2.forward(t, h);
        Value skip = has_proj ? proj.forward(t, x) : x;
        return relu(add(h, skip));
    }

    void visit(const std::string& prefix, const TensorVisitFn& fn) {
        conv1.visit(prefix + ".conv1", fn);
        conv2.visit(prefix + ".conv2", fn);
        if (has_proj) proj.visit(prefix + ".proj", fn);
    }
};

// 3-stage residual net (16/32/64, 2 blocks each)
class SmallResnet final : public Model {
public:
    SmallResnet(InShape in, int classes, std::uint64_t seed)
        : Model(ArchId::SmallResnet, in, classes) {
        Rng rng(seed);
        stem_.init(in.c, 16, 3, 1, 1, rng);
        blocks_[0].init(16, 16, 1, rng);
        blocks_[1].init(16, 16, 1, rng);
        blocks_[2].init(16, 32, 2, rng);
        blocks_[3].init(32, 32, 1, rng);
        blocks_[4].init(32, 64, 2, rng);
        blocks_[5].init(64, 64, 1, rng);
        fc_.init(64, classes, rng);
    }

    Value forward(Tape& t, Value x, bool) override {
        Value h = relu(stem_.forward(t, x));
        for (auto& b : blocks_) h = b.forward(t, h);
        return fc_.forward(t, avgpool_global(h));
    }

    void visit(const TensorVisitFn& fn) override {
        stem_.visit("stem", fn);
        for (int i = 0; i < 6; ++i) blocks_[i].visit("block" + std::to_string(i), fn);
        fc_.visit("fc", fn);
    }

private:
    Conv2dLayer stem_;
    ResBlock blocks_[6];
    LinearLayer fc_;
};

} // namespace

std::unique_ptr<Model> build_classifier(ArchId id, InShape in, int classes,
                                        std::uint64_t seed) {
    check_in_shape(in);
    if (classes < 2) throw ConfigError("classifier needs at least 2 classes");
    switch (id) {
        case ArchId::ModelA: return std::make_unique<ModelA>(in, classes, seed);
        case ArchId::ModelB: return std::make_unique<ModelB>(in, classes, seed);
        case ArchId::SmallResnet: return std::make_unique<SmallResnet>(in, classes, seed);
        default:
            throw ConfigError(std::string("'") + arch_name(id) + "' is not a classifier");
    }
}

std::unique_ptr<Model> clone_classifier(Model& m) {
    auto copy = build_classifier(m.arch(), m.in_shape(), m.classes(), 0);
    std::vector<Tensor*> src;
    m.visit([&src](const std::string&, Tensor& t, bool) { src.push_back(&t); });
    std::size_t i = 0;
    copy->visit([&src, &i](const std::string&, Tensor& t, bool) { t = *src[i++]; });
    return copy;
}

// ---- generator ----

Generator Generator::build(InShape in, int classes, float eps_max, std::uint64_t seed) {
    check_in_shape(in);
    if (classes < 2) throw ConfigError("generator needs at least 2 classes");
    if (!(eps_max > 0.0f) || eps_max > 1.0f)
        throw ConfigError("generator eps_max must be in (0, 1]");
    Generator g;
    g.in_ = in;
    g.classes_ = classes;
    g.eps_max_ = eps_max;
    Rng rng(seed);

    g.enc1_.init(in.c, 32, 3, 2, 1, rng);
    g.ebn1_.init(32);
    g.h1_ = conv_out(in.h, 3, 2, 1);
    g.w1_ = conv_out(in.w, 3, 2, 1);
    g.enc2_.init(32, 64, 3, 2, 1, rng);
    g.ebn2_.init(64);
    g.h2_ = conv_out(g.h1_, 3, 2, 1);
    g.w2_ = conv_out(g.w1_, 3, 2, 1);
    g.enc3_.init(64, 128, 3, 2, 1, rng);
    g.ebn3_.init(128);
    g.bh_ = conv_out(g.h2_, 3, 2, 1);
    g.bw_ = conv_out(g.w2_, 3, 2, 1);

    auto out_pad_for = [](int from, int to) {
        const int base = (from - 1) * 2 - 2 + 3;
        if (to - base < 0 || to - base > 1)
            throw ContractError("decoder stage cannot reach target size");
        return to - base;
    };
    g.dec1_.init(128 + classes, 64, 3, 2, 1, out_pad_for(g.bh_, g.h2_), rng);
    g.dbn1_.init(64);
    g.dec2_.init(64, 32, 3, 2, 1, out_pad_for(g.h2_, g.h1_), rng);
    g.dbn2_.init(32);
    g.dec3_.init(32, 32, 3, 2, 1, out_pad_for(g.h1_, in.h), rng);
    g.dbn3_.init(32);
    g.out_.init(32, in.c, 3, 1, 1, rng, /*zero=*/true);
    return g;
}

Value Generator::encode(Tape& t, Value x, bool training) {
    Value h = relu(ebn1_.forward(t, enc1_.forward(t, x), training));
    h = relu(ebn2_.forward(t, enc2_.forward(t, h), training));
    return relu(ebn3_.forward(t, enc3_.forward(t, h), training));
}

Value Generator::decode(Tape& t, Value feat, const std::vector<int>& targets, float eps,
                        bool training) {
    if (!(eps >= 0.0f) || eps > eps_max_)
        throw ContractError("perturb: eps " + std::to_string(eps) + " outside [0, eps_max=" +
                            std::to_string(eps_max_) + "]");
    for (int tc : targets)
        if (tc < 0 || tc >= classes_)
            throw IndexError("target class " + std::to_string(tc) + " outside [0, " +
                             std::to_string(classes_) + ")");
    const Tensor& fv = t.val(feat);
    if (static_cast<int>(targets.size()) != fv.dim(0))
        throw ShapeError("decode: " + std::to_string(targets.size()) + " targets for batch " +
                         std::to_string(fv.dim(0)));

    Value cond = t.leaf(onehot_tiled(targets, classes_, bh_, bw_));
    Value h = concat_channels(feat, cond);
    h = relu(dbn1_.forward(t, dec1_.forward(t, h), training));
    h = relu(dbn2_.forward(t, dec2_.forward(t, h), training));
    h = relu(dbn3_.forward(t, dec3_.forward(t, h), training));
    Value raw = out_.forward(t, h);
    return scale(tanh_op(raw), eps);
}

Value Generator::perturb(Tape& t, Value x, const std::vector<int>& targets, float eps,
                         bool training) {
    check_batch_shape(t.val(x), in_, "perturb");
    return decode(t, encode(t, x, training), targets, eps, training);
}

Tensor Generator::perturb_eval(const Tensor& x, const std::vector<int>& targets, float eps) {
    Tape t;
    Value d = perturb(t, t.leaf(x), targets, eps, false);
    return t.val(d);
}

Tensor Generator::encode_eval(const Tensor& x) {
    check_batch_shape(x, in_, "encode");
    Tape t;
    Value f = encode(t, t.leaf(x), false);
    return t.val(f);
}

void Generator::visit(const TensorVisitFn& fn) {
    enc1_.visit("enc1", fn);
    ebn1_.visit("ebn1", fn);
    enc2_.visit("enc2", fn);
    ebn2_.visit("ebn2", fn);
    enc3_.visit("enc3", fn);
    ebn3_.visit("ebn3", fn);
    dec1_.visit("dec1", fn);
    dbn1_.visit("dbn1", fn);
    dec2_.visit("dec2", fn);
    dbn2_.visit("dbn2", fn);
    dec3_.visit("dec3", fn);
    dbn3_.visit("dbn3", fn);
    out_.visit("out", fn);
}

ParamRefs Generator::params() {
    ParamRefs out;
    visit([&out](const std::string& name, Tensor& t, bool is_param) {
        if (is_param) out.push_back({name, &t});
    });
    return out;
}

ParamRefs Generator::encoder_params() {
    ParamRefs out;
    auto add = [&out](const std::string& name, Tensor& t, bool is_param) {
        if (is_param) out.push_back({name, &t});
    };
    enc1_.visit("enc1", add);
    ebn1_.visit("ebn1", add);
    enc2_.visit("enc2", add);
    ebn2_.visit("ebn2", add);
    enc3_.visit("enc3", add);
    ebn3_.visit("ebn3", add);
    return out;
}

Tensor perturb(Generator& g, const Tensor& x, const std::vector<int>& targets, float eps) {
    return g.perturb_eval(x, targets, eps);
}

Tensor encode(Generator& g, const Tensor& x) { return g.encode_eval(x); }

Tensor onehot_tiled(const std::vector<int>& targets, int classes, int h, int w) {
    const int n = static_cast<int>(targets.size());
    Tensor out({n, classes, h, w});
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        float* plane =
            out.data() + (static_cast<std::int64_t>(i) * classes + targets[(std::size_t)i]) * hw;
        for (std::int64_t j = 0; j < hw; ++j) plane[j] = 1.0f;
    }
    return out;
}

// ---- discriminator ----

Discriminator Discriminator::build(InShape in, int classes, std::uint64_t seed) {
    check_in_shape(in);
    if (classes < 2) throw ConfigError("discriminator needs at least 2 classes");
    Discriminator d;
    d.in_ = in;
    d.classes_ = classes;
    Rng rng(seed);
    d.c1_.init(in.c, 32, 3, 2, 1, rng);
    const int h1 = conv_out(in.h, 3, 2, 1), w1 = conv_out(in.w, 3, 2, 1);
    d.c2_.init(32, 64, 3, 2, 1, rng);
    d.bn2_.init(64);
    const int h2 = conv_out(h1, 3, 2, 1), w2 = conv_out(w1, 3, 2, 1);
    d.c3_.init(64, 128, 3, 2, 1, rng);
    d.bn3_.init(128);
    d.fh_ = conv_out(h2, 3, 2, 1);
    d.fw_ = conv_out(w2, 3, 2, 1);
    d.head_s_.init(128 * d.fh_ * d.fw_, 1, rng);
    d.head_c_.init(128 * d.fh_ * d.fw_, classes, rng);
    return d;
}

Discriminator::Heads Discriminator::forward(Tape& t, Value x, bool training) {
    check_batch_shape(t.val(x), in_, "discriminate");
    const int n = t.val(x).dim(0);
    Value h = leaky_relu(c1_.forward(t, x), 0.2f);
    h = leaky_relu(bn2_.forward(t, c2_.forward(t, h), training), 0.2f);
    h = leaky_relu(bn3_.forward(t, c3_.forward(t, h), training), 0.2f);
    Value flat = reshape(h, {n, 128 * fh_ * fw_});
    Value s = reshape(head_s_.forward(t, flat), {n});
    Value c = head_c_.forward(t, flat);
    return Heads{s, c};
}

void Discriminator::visit(const TensorVisitFn& fn) {
    c1_.visit("c1", fn);
    c2_.visit("c2", fn);
    bn2_.visit("bn2", fn);
    c3_.visit("c3", fn);
    bn3_.visit("bn3", fn);
    head_s_.visit("head_s", fn);
    head_c_.visit("head_c", fn);
}

ParamRefs Discriminator::params() {
    ParamRefs out;
    visit([&out](const std::string& name, Tensor& t, bool is_param) {
        if (is_param) out.push_back({name, &t});
    });
    return out;
}

std::pair<Tensor, Tensor> discriminate(Discriminator& d, const Tensor& x) {
    Tape t;
    auto heads = d.forward(t, t.leaf(x), false);
    return {t.val(heads.s), t.val(heads.c)};
}

} // namespace aigan
