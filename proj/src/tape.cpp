// Tape core, elementwise ops, reductions and loss heads. Convolution,
// pooling and batchnorm live in convops.cpp.

#include "aigan/tape.hpp"

#include <cmath>
#include <cstring>

#include "aigan/kernels.hpp"

namespace aigan {

// ---- Gradients ----

const Tensor& Gradients::at_node(int id) const {
    auto it = by_node_.find(id);
    if (it == by_node_.end())
        throw ContractError("no gradient recorded for node " + std::to_string(id));
    return it->second;
}

const Tensor& Gradients::at(const Tensor* bound) const {
    auto it = node_of_.find(bound);
    if (it == node_of_.end()) throw ContractError("no gradient entry for parameter");
    return by_node_.at(it->second);
}

bool Gradients::has(const Tensor* bound) const { return node_of_.count(bound) != 0; }

// ---- Tape ----

Value Tape::leaf(Tensor t) {
    nodes_.push_back(Node{std::move(t), {}, nullptr, false, nullptr});
    return Value{this, size() - 1};
}

Value Tape::param(Tensor* p) {
    if (freeze_params_) {
        auto fit = frozen_nodes_.find(p);
        if (fit != frozen_nodes_.end()) return Value{this, fit->second};
        nodes_.push_back(Node{*p, {}, nullptr, false, nullptr});
        frozen_nodes_[p] = size() - 1;
        return Value{this, size() - 1};
    }
    auto it = param_nodes_.find(p);
    if (it != param_nodes_.end()) return Value{this, it->second};
    nodes_.push_back(Node{*p, {}, nullptr, true, p});
    param_nodes_[p] = size() - 1;
    return Value{this, size() - 1};
}

Value Tape::input(Tensor t) {
    nodes_.push_back(Node{std::move(t), {}, nullptr, true, nullptr});
    return Value{this, size() - 1};
}

int Tape::emit(Tensor out, std::vector<int> inputs, BackFn back) {
    bool ng = false;
    for (int i : inputs) ng = ng || nodes_[static_cast<std::size_t>(i)].needs_grad;
    nodes_.push_back(Node{std::move(out), std::move(inputs), ng ? std::move(back) : nullptr,
                          ng, nullptr});
    return size() - 1;
}

Tensor& Tape::grad(int id) {
    auto& slot = grads_[static_cast<std::size_t>(id)];
    if (!grad_alloc_[static_cast<std::size_t>(id)]) {
        slot = Tensor::zeros(nodes_[static_cast<std::size_t>(id)].val.shape());
        grad_alloc_[static_cast<std::size_t>(id)] = 1;
    }
    return slot;
}

Gradients Tape::backward(Value loss) {
    if (loss.tape != this) throw ContractError("loss node belongs to a different tape");
    const Tensor& lv = val(loss.id);
    if (lv.numel() != 1)
        throw ContractError("backward requires a scalar loss, got shape " + lv.shape_str());

    grads_.assign(nodes_.size(), Tensor{});
    grad_alloc_.assign(nodes_.size(), 0);
    grads_live_ = true;
    grad(loss.id)[0] = 1.0f;

    for (int id = loss.id; id >= 0; --id) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.needs_grad || !node.back) continue;
        if (!grad_alloc_[static_cast<std::size_t>(id)]) continue; // loss-independent
        node.back(*this, id);
    }

    Gradients out;
    for (int id = 0; id < size(); ++id) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.needs_grad || !node.inputs.empty()) continue;
        if (grad_alloc_[static_cast<std::size_t>(id)])
            out.by_node_.emplace(id, std::move(grads_[static_cast<std::size_t>(id)]));
        else
            out.by_node_.emplace(id, Tensor::zeros(node.val.shape()));
        if (node.bind) out.node_of_[node.bind] = id;
    }
    grads_.clear();
    grad_alloc_.clear();
    grads_live_ = false;
    return out;
}

// ---- op helpers ----

namespace {

void check_same_tape(Value a, Value b, const char* op) {
    if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands on different tapes");
}

const kern::Table& K() { return kern::active(); }

} // namespace

// ---- elementwise ----

Value add(Value a, Value b) {
    check_same_tape(a, b, "add");
    Tape& t = *a.tape;
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    Tensor::check_same_shape(av, bv, "add");
    Tensor out(av.shape());
    K().add(av.data(), bv.data(), out.data(), out.numel());
    int id = t.emit(std::move(out), {a.id, b.id}, [a, b](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        if (tp.needs_grad(a.id)) K().axpy(1.0f, gy.data(), tp.grad(a.id).data(), gy.numel());
        if (tp.needs_grad(b.id)) K().axpy(1.0f, gy.data(), tp.grad(b.id).data(), gy.numel());
    });
    return Value{&t, id};
}

Value sub(Value a, Value b) {
    check_same_tape(a, b, "sub");
    Tape& t = *a.tape;
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    Tensor::check_same_shape(av, bv, "sub");
    Tensor out(av.shape());
    K().sub(av.data(), bv.data(), out.data(), out.numel());
    int id = t.emit(std::move(out), {a.id, b.id}, [a, b](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        if (tp.needs_grad(a.id)) K().axpy(1.0f, gy.data(), tp.grad(a.id).data(), gy.numel());
        if (tp.needs_grad(b.id)) K().axpy(-1.0f, gy.data(), tp.grad(b.id).data(), gy.numel());
    });
    return Value{&t, id};
}

Value mul(Value a, Value b) {
    check_same_tape(a, b, "mul");
    Tape& t = *a.tape;
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    Tensor::check_same_shape(av, bv, "mul");
    Tensor out(av.shape());
    K().mul(av.data(), bv.data(), out.data(), out.numel());
    int id = t.emit(std::move(out), {a.id, b.id}, [a, b](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        const std::int64_t n = gy.numel();
        Tensor tmp(gy.shape());
        if (tp.needs_grad(a.id)) {
            K().mul(gy.data(), tp.val(b).data(), tmp.data(), n);
            K().axpy(1.0f, tmp.data(), tp.grad(a.id).data(), n);
        }
        if (tp.needs_grad(b.id)) {
            K().mul(gy.data(), tp.val(a).data(), tmp.data(), n);
            K().axpy(1.0f, tmp.data(), tp.grad(b.id).data(), n);
        }
    });
    return Value{&t, id};
}

Value scale(Value a, float s) {
    Tape& t = *a.tape;
    const Tensor& av = t.val(a);
    Tensor out(av.shape());
    K().scale(av.data(), s, out.data(), out.numel());
    int id = t.emit(std::move(out), {a.id}, [a, s](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        K().axpy(s, gy.data(), tp.grad(a.id).data(), gy.numel());
    });
    return Value{&t, id};
}

Value relu(Value x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    Tensor out(xv.shape());
    K().relu(xv.data(), out.data(), out.numel());
    int id = t.emit(std::move(out), {x.id}, [x](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        K().relu_bwd(tp.val(x).data(), gy.data(), tp.grad(x.id).data(), gy.numel());
    });
    return Value{&t, id};
}

Value leaky_relu(Value x, float slope) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    Tensor out(xv.shape());
    K().leaky_relu(xv.data(), slope, out.data(), out.numel());
    int id = t.emit(std::move(out), {x.id}, [x, slope](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        K().leaky_relu_bwd(tp.val(x).data(), slope, gy.data(), tp.grad(x.id).data(),
                           gy.numel());
    });
    return Value{&t, id};
}

Value tanh_op(Value x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    Tensor out(xv.shape());
    K().tanh(xv.data(), out.data(), out.numel());
    int id = t.emit(std::move(out), {x.id}, [x](Tape& tp, int self) {
        // d tanh = 1 - y^2, from the cached output
        const Tensor& gy = tp.grad(self);
        const Tensor& y = tp.val(self);
        Tensor& gx = tp.grad(x.id);
        for (std::int64_t i = 0; i < gy.numel(); ++i)
            gx[i] += gy[i] * (1.0f - y[i] * y[i]);
    });
    return Value{&t, id};
}

Value sigmoid_op(Value x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    Tensor out(xv.shape());
    K().sigmoid(xv.data(), out.data(), out.numel());
    int id = t.emit(std::move(out), {x.id}, [x](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        const Tensor& y = tp.val(self);
        Tensor& gx = tp.grad(x.id);
        for (std::int64_t i = 0; i < gy.numel(); ++i)
            gx[i] += gy[i] * y[i] * (1.0f - y[i]);
    });
    return Value{&t, id};
}

Value clamp_op(Value x, float lo, float hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    Tensor out(xv.shape());
    K().clamp(xv.data(), lo, hi, out.data(), out.numel());
    int id = t.emit(std::move(out), {x.id}, [x, lo, hi](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        K().clamp_bwd(tp.val(x).data(), lo, hi, gy.data(), tp.grad(x.id).data(), gy.numel());
    });
    return Value{&t, id};
}

// ---- reductions ----

Value sum_op(Value x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    Tensor out = Tensor::scalar(K().sum(xv.data(), xv.numel()));
    int id = t.emit(std::move(out), {x.id}, [x](Tape& tp, int self) {
        const float g = tp.grad(self)[0];
        Tensor& gx = tp.grad(x.id);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
    return Value{&t, id};
}

Value mean_op(Value x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    const float inv = 1.0f / static_cast<float>(xv.numel());
    Tensor out = Tensor::scalar(K().sum(xv.data(), xv.numel()) * inv);
    int id = t.emit(std::move(out), {x.id}, [x, inv](Tape& tp, int self) {
        const float g = tp.grad(self)[0] * inv;
        Tensor& gx = tp.grad(x.id);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
    return Value{&t, id};
}

// ---- loss heads ----

namespace {

void check_labels(const Tensor& logits, const std::vector<int>& labels, const char* op) {
    if (logits.rank() != 2)
        throw ShapeError(std::string(op) + ": logits must be [N,K], got " + logits.shape_str());
    if (static_cast<int>(labels.size()) != logits.dim(0))
        throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(logits.dim(0)));
    const int k = logits.dim(1);
    for (int y : labels)
        if (y < 0 || y >= k)
            throw IndexError(std::string(op) + ": label " + std::to_string(y) +
                             " outside [0, " + std::to_string(k) + ")");
}

} // namespace

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax: logits must be [N,K]");
    const int n = logits.dim(0), k = logits.dim(1);
    Tensor p(logits.shape());
    for (int i = 0; i < n; ++i) {
        const float* row = logits.data() + static_cast<std::int64_t>(i) * k;
        float* prow = p.data() + static_cast<std::int64_t>(i) * k;
        float mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        float denom = 0.0f;
        for (int j = 0; j < k; ++j) {
            prow[j] = std::exp(row[j] - mx);
            denom += prow[j];
        }
        const float inv = 1.0f / denom;
        for (int j = 0; j < k; ++j) prow[j] *= inv;
    }
    return p;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("argmax: logits must be [N,K]");
    const int n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const float* row = logits.data() + static_cast<std::int64_t>(i) * k;
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: need rank 2, got " + a.shape_str());
    const int m = a.dim(0), n = a.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::int64_t>(j) * m + i] = a[static_cast<std::int64_t>(i) * n + j];
    return out;
}

Value softmax_ce(Value logits, const std::vector<int>& labels) {
    Tape& t = *logits.tape;
    const Tensor& z = t.val(logits);
    check_labels(z, labels, "softmax_ce");
    const int n = z.dim(0), k = z.dim(1);

    // max-subtracted log-softmax; ±1000 logits must not overflow
    auto probs = std::make_shared<Tensor>(softmax_rows(z));
    float loss = 0.0f;
    for (int i = 0; i < n; ++i) {
        const float p = (*probs)[static_cast<std::int64_t>(i) * k + labels[static_cast<std::size_t>(i)]];
        loss -= std::log(std::max(p, 1e-30f));
    }
    loss /= static_cast<float>(n);

    int id = t.emit(Tensor::scalar(loss), {logits.id},
                    [logits, labels, probs, n, k](Tape& tp, int self) {
                        const float g = tp.grad(self)[0] / static_cast<float>(n);
                        Tensor& gz = tp.grad(logits.id);
                        for (int i = 0; i < n; ++i) {
                            const std::int64_t off = static_cast<std::int64_t>(i) * k;
                            for (int j = 0; j < k; ++j) gz[off + j] += g * (*probs)[off + j];
                            gz[off + labels[static_cast<std::size_t>(i)]] -= g;
                        }
                    });
    return Value{&t, id};
}

Value bce_logits(Value s, float target01) {
    Tape& t = *s.tape;
    const Tensor& sv = t.val(s);
    const std::int64_t n = sv.numel();
    // stable form: max(s,0) - s*y + log1p(exp(-|s|))
    float loss = 0.0f;
    for (std::int64_t i = 0; i < n; ++i) {
        const float x = sv[i];
        loss += std::max(x, 0.0f) - x * target01 + std::log1p(std::exp(-std::fabs(x)));
    }
    loss /= static_cast<float>(n);
    int id = t.emit(Tensor::scalar(loss), {s.id}, [s, target01, n](Tape& tp, int self) {
        const float g = tp.grad(self)[0] / static_cast<float>(n);
        const Tensor& sv2 = tp.val(s);
        Tensor& gs = tp.grad(s.id);
        for (std::int64_t i = 0; i < n; ++i) {
            const float sig = 1.0f / (1.0f + std::exp(-sv2[i]));
            gs[i] += g * (sig - target01);
        }
    });
    return Value{&t, id};
}

Value margin_loss(Value logits, const std::vector<int>& targets, float kappa) {
    Tape& t = *logits.tape;
    const Tensor& z = t.val(logits);
    check_labels(z, targets, "margin_loss");
    const int n = z.dim(0), k = z.dim(1);
    if (k < 2) throw ContractError("margin_loss: needs at least 2 classes");

    auto runner_up = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n));
    auto active = std::make_shared<std::vector<char>>(static_cast<std::size_t>(n));
    float loss = 0.0f;
    for (int i = 0; i < n; ++i) {
        const float* row = z.data() + static_cast<std::int64_t>(i) * k;
        const int ti = targets[static_cast<std::size_t>(i)];
        int best = ti == 0 ? 1 : 0;
        for (int j = 0; j < k; ++j)
            if (j != ti && row[j] > row[best]) best = j;
        (*runner_up)[static_cast<std::size_t>(i)] = best;
        const float m = row[best] - row[ti];
        if (m > -kappa) {
            loss += m;
            (*active)[static_cast<std::size_t>(i)] = 1;
        } else {
            loss += -kappa;
        }
    }
    loss /= static_cast<float>(n);

    int id = t.emit(Tensor::scalar(loss), {logits.id},
                    [logits, targets, runner_up, active, n, k](Tape& tp, int self) {
                        const float g = tp.grad(self)[0] / static_cast<float>(n);
                        Tensor& gz = tp.grad(logits.id);
                        for (int i = 0; i < n; ++i) {
                            if (!(*active)[static_cast<std::size_t>(i)]) continue;
                            const std::int64_t off = static_cast<std::int64_t>(i) * k;
                            gz[off + (*runner_up)[static_cast<std::size_t>(i)]] += g;
                            gz[off + targets[static_cast<std::size_t>(i)]] -= g;
                        }
                    });
    return Value{&t, id};
}

Value mse(Value a, Value b) {
    check_same_tape(a, b, "mse");
    Tape& t = *a.tape;
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    Tensor::check_same_shape(av, bv, "mse");
    const std::int64_t n = av.numel();
    Tensor diff(av.shape());
    K().sub(av.data(), bv.data(), diff.data(), n);
    const float loss = K().dot(diff.data(), diff.data(), n) / static_cast<float>(n);
    auto d = std::make_shared<Tensor>(std::move(diff));
    int id = t.emit(Tensor::scalar(loss), {a.id, b.id}, [a, b, d, n](Tape& tp, int self) {
        const float g = tp.grad(self)[0] * 2.0f / static_cast<float>(n);
        if (tp.needs_grad(a.id)) K().axpy(g, d->data(), tp.grad(a.id).data(), n);
        if (tp.needs_grad(b.id)) K().axpy(-g, d->data(), tp.grad(b.id).data(), n);
    });
    return Value{&t, id};
}

} // namespace aigan
