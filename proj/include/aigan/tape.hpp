#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "aigan/tensor.hpp"

namespace aigan {

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Value {
    Tape* tape = nullptr;
    int id = -1;
};

// Result of Tape::backward. Gradients are keyed by the node id of each
// grad-requiring leaf; leaves registered through Tape::param additionally
// resolve through the tensor they were bound to.
class Gradients {
public:
    const Tensor& at_node(int id) const;
    const Tensor& at(const Tensor* bound) const;
    bool has(const Tensor* bound) const;
    std::size_t size() const { return by_node_.size(); }

private:
    friend class Tape;
    std::unordered_map<int, Tensor> by_node_;
    std::unordered_map<const Tensor*, int> node_of_;
};

// Reverse-mode tape. Nodes are appended in execution order, which is already
// a topological order, so backward is a single reverse sweep. One tape per
// training/attack step; tapes are single-threaded.
class Tape {
public:
    using BackFn = std::function<void(Tape&, int self)>;

    // constant leaf, never receives a gradient
    Value leaf(Tensor t);
    // leaf bound to an external parameter tensor; repeated registration of
    // the same pointer yields the same node
    Value param(Tensor* p);
    // unbound grad-requiring leaf (attack inputs)
    Value input(Tensor t);

    // While frozen, param() emits constant leaves instead: forwards through a
    // frozen network still propagate input gradients but skip all weight
    // gradients. Used to run the discriminator and the target classifier
    // inside the generator's update.
    void set_freeze_params(bool f) { freeze_params_ = f; }
    bool freeze_params() const { return freeze_params_; }

    const Tensor& val(Value v) const { return val(v.id); }
    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    bool needs_grad(int id) const {
        return nodes_[static_cast<std::size_t>(id)].needs_grad;
    }
    int size() const { return static_cast<int>(nodes_.size()); }

    // Exact reverse-mode sweep from a scalar loss node. Every grad-requiring
    // leaf gets exactly one entry (zeros when the loss does not depend on it).
    Gradients backward(Value loss);

    // --- op-construction interface (used by the op free functions) ---
    int emit(Tensor out, std::vector<int> inputs, BackFn back);
    // gradient accumulation buffer for a node, allocated on first touch
    Tensor& grad(int id);
    bool grad_touched(int id) const {
        return grads_live_ && grad_alloc_[static_cast<std::size_t>(id)];
    }

private:
    struct Node {
        Tensor val;
        std::vector<int> inputs;
        BackFn back;
        bool needs_grad = false;
        Tensor* bind = nullptr;
    };

    std::vector<Node> nodes_;
    std::unordered_map<Tensor*, int> param_nodes_;
    std::unordered_map<Tensor*, int> frozen_nodes_;
    std::vector<Tensor> grads_;
    std::vector<char> grad_alloc_;
    bool grads_live_ = false;
    bool freeze_params_ = false;
};

// scope guard for Tape::set_freeze_params
struct FreezeParams {
    explicit FreezeParams(Tape& t) : tape(t), prev(t.freeze_params()) {
        tape.set_freeze_params(true);
    }
    ~FreezeParams() { tape.set_freeze_params(prev); }
    Tape& tape;
    bool prev;
};

// ---- graph ops (forward + registered backward rule) ----

Value matmul(Value a, Value b);
Value conv2d(Value x, Value w, int stride, int pad);
Value conv2d_transpose(Value x, Value w, int stride, int pad, int out_pad);

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value scale(Value a, float s);
Value relu(Value x);
Value leaky_relu(Value x, float slope);
Value tanh_op(Value x);
Value sigmoid_op(Value x);
Value clamp_op(Value x, float lo, float hi);

Value add_rowvec(Value m, Value v);      // [N,K] + [K]
Value add_chan_bias(Value x, Value b);   // [N,C,H,W] + [C]
Value maxpool2x2(Value x);
Value avgpool_global(Value x);           // [N,C,H,W] -> [N,C]
Value reshape(Value x, std::vector<int> shape);
Value concat_channels(Value a, Value b); // along C of [N,C,H,W]

Value batchnorm2d(Value x, Value gamma, Value beta, Tensor* run_mean, Tensor* run_var,
                  bool training, float momentum, float eps);

Value softmax_ce(Value logits, const std::vector<int>& labels);    // scalar mean
Value bce_logits(Value s, float target01);                         // scalar mean
Value margin_loss(Value logits, const std::vector<int>& targets, float kappa);
Value mse(Value a, Value b);                                       // scalar mean
Value sum_op(Value x);
Value mean_op(Value x);

// ---- tensor-level helpers shared with eval paths ----

// probs[i,:] = softmax(logits[i,:]) with row-max subtraction
Tensor softmax_rows(const Tensor& logits);
std::vector<int> argmax_rows(const Tensor& logits);
Tensor transpose2d(const Tensor& a);

} // namespace aigan
