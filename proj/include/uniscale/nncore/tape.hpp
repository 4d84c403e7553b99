// Recorded reverse-mode differentiation over dense float64 tensors.
//
// A Tape owns every node of one forward computation. Primitives append a node
// with the values and a closure implementing the adjoint rule; backward() runs
// the closures in reverse topological order (node ids are creation-ordered, so
// reverse id order suffices). stop_gradient() inserts a node whose closure is
// absent and whose ancestors are never traversed, which makes the upstream
// gradient exactly zero rather than numerically small.
#pragma once

#include <functional>
#include <vector>

#include "uniscale/nncore/tensor.hpp"

namespace uniscale::nncore {

class Tape;
using NodeId = int;

struct Node {
    Tensor value;
    Tensor grad;  // same shape as value, zero until backward touches it
    bool requires_grad = false;
    bool stop_grad = false;
    std::vector<NodeId> inputs;
    std::function<void(Tape&)> backward;  // accumulates into input grads; empty for leaves
};

class Tape {
public:
    NodeId param(const Tensor& t) { return make(t, true); }
    NodeId input(const Tensor& t) { return make(t, false); }

    NodeId make(Tensor value, bool requires_grad,
                std::vector<NodeId> inputs = {},
                std::function<void(Tape&)> backward = {}) {
        Node n;
        n.value = std::move(value);
        n.grad = Tensor(n.value.shape);
        n.requires_grad = requires_grad;
        n.inputs = std::move(inputs);
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    Tensor& grad_mut(NodeId id) { return nodes_[id].grad; }
    Node& node(NodeId id) { return nodes_[id]; }
    const Node& node(NodeId id) const { return nodes_[id]; }
    size_t size() const { return nodes_.size(); }

    // Reverse-topological sweep from loss_node. Gradients accumulate once per
    // node; subgraphs that cannot reach a requires_grad leaf are skipped, and
    // traversal never crosses a stop_grad node.
    void backward(NodeId loss_node);

    // relu() records every pre-activation in graph order. The finite-difference
    // checker compares the logs of two perturbed forwards: a sign change at any
    // position means the perturbation stepped across the kink, so the central
    // difference is invalid for that coordinate.
    const std::vector<double>& relu_inputs() const { return relu_inputs_; }
    void note_relu_input(double v) { relu_inputs_.push_back(v); }

private:
    std::vector<Node> nodes_;
    std::vector<double> relu_inputs_;
};

// ---- primitives -----------------------------------------------------------

NodeId matmul(Tape& t, NodeId a, NodeId b);                     // [m,k]x[k,n] -> [m,n]
NodeId add(Tape& t, NodeId a, NodeId b);                        // same shape, or [m,n]+[n] row broadcast
NodeId add_many(Tape& t, const std::vector<NodeId>& xs);        // left-to-right sum, fixed order
NodeId elementwise_mul(Tape& t, NodeId a, NodeId b);            // same shape
NodeId scale(Tape& t, NodeId a, double c);
NodeId relu(Tape& t, NodeId a);
NodeId sigmoid(Tape& t, NodeId a);
NodeId softmax(Tape& t, NodeId a, int axis);                    // rank 1 (axis 0) or rank 2 (axis 0/1)
NodeId layer_norm(Tape& t, NodeId a, NodeId gain, NodeId bias, double eps);  // last axis
NodeId concat(Tape& t, const std::vector<NodeId>& xs, int axis);
NodeId slice_rows(Tape& t, NodeId a, size_t r0, size_t r1);
NodeId slice_cols(Tape& t, NodeId a, size_t c0, size_t c1);
NodeId transpose(Tape& t, NodeId a);
NodeId reshape(Tape& t, NodeId a, std::vector<size_t> shape);
NodeId embedding_lookup(Tape& t, NodeId table, const std::vector<uint64_t>& hash_ids, size_t modulus);
NodeId reduce_mean_rows(Tape& t, NodeId a);                     // [k,d] -> [1,d]
NodeId sum_all(Tape& t, NodeId a);                              // -> [1]
NodeId stop_gradient(Tape& t, NodeId a);

enum class Reduction { Mean, Sum };
NodeId bce_loss(Tape& t, NodeId logits, const Tensor& labels, Reduction red = Reduction::Mean);

// Scaled dot-product attention, composed from the primitives above.
// q: [1,d] (or [d]), k/v: [t,d]. Returns [1, d_v].
NodeId sdpa(Tape& t, NodeId q, NodeId k, NodeId v, double scale_factor);

inline void backward(Tape& t, NodeId loss_node) { t.backward(loss_node); }

}  // namespace uniscale::nncore
