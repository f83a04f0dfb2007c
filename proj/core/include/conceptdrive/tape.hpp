#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "conceptdrive/rng.hpp"
#include "conceptdrive/tensor.hpp"

namespace conceptdrive {

class Tape;
using NodeId = std::size_t;

/// Backward step for one node: reads this node's gradient from the tape and
/// accumulates into its parents' gradients. `self` is the node's own id.
using BackwardFn = std::function<void(Tape&, NodeId self)>;

/// Append-only computation graph for reverse-mode differentiation.
///
/// Every operation pushes one node holding its forward value; creation order
/// is already a topological order, so backward() is a single reverse sweep.
/// A tape is built per loss evaluation and thrown away afterwards.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Input node. Gradients are accumulated only when requires_grad is set.
    NodeId leaf(Tensor value, bool requires_grad = true);
    /// Fixed input that never receives a gradient (masks, labels, ...).
    NodeId constant(Tensor value);

    // ---- elementwise ----
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId square(NodeId a);
    /// Elementwise square root; the derivative at exactly zero is taken as 0.
    NodeId sqrt(NodeId a);
    /// x * Phi(x) with Phi the standard normal CDF (exact erf form).
    NodeId gelu(NodeId a);
    /// Inverted dropout. rate == 0 or rng == nullptr returns `a` unchanged
    /// (same node id); rate outside [0, 1) throws ParamError.
    NodeId dropout(NodeId a, double rate, SplitMix64* rng);

    // ---- linear algebra ----
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    /// Adds a 1 x C row vector to every row of an R x C matrix.
    NodeId add_row(NodeId m, NodeId row);
    /// Row-wise softmax with max-shift. A row whose entries are all -inf
    /// throws NumericError.
    NodeId softmax_rows(NodeId a);
    /// Row-wise layer normalisation with learnable 1 x C gain and bias.
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);

    // ---- shape ----
    NodeId concat_rows(const std::vector<NodeId>& parts);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId slice_rows(NodeId a, std::size_t begin, std::size_t count);
    NodeId slice_cols(NodeId a, std::size_t begin, std::size_t count);
    /// Packs 1 x 1 nodes into a single 1 x n row.
    NodeId stack_scalars(const std::vector<NodeId>& scalars);
    NodeId reshape(NodeId a, std::size_t rows, std::size_t cols);

    // ---- reductions ----
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);

    /// Custom operation hook: pushes a node with a caller-supplied value and
    /// backward step. The backward fn reads grad(self) and writes into
    /// grad_mut(parent) for each parent it differentiates through.
    NodeId record(Tensor value, std::vector<NodeId> parents, BackwardFn backward);

    const Tensor& value(NodeId id) const;
    /// Gradient of the last backward() target w.r.t. node `id`. Zero tensor
    /// for nodes the target does not depend on.
    const Tensor& grad(NodeId id) const;
    Tensor& grad_mut(NodeId id);
    bool requires_grad(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss node. Gradients of all
    /// requires_grad nodes are available via grad() afterwards.
    void backward(NodeId loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<NodeId> parents;
        BackwardFn backward;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;

    NodeId push(Tensor value, std::vector<NodeId> parents, BackwardFn backward);
    const Node& node(NodeId id) const;
    Node& node(NodeId id);
    bool any_parent_grad(const std::vector<NodeId>& parents) const;
};

}  // namespace conceptdrive
