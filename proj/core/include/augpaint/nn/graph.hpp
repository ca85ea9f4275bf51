#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "augpaint/image.hpp"
#include "augpaint/tensor.hpp"

namespace augpaint::nn {

// Dynamic reverse-mode tape. Each forward call builds a fresh graph of Nodes;
// backward() walks it once in reverse topological order. Single-threaded by
// design, which keeps gradient accumulation order (and therefore results)
// deterministic.
struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand during backward
    bool needs_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;  // pushes this->grad into parents

    Tensor& ensure_grad();
};

NodePtr make_leaf(Tensor v, bool needs_grad);
NodePtr make_const(Tensor v);

// root must be scalar shaped (1,1,1,1).
void backward(const NodePtr& root);

// --- ops ---------------------------------------------------------------

NodePtr conv2d(const NodePtr& x, const NodePtr& w, const NodePtr& b,
               int stride, int pad);
NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b);
NodePtr group_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                   int groups, float eps = 1e-5f);
NodePtr silu(const NodePtr& x);
NodePtr relu(const NodePtr& x);
NodePtr add(const NodePtr& a, const NodePtr& b);
// bias shaped (n, c, 1, 1), broadcast over spatial dims.
NodePtr add_channel_bias(const NodePtr& x, const NodePtr& bias);
// s shaped (1,1,1,1), broadcast everywhere.
NodePtr mul_scalar_node(const NodePtr& x, const NodePtr& s);
NodePtr add_scalar_node(const NodePtr& x, const NodePtr& s);
NodePtr scale(const NodePtr& x, float k);
NodePtr concat_channels(const NodePtr& a, const NodePtr& b);
NodePtr avg_pool2(const NodePtr& x);
NodePtr upsample_nearest2(const NodePtr& x);
NodePtr detach(const NodePtr& x);

// Value is q; gradients pass through unchanged to x (straight-through).
// Shapes of x->value and q must match.
NodePtr straight_through(const NodePtr& x, Tensor q);

// Selects rows of a (1,1,V,C) codebook at the given per-position indices,
// producing a (n,C,h,w) tensor; differentiable w.r.t. the codebook.
NodePtr gather_codebook(const NodePtr& codebook, const std::vector<int>& indices,
                        Shape out_shape);

// --- losses (scalar outputs) --------------------------------------------

NodePtr mse_loss(const NodePtr& pred, const Tensor& target);

// Per-pixel cross entropy plus soft-Dice over foreground classes, weighted
// w_ce and w_dice. labels[i] is the (h,w) class map for batch element i.
NodePtr ce_dice_loss(const NodePtr& logits, const std::vector<const GridU8*>& labels,
                     float w_ce, float w_dice);

// Plain per-pixel channel softmax of a (n,K,h,w) tensor (no graph).
Tensor softmax_channels(const Tensor& logits);

}  // namespace augpaint::nn
