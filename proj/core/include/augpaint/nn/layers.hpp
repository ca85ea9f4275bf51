#pragma once

#include <string>
#include <vector>

#include "augpaint/nn/graph.hpp"
#include "augpaint/rng.hpp"

namespace augpaint::nn {

// Named trainable leaves of a model. Order of insertion is the serialization
// order, so checkpoints are stable across runs.
class ParamStore {
public:
    NodePtr add(const std::string& name, Tensor init);
    NodePtr find(const std::string& name) const;

    const std::vector<std::pair<std::string, NodePtr>>& entries() const { return entries_; }
    std::vector<NodePtr> nodes() const;
    std::int64_t param_count() const;

    void zero_grads();
    // Deep copies of all parameter values, in store order.
    std::vector<Tensor> snapshot_values() const;
    void restore_values(const std::vector<Tensor>& values);

private:
    std::vector<std::pair<std::string, NodePtr>> entries_;
};

struct Conv2dLayer {
    NodePtr w, b;
    int stride = 1, pad = 1;

    // init_scale 0 zero-initializes the weight (used for the last conv of
    // residual blocks and output heads).
    static Conv2dLayer create(ParamStore& ps, const std::string& name, int cin, int cout,
                              int ksize, int stride, int pad, Rng& rng,
                              float init_scale = 1.0f);
    NodePtr operator()(const NodePtr& x) const { return conv2d(x, w, b, stride, pad); }
};

struct LinearLayer {
    NodePtr w, b;
    static LinearLayer create(ParamStore& ps, const std::string& name, int in, int out,
                              Rng& rng, float init_scale = 1.0f);
    NodePtr operator()(const NodePtr& x) const { return linear(x, w, b); }
};

struct GroupNormLayer {
    NodePtr gamma, beta;
    int groups = 8;
    static GroupNormLayer create(ParamStore& ps, const std::string& name, int channels,
                                 int groups);
    NodePtr operator()(const NodePtr& x) const { return group_norm(x, gamma, beta, groups); }
};

class Adam {
public:
    Adam(std::vector<NodePtr> params, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
         float eps = 1e-8f);

    void set_lr(float lr) { lr_ = lr; }
    float lr() const { return lr_; }
    void zero_grad();
    void step();

private:
    struct Slot {
        NodePtr p;
        std::vector<float> m, v;
    };
    std::vector<Slot> slots_;
    float lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

// Transformer-style sinusoidal embedding of integer timesteps, shape (n, dim, 1, 1).
Tensor timestep_embedding(const std::vector<int>& t, int dim);

}  // namespace augpaint::nn
