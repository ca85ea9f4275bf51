#include "augpaint/nn/layers.hpp"

#include <cmath>

#include "augpaint/errors.hpp"

namespace augpaint::nn {

NodePtr ParamStore::add(const std::string& name, Tensor init) {
    for (const auto& [n, _] : entries_) {
        if (n == name) throw ConfigError("duplicate parameter name: " + name);
    }
    auto node = make_leaf(std::move(init), true);
    entries_.emplace_back(name, node);
    return node;
}

NodePtr ParamStore::find(const std::string& name) const {
    for (const auto& [n, node] : entries_) {
        if (n == name) return node;
    }
    throw ConfigError("unknown parameter: " + name);
}

std::vector<NodePtr> ParamStore::nodes() const {
    std::vector<NodePtr> out;
    out.reserve(entries_.size());
    for (const auto& [_, node] : entries_) out.push_back(node);
    return out;
}

std::int64_t ParamStore::param_count() const {
    std::int64_t n = 0;
    for (const auto& [_, node] : entries_) n += node->value.size();
    return n;
}

void ParamStore::zero_grads() {
    for (const auto& [_, node] : entries_) {
        if (!node->grad.empty()) node->grad.fill(0.0f);
    }
}

std::vector<Tensor> ParamStore::snapshot_values() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [_, node] : entries_) out.push_back(node->value);
    return out;
}

void ParamStore::restore_values(const std::vector<Tensor>& values) {
    if (values.size() != entries_.size()) {
        throw ConfigError("restore_values: parameter count mismatch");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        check_same_shape(entries_[i].second->value, values[i], "restore_values");
        entries_[i].second->value = values[i];
    }
}

Conv2dLayer Conv2dLayer::create(ParamStore& ps, const std::string& name, int cin, int cout,
                                int ksize, int stride, int pad, Rng& rng,
                                float init_scale) {
    Tensor w(Shape{cout, cin, ksize, ksize});
    if (init_scale != 0.0f) {
        const float std = init_scale * std::sqrt(2.0f / (cin * ksize * ksize));
        for (std::int64_t i = 0; i < w.size(); ++i) {
            w[i] = static_cast<float>(rng.normal()) * std;
        }
    }
    Conv2dLayer layer;
    layer.w = ps.add(name + ".w", std::move(w));
    layer.b = ps.add(name + ".b", Tensor(Shape{1, cout, 1, 1}));
    layer.stride = stride;
    layer.pad = pad;
    return layer;
}

LinearLayer LinearLayer::create(ParamStore& ps, const std::string& name, int in, int out,
                                Rng& rng, float init_scale) {
    Tensor w(Shape{out, in, 1, 1});
    if (init_scale != 0.0f) {
        const float std = init_scale * std::sqrt(2.0f / in);
        for (std::int64_t i = 0; i < w.size(); ++i) {
            w[i] = static_cast<float>(rng.normal()) * std;
        }
    }
    LinearLayer layer;
    layer.w = ps.add(name + ".w", std::move(w));
    layer.b = ps.add(name + ".b", Tensor(Shape{1, out, 1, 1}));
    return layer;
}

GroupNormLayer GroupNormLayer::create(ParamStore& ps, const std::string& name, int channels,
                                      int groups) {
    GroupNormLayer layer;
    layer.gamma = ps.add(name + ".gamma", Tensor(Shape{1, channels, 1, 1}, 1.0f));
    layer.beta = ps.add(name + ".beta", Tensor(Shape{1, channels, 1, 1}));
    layer.groups = groups;
    return layer;
}

Adam::Adam(std::vector<NodePtr> params, float lr, float beta1, float beta2, float eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.reserve(params.size());
    for (auto& p : params) {
        Slot s;
        s.p = std::move(p);
        s.m.assign(static_cast<std::size_t>(s.p->value.size()), 0.0f);
        s.v.assign(static_cast<std::size_t>(s.p->value.size()), 0.0f);
        slots_.push_back(std::move(s));
    }
}

void Adam::zero_grad() {
    for (auto& s : slots_) {
        if (!s.p->grad.empty()) s.p->grad.fill(0.0f);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& s : slots_) {
        if (s.p->grad.empty()) continue;
        float* w = s.p->value.data();
        const float* g = s.p->grad.data();
        for (std::size_t i = 0; i < s.m.size(); ++i) {
            s.m[i] = beta1_ * s.m[i] + (1.0f - beta1_) * g[i];
            s.v[i] = beta2_ * s.v[i] + (1.0f - beta2_) * g[i] * g[i];
            const double mh = s.m[i] / bc1;
            const double vh = s.v[i] / bc2;
            w[i] -= static_cast<float>(lr_ * mh / (std::sqrt(vh) + eps_));
        }
    }
}

Tensor timestep_embedding(const std::vector<int>& t, int dim) {
    if (dim % 2 != 0) throw ConfigError("timestep_embedding: dim must be even");
    const int half = dim / 2;
    Tensor out(Shape{static_cast<int>(t.size()), dim, 1, 1});
    for (std::size_t n = 0; n < t.size(); ++n) {
        for (int k = 0; k < half; ++k) {
            const double freq = std::exp(-std::log(10000.0) * k / half);
            const double a = t[n] * freq;
            out[static_cast<std::int64_t>(n) * dim + k] = static_cast<float>(std::sin(a));
            out[static_cast<std::int64_t>(n) * dim + half + k] = static_cast<float>(std::cos(a));
        }
    }
    return out;
}

}  // namespace augpaint::nn
