#include "augpaint/nn/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "augpaint/errors.hpp"

namespace augpaint::nn {

namespace {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p->needs_grad) {
            n->needs_grad = true;
            break;
        }
    }
    if (n->needs_grad) n->backprop = std::move(back);
    return n;
}

// cols is (Ci*kh*kw) x (Ho*Wo), row-major, for one sample.
void im2col(const float* x, int Ci, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, float* cols) {
    const std::int64_t plane = std::int64_t(Ho) * Wo;
    for (int ci = 0; ci < Ci; ++ci) {
        for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
                float* dst = cols + ((std::int64_t(ci) * kh + dy) * kw + dx) * plane;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int iy = oh * stride + dy - pad;
                    float* drow = dst + std::int64_t(oh) * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(drow, drow + Wo, 0.0f);
                        continue;
                    }
                    const float* srow = x + (std::int64_t(ci) * H + iy) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int ix = ow * stride + dx - pad;
                        drow[ow] = (ix >= 0 && ix < W) ? srow[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_acc(const float* cols, int Ci, int H, int W, int kh, int kw, int stride,
                int pad, int Ho, int Wo, float* dx) {
    const std::int64_t plane = std::int64_t(Ho) * Wo;
    for (int ci = 0; ci < Ci; ++ci) {
        for (int dy = 0; dy < kh; ++dy) {
            for (int dxk = 0; dxk < kw; ++dxk) {
                const float* src = cols + ((std::int64_t(ci) * kh + dy) * kw + dxk) * plane;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int iy = oh * stride + dy - pad;
                    if (iy < 0 || iy >= H) continue;
                    float* drow = dx + (std::int64_t(ci) * H + iy) * W;
                    const float* srow = src + std::int64_t(oh) * Wo;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int ix = ow * stride + dxk - pad;
                        if (ix >= 0 && ix < W) drow[ix] += srow[ow];
                    }
                }
            }
        }
    }
}

float sigmoidf(float x) {
    return 1.0f / (1.0f + std::exp(-x));
}

}  // namespace

Tensor& Node::ensure_grad() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
}

NodePtr make_leaf(Tensor v, bool needs_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->needs_grad = needs_grad;
    return n;
}

NodePtr make_const(Tensor v) {
    return make_leaf(std::move(v), false);
}

void backward(const NodePtr& root) {
    if (root->value.size() != 1) {
        throw ShapeError("backward: root must be scalar, got " + root->value.shape().str());
    }
    // Iterative post-order DFS over parent edges; reversed, consumers come
    // before producers, so each node's grad is complete when visited.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->needs_grad && visited.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad().fill(1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

NodePtr conv2d(const NodePtr& x, const NodePtr& w, const NodePtr& b,
               int stride, int pad) {
    const Shape xs = x->value.shape();
    const Shape ws = w->value.shape();  // (Co, Ci, kh, kw)
    const Shape bs = b->value.shape();
    if (ws.c != xs.c) {
        throw ShapeError("conv2d: weight in-channels " + ws.str() + " vs input " + xs.str());
    }
    if (bs.n != 1 || bs.c != ws.n || bs.h != 1 || bs.w != 1) {
        throw ShapeError("conv2d: bias must be (1,Co,1,1)");
    }
    const int Co = ws.n, Ci = ws.c, kh = ws.h, kw = ws.w;
    const int Ho = (xs.h + 2 * pad - kh) / stride + 1;
    const int Wo = (xs.w + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: output would be empty");

    const int rows = Ci * kh * kw;
    const std::int64_t plane = std::int64_t(Ho) * Wo;

    Tensor y(Shape{xs.n, Co, Ho, Wo});
    {
        std::vector<float> cols(static_cast<std::size_t>(rows) * plane);
        ConstMapRM W(w->value.data(), Co, rows);
        for (int n = 0; n < xs.n; ++n) {
            im2col(x->value.data() + std::int64_t(n) * xs.c * xs.h * xs.w,
                   Ci, xs.h, xs.w, kh, kw, stride, pad, Ho, Wo, cols.data());
            ConstMapRM C(cols.data(), rows, plane);
            MapRM Y(y.data() + std::int64_t(n) * Co * plane, Co, plane);
            Y.noalias() = W * C;
            for (int co = 0; co < Co; ++co) {
                Y.row(co).array() += b->value[co];
            }
        }
    }

    const int H = xs.h, Wd = xs.w, N = xs.n;
    return make_op(std::move(y), {x, w, b}, [=](Node& node) {
        const NodePtr& xp = node.parents[0];
        const NodePtr& wp = node.parents[1];
        const NodePtr& bp = node.parents[2];
        std::vector<float> cols(static_cast<std::size_t>(rows) * plane);
        std::vector<float> dcols;
        if (xp->needs_grad) dcols.resize(cols.size());
        ConstMapRM W(wp->value.data(), Co, rows);
        for (int n = 0; n < N; ++n) {
            ConstMapRM dY(node.grad.data() + std::int64_t(n) * Co * plane, Co, plane);
            if (wp->needs_grad || xp->needs_grad) {
                im2col(xp->value.data() + std::int64_t(n) * Ci * H * Wd,
                       Ci, H, Wd, kh, kw, stride, pad, Ho, Wo, cols.data());
            }
            if (wp->needs_grad) {
                ConstMapRM C(cols.data(), rows, plane);
                MapRM dW(wp->ensure_grad().data(), Co, rows);
                dW.noalias() += dY * C.transpose();
            }
            if (bp->needs_grad) {
                float* db = bp->ensure_grad().data();
                for (int co = 0; co < Co; ++co) db[co] += dY.row(co).sum();
            }
            if (xp->needs_grad) {
                MapRM dC(dcols.data(), rows, plane);
                dC.noalias() = W.transpose() * dY;
                col2im_acc(dcols.data(), Ci, H, Wd, kh, kw, stride, pad, Ho, Wo,
                           xp->ensure_grad().data() + std::int64_t(n) * Ci * H * Wd);
            }
        }
    });
}

NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b) {
    const Shape xs = x->value.shape();  // (N, F, 1, 1)
    const Shape ws = w->value.shape();  // (out, in, 1, 1)
    if (xs.h != 1 || xs.w != 1 || ws.h != 1 || ws.w != 1 || ws.c != xs.c) {
        throw ShapeError("linear: expected x (N,F,1,1), w (out,F,1,1)");
    }
    const int N = xs.n, F = xs.c, out = ws.n;
    Tensor y(Shape{N, out, 1, 1});
    {
        ConstMapRM X(x->value.data(), N, F);
        ConstMapRM W(w->value.data(), out, F);
        MapRM Y(y.data(), N, out);
        Y.noalias() = X * W.transpose();
        for (int n = 0; n < N; ++n) {
            for (int o = 0; o < out; ++o) Y(n, o) += b->value[o];
        }
    }
    return make_op(std::move(y), {x, w, b}, [=](Node& node) {
        const NodePtr& xp = node.parents[0];
        const NodePtr& wp = node.parents[1];
        const NodePtr& bp = node.parents[2];
        ConstMapRM dY(node.grad.data(), N, out);
        if (xp->needs_grad) {
            ConstMapRM W(wp->value.data(), out, F);
            MapRM dX(xp->ensure_grad().data(), N, F);
            dX.noalias() += dY * W;
        }
        if (wp->needs_grad) {
            ConstMapRM X(xp->value.data(), N, F);
            MapRM dW(wp->ensure_grad().data(), out, F);
            dW.noalias() += dY.transpose() * X;
        }
        if (bp->needs_grad) {
            float* db = bp->ensure_grad().data();
            for (int n = 0; n < N; ++n) {
                for (int o = 0; o < out; ++o) db[o] += dY(n, o);
            }
        }
    });
}

NodePtr group_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                   int groups, float eps) {
    const Shape s = x->value.shape();
    if (s.c % groups != 0) {
        throw ShapeError("group_norm: channels not divisible by groups");
    }
    const int m = s.c / groups;
    const std::int64_t hw = std::int64_t(s.h) * s.w;
    const std::int64_t gsize = m * hw;

    Tensor y(s);
    std::vector<float> means(static_cast<std::size_t>(s.n) * groups);
    std::vector<float> istds(means.size());
    for (int n = 0; n < s.n; ++n) {
        for (int g = 0; g < groups; ++g) {
            const float* xp = x->value.data() + (std::int64_t(n) * s.c + std::int64_t(g) * m) * hw;
            double sum = 0.0, sq = 0.0;
            for (std::int64_t i = 0; i < gsize; ++i) {
                sum += xp[i];
                sq += double(xp[i]) * xp[i];
            }
            const double mean = sum / gsize;
            const double var = sq / gsize - mean * mean;
            const float istd = static_cast<float>(1.0 / std::sqrt(std::max(var, 0.0) + eps));
            means[std::size_t(n) * groups + g] = static_cast<float>(mean);
            istds[std::size_t(n) * groups + g] = istd;
            float* yp = y.data() + (std::int64_t(n) * s.c + std::int64_t(g) * m) * hw;
            for (int cc = 0; cc < m; ++cc) {
                const int c = g * m + cc;
                const float ga = gamma->value[c];
                const float be = beta->value[c];
                for (std::int64_t i = 0; i < hw; ++i) {
                    const float xn = (xp[cc * hw + i] - means[std::size_t(n) * groups + g]) * istd;
                    yp[cc * hw + i] = ga * xn + be;
                }
            }
        }
    }

    return make_op(std::move(y), {x, gamma, beta},
                   [s, groups, m, hw, gsize, means, istds](Node& node) {
        const NodePtr& xp = node.parents[0];
        const NodePtr& gp = node.parents[1];
        const NodePtr& bp = node.parents[2];
        for (int n = 0; n < s.n; ++n) {
            for (int g = 0; g < groups; ++g) {
                const float mean = means[std::size_t(n) * groups + g];
                const float istd = istds[std::size_t(n) * groups + g];
                const float* xv = xp->value.data() + (std::int64_t(n) * s.c + std::int64_t(g) * m) * hw;
                const float* dy = node.grad.data() + (std::int64_t(n) * s.c + std::int64_t(g) * m) * hw;
                // grads for gamma/beta
                if (gp->needs_grad || bp->needs_grad) {
                    for (int cc = 0; cc < m; ++cc) {
                        const int c = g * m + cc;
                        double dg = 0.0, db = 0.0;
                        for (std::int64_t i = 0; i < hw; ++i) {
                            const float xn = (xv[cc * hw + i] - mean) * istd;
                            dg += double(dy[cc * hw + i]) * xn;
                            db += dy[cc * hw + i];
                        }
                        if (gp->needs_grad) gp->ensure_grad()[c] += static_cast<float>(dg);
                        if (bp->needs_grad) bp->ensure_grad()[c] += static_cast<float>(db);
                    }
                }
                if (!xp->needs_grad) continue;
                // dx = istd * (t - mean(t) - xn * mean(t*xn)), t = dy * gamma
                double t_sum = 0.0, tx_sum = 0.0;
                for (int cc = 0; cc < m; ++cc) {
                    const float ga = gp->value[g * m + cc];
                    for (std::int64_t i = 0; i < hw; ++i) {
                        const float xn = (xv[cc * hw + i] - mean) * istd;
                        const float t = dy[cc * hw + i] * ga;
                        t_sum += t;
                        tx_sum += double(t) * xn;
                    }
                }
                const float t_mean = static_cast<float>(t_sum / gsize);
                const float tx_mean = static_cast<float>(tx_sum / gsize);
                float* dx = xp->ensure_grad().data() + (std::int64_t(n) * s.c + std::int64_t(g) * m) * hw;
                for (int cc = 0; cc < m; ++cc) {
                    const float ga = gp->value[g * m + cc];
                    for (std::int64_t i = 0; i < hw; ++i) {
                        const float xn = (xv[cc * hw + i] - mean) * istd;
                        const float t = dy[cc * hw + i] * ga;
                        dx[cc * hw + i] += istd * (t - t_mean - xn * tx_mean);
                    }
                }
            }
        }
    });
}

NodePtr silu(const NodePtr& x) {
    Tensor y = x->value;
    for (std::int64_t i = 0; i < y.size(); ++i) {
        y[i] = y[i] * sigmoidf(y[i]);
    }
    return make_op(std::move(y), {x}, [](Node& node) {
        const NodePtr& xp = node.parents[0];
        if (!xp->needs_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (std::int64_t i = 0; i < dx.size(); ++i) {
            const float xv = xp->value[i];
            const float sg = sigmoidf(xv);
            dx[i] += node.grad[i] * sg * (1.0f + xv * (1.0f - sg));
        }
    });
}

NodePtr relu(const NodePtr& x) {
    Tensor y = x->value;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] = std::max(y[i], 0.0f);
    return make_op(std::move(y), {x}, [](Node& node) {
        const NodePtr& xp = node.parents[0];
        if (!xp->needs_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (std::int64_t i = 0; i < dx.size(); ++i) {
            if (xp->value[i] > 0.0f) dx[i] += node.grad[i];
        }
    });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor y = a->value;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] += b->value[i];
    return make_op(std::move(y), {a, b}, [](Node& node) {
        for (int k = 0; k < 2; ++k) {
            const NodePtr& p = node.parents[k];
            if (!p->needs_grad) continue;
            Tensor& d = p->ensure_grad();
            for (std::int64_t i = 0; i < d.size(); ++i) d[i] += node.grad[i];
        }
    });
}

NodePtr add_channel_bias(const NodePtr& x, const NodePtr& bias) {
    const Shape xs = x->value.shape();
    const Shape bs = bias->value.shape();
    if (bs.n != xs.n || bs.c != xs.c || bs.h != 1 || bs.w != 1) {
        throw ShapeError("add_channel_bias: bias must be (n,c,1,1)");
    }
    const std::int64_t hw = std::int64_t(xs.h) * xs.w;
    Tensor y = x->value;
    for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < xs.c; ++c) {
            const float bv = bias->value[std::int64_t(n) * xs.c + c];
            float* p = y.data() + (std::int64_t(n) * xs.c + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) p[i] += bv;
        }
    }
    return make_op(std::move(y), {x, bias}, [xs, hw](Node& node) {
        const NodePtr& xp = node.parents[0];
        const NodePtr& bp = node.parents[1];
        if (xp->needs_grad) {
            Tensor& dx = xp->ensure_grad();
            for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += node.grad[i];
        }
        if (bp->needs_grad) {
            Tensor& db = bp->ensure_grad();
            for (int n = 0; n < xs.n; ++n) {
                for (int c = 0; c < xs.c; ++c) {
                    const float* g = node.grad.data() + (std::int64_t(n) * xs.c + c) * hw;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < hw; ++i) acc += g[i];
                    db[std::int64_t(n) * xs.c + c] += static_cast<float>(acc);
                }
            }
        }
    });
}

NodePtr mul_scalar_node(const NodePtr& x, const NodePtr& s) {
    if (s->value.size() != 1) throw ShapeError("mul_scalar_node: s must be scalar");
    const float sv = s->value[0];
    Tensor y = x->value;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] *= sv;
    return make_op(std::move(y), {x, s}, [sv](Node& node) {
        const NodePtr& xp = node.parents[0];
        const NodePtr& sp = node.parents[1];
        if (xp->needs_grad) {
            Tensor& dx = xp->ensure_grad();
            for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += node.grad[i] * sv;
        }
        if (sp->needs_grad) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < node.grad.size(); ++i) {
                acc += double(node.grad[i]) * xp->value[i];
            }
            sp->ensure_grad()[0] += static_cast<float>(acc);
        }
    });
}

NodePtr add_scalar_node(const NodePtr& x, const NodePtr& s) {
    if (s->value.size() != 1) throw ShapeError("add_scalar_node: s must be scalar");
    const float sv = s->value[0];
    Tensor y = x->value;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] += sv;
    return make_op(std::move(y), {x, s}, [](Node& node) {
        const NodePtr& xp = node.parents[0];
        const NodePtr& sp = node.parents[1];
        if (xp->needs_grad) {
            Tensor& dx = xp->ensure_grad();
            for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += node.grad[i];
        }
        if (sp->needs_grad) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < node.grad.size(); ++i) acc += node.grad[i];
            sp->ensure_grad()[0] += static_cast<float>(acc);
        }
    });
}

NodePtr scale(const NodePtr& x, float k) {
    Tensor y = x->value;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] *= k;
    return make_op(std::move(y), {x}, [k](Node& node) {
        const NodePtr& xp = node.parents[0];
        if (!xp->needs_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += node.grad[i] * k;
    });
}

NodePtr concat_channels(const NodePtr& a, const NodePtr& b) {
    const Shape as = a->value.shape();
    const Shape bs = b->value.shape();
    if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
        throw ShapeError("concat_channels: spatial/batch mismatch " + as.str() + " vs " + bs.str());
    }
    const std::int64_t hw = std::int64_t(as.h) * as.w;
    Tensor y(Shape{as.n, as.c + bs.c, as.h, as.w});
    for (int n = 0; n < as.n; ++n) {
        float* dst = y.data() + std::int64_t(n) * (as.c + bs.c) * hw;
        std::copy_n(a->value.data() + std::int64_t(n) * as.c * hw, as.c * hw, dst);
        std::copy_n(b->value.data() + std::int64_t(n) * bs.c * hw, bs.c * hw, dst + as.c * hw);
    }
    return make_op(std::move(y), {a, b}, [as, bs, hw](Node& node) {
        const NodePtr& ap = node.parents[0];
        const NodePtr& bp = node.parents[1];
        for (int n = 0; n < as.n; ++n) {
            const float* g = node.grad.data() + std::int64_t(n) * (as.c + bs.c) * hw;
            if (ap->needs_grad) {
                float* da = ap->ensure_grad().data() + std::int64_t(n) * as.c * hw;
                for (std::int64_t i = 0; i < as.c * hw; ++i) da[i] += g[i];
            }
            if (bp->needs_grad) {
                float* db = bp->ensure_grad().data() + std::int64_t(n) * bs.c * hw;
                for (std::int64_t i = 0; i < bs.c * hw; ++i) db[i] += g[as.c * hw + i];
            }
        }
    });
}

NodePtr avg_pool2(const NodePtr& x) {
    const Shape s = x->value.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("avg_pool2: dims must be even");
    const int Ho = s.h / 2, Wo = s.w / 2;
    Tensor y(Shape{s.n, s.c, Ho, Wo});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int oy = 0; oy < Ho; ++oy) {
                for (int ox = 0; ox < Wo; ++ox) {
                    y.at(n, c, oy, ox) = 0.25f * (x->value.at(n, c, 2 * oy, 2 * ox) +
                                                  x->value.at(n, c, 2 * oy, 2 * ox + 1) +
                                                  x->value.at(n, c, 2 * oy + 1, 2 * ox) +
                                                  x->value.at(n, c, 2 * oy + 1, 2 * ox + 1));
                }
            }
        }
    }
    return make_op(std::move(y), {x}, [s, Ho, Wo](Node& node) {
        const NodePtr& xp = node.parents[0];
        if (!xp->needs_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
                for (int oy = 0; oy < Ho; ++oy) {
                    for (int ox = 0; ox < Wo; ++ox) {
                        const float g = 0.25f * node.grad.at(n, c, oy, ox);
                        dx.at(n, c, 2 * oy, 2 * ox) += g;
                        dx.at(n, c, 2 * oy, 2 * ox + 1) += g;
                        dx.at(n, c, 2 * oy + 1, 2 * ox) += g;
                        dx.at(n, c, 2 * oy + 1, 2 * ox + 1) += g;
                    }
                }
            }
        }
    });
}

NodePtr upsample_nearest2(const NodePtr& x) {
    const Shape s = x->value.shape();
    Tensor y(Shape{s.n, s.c, s.h * 2, s.w * 2});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int iy = 0; iy < s.h; ++iy) {
                for (int ix = 0; ix < s.w; ++ix) {
                    const float v = x->value.at(n, c, iy, ix);
                    y.at(n, c, 2 * iy, 2 * ix) = v;
                    y.at(n, c, 2 * iy, 2 * ix + 1) = v;
                    y.at(n, c, 2 * iy + 1, 2 * ix) = v;
                    y.at(n, c, 2 * iy + 1, 2 * ix + 1) = v;
                }
            }
        }
    }
    return make_op(std::move(y), {x}, [s](Node& node) {
        const NodePtr& xp = node.parents[0];
        if (!xp->needs_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
                for (int iy = 0; iy < s.h; ++iy) {
                    for (int ix = 0; ix < s.w; ++ix) {
                        dx.at(n, c, iy, ix) += node.grad.at(n, c, 2 * iy, 2 * ix) +
                                               node.grad.at(n, c, 2 * iy, 2 * ix + 1) +
                                               node.grad.at(n, c, 2 * iy + 1, 2 * ix) +
                                               node.grad.at(n, c, 2 * iy + 1, 2 * ix + 1);
                    }
                }
            }
        }
    });
}

NodePtr detach(const NodePtr& x) {
    return make_const(x->value);
}

NodePtr straight_through(const NodePtr& x, Tensor q) {
    check_same_shape(x->value, q, "straight_through");
    return make_op(std::move(q), {x}, [](Node& node) {
        const NodePtr& xp = node.parents[0];
        if (!xp->needs_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += node.grad[i];
    });
}

NodePtr gather_codebook(const NodePtr& codebook, const std::vector<int>& indices,
                        Shape out_shape) {
    const Shape cs = codebook->value.shape();  // (1,1,V,C)
    const int V = cs.h, C = cs.w;
    if (C != out_shape.c) throw ShapeError("gather_codebook: channel mismatch");
    const std::int64_t positions = std::int64_t(out_shape.n) * out_shape.h * out_shape.w;
    if (static_cast<std::int64_t>(indices.size()) != positions) {
        throw ShapeError("gather_codebook: index count mismatch");
    }
    Tensor y(out_shape);
    const std::int64_t hw = std::int64_t(out_shape.h) * out_shape.w;
    for (std::int64_t pos = 0; pos < positions; ++pos) {
        const int idx = indices[static_cast<std::size_t>(pos)];
        if (idx < 0 || idx >= V) throw ShapeError("gather_codebook: index out of range");
        const std::int64_t n = pos / hw;
        const std::int64_t sp = pos % hw;
        for (int c = 0; c < C; ++c) {
            y[(n * C + c) * hw + sp] = codebook->value[std::int64_t(idx) * C + c];
        }
    }
    return make_op(std::move(y), {codebook}, [indices, out_shape, hw, C](Node& node) {
        const NodePtr& cb = node.parents[0];
        if (!cb->needs_grad) return;
        Tensor& dcb = cb->ensure_grad();
        const std::int64_t positions = static_cast<std::int64_t>(indices.size());
        for (std::int64_t pos = 0; pos < positions; ++pos) {
            const int idx = indices[static_cast<std::size_t>(pos)];
            const std::int64_t n = pos / hw;
            const std::int64_t sp = pos % hw;
            for (int c = 0; c < C; ++c) {
                dcb[std::int64_t(idx) * C + c] += node.grad[(n * C + c) * hw + sp];
            }
        }
    });
}

NodePtr mse_loss(const NodePtr& pred, const Tensor& target) {
    check_same_shape(pred->value, target, "mse_loss");
    double acc = 0.0;
    for (std::int64_t i = 0; i < target.size(); ++i) {
        const double d = double(pred->value[i]) - target[i];
        acc += d * d;
    }
    Tensor y(Shape{1, 1, 1, 1});
    y[0] = static_cast<float>(acc / target.size());
    auto tgt = std::make_shared<Tensor>(target);
    return make_op(std::move(y), {pred}, [tgt](Node& node) {
        const NodePtr& p = node.parents[0];
        if (!p->needs_grad) return;
        const float g = node.grad[0];
        const float k = 2.0f / static_cast<float>(tgt->size());
        Tensor& dp = p->ensure_grad();
        for (std::int64_t i = 0; i < dp.size(); ++i) {
            dp[i] += g * k * (p->value[i] - (*tgt)[i]);
        }
    });
}

Tensor softmax_channels(const Tensor& logits) {
    const Shape s = logits.shape();
    Tensor p(s);
    const std::int64_t hw = std::int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        for (std::int64_t i = 0; i < hw; ++i) {
            float mx = -std::numeric_limits<float>::infinity();
            for (int c = 0; c < s.c; ++c) {
                mx = std::max(mx, logits[(std::int64_t(n) * s.c + c) * hw + i]);
            }
            double denom = 0.0;
            for (int c = 0; c < s.c; ++c) {
                denom += std::exp(double(logits[(std::int64_t(n) * s.c + c) * hw + i]) - mx);
            }
            for (int c = 0; c < s.c; ++c) {
                p[(std::int64_t(n) * s.c + c) * hw + i] = static_cast<float>(
                    std::exp(double(logits[(std::int64_t(n) * s.c + c) * hw + i]) - mx) / denom);
            }
        }
    }
    return p;
}

NodePtr ce_dice_loss(const NodePtr& logits, const std::vector<const GridU8*>& labels,
                     float w_ce, float w_dice) {
    const Shape s = logits->value.shape();
    const int K = s.c;
    if (static_cast<int>(labels.size()) != s.n) {
        throw ShapeError("ce_dice_loss: label batch mismatch");
    }
    if (K < 2) throw ShapeError("ce_dice_loss: need at least 2 classes");
    for (const GridU8* l : labels) {
        if (l->h != s.h || l->w != s.w) throw ShapeError("ce_dice_loss: label dims mismatch");
    }
    const std::int64_t hw = std::int64_t(s.h) * s.w;
    const std::int64_t total = std::int64_t(s.n) * hw;

    Tensor probs = softmax_channels(logits->value);

    // cross entropy
    double ce = 0.0;
    for (int n = 0; n < s.n; ++n) {
        for (std::int64_t i = 0; i < hw; ++i) {
            const int lab = labels[n]->v[static_cast<std::size_t>(i)];
            if (lab >= K) throw ConfigError("ce_dice_loss: label id out of range");
            const float pv = probs[(std::int64_t(n) * K + lab) * hw + i];
            ce -= std::log(std::max(double(pv), 1e-12));
        }
    }
    ce /= static_cast<double>(total);

    // batch soft dice over foreground classes
    const double smooth = 1.0;
    std::vector<double> S(K, 0.0), U(K, 0.0);
    for (int n = 0; n < s.n; ++n) {
        for (std::int64_t i = 0; i < hw; ++i) {
            const int lab = labels[n]->v[static_cast<std::size_t>(i)];
            for (int c = 1; c < K; ++c) {
                const double pv = probs[(std::int64_t(n) * K + c) * hw + i];
                S[c] += pv * (lab == c ? 1.0 : 0.0);
                U[c] += pv + (lab == c ? 1.0 : 0.0);
            }
        }
    }
    double dice_sum = 0.0;
    for (int c = 1; c < K; ++c) dice_sum += (2.0 * S[c] + smooth) / (U[c] + smooth);
    const double dice_loss = 1.0 - dice_sum / (K - 1);

    Tensor y(Shape{1, 1, 1, 1});
    y[0] = static_cast<float>(w_ce * ce + w_dice * dice_loss);

    auto probs_ptr = std::make_shared<Tensor>(std::move(probs));
    auto labels_copy = std::make_shared<std::vector<GridU8>>();
    labels_copy->reserve(labels.size());
    for (const GridU8* l : labels) labels_copy->push_back(*l);
    auto Sv = std::make_shared<std::vector<double>>(std::move(S));
    auto Uv = std::make_shared<std::vector<double>>(std::move(U));

    return make_op(std::move(y), {logits},
                   [probs_ptr, labels_copy, Sv, Uv, s, K, hw, total, w_ce, w_dice,
                    smooth](Node& node) {
        const NodePtr& lp = node.parents[0];
        if (!lp->needs_grad) return;
        const float g = node.grad[0];
        const Tensor& p = *probs_ptr;
        Tensor& dl = lp->ensure_grad();

        // d(dice_loss)/dp for foreground classes
        std::vector<double> dnum(K, 0.0), dden(K, 0.0);
        for (int c = 1; c < K; ++c) {
            const double u = (*Uv)[c] + smooth;
            dnum[c] = 2.0 / u;                                   // coefficient of g_ci term
            dden[c] = (2.0 * (*Sv)[c] + smooth) / (u * u);       // coefficient of 1 term
        }
        const double inv_fg = 1.0 / (K - 1);

        std::vector<double> dp(K);
        for (int n = 0; n < s.n; ++n) {
            for (std::int64_t i = 0; i < hw; ++i) {
                const int lab = labels_copy->at(n).v[static_cast<std::size_t>(i)];
                // dL/dp_c
                for (int c = 0; c < K; ++c) {
                    double v = 0.0;
                    if (c >= 1) {
                        const double gci = (lab == c) ? 1.0 : 0.0;
                        // d dice_c / dp_ci = dnum*g - dden; loss has minus sign
                        v += w_dice * (-inv_fg) * (dnum[c] * gci - dden[c]);
                    }
                    dp[c] = v;
                }
                // chain through softmax: dlogit_k = p_k (dp_k - sum_j p_j dp_j)
                double dot = 0.0;
                for (int c = 0; c < K; ++c) {
                    dot += double(p[(std::int64_t(n) * K + c) * hw + i]) * dp[c];
                }
                for (int c = 0; c < K; ++c) {
                    const double pv = p[(std::int64_t(n) * K + c) * hw + i];
                    double dlog = pv * (dp[c] - dot);
                    // CE shortcut: (p - onehot)/total
                    dlog += w_ce * (pv - (lab == c ? 1.0 : 0.0)) / double(total);
                    dl[(std::int64_t(n) * K + c) * hw + i] += static_cast<float>(g * dlog);
                }
            }
        }
    });
}

}  // namespace augpaint::nn
