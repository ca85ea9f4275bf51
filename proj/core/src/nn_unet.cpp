#include "augpaint/nn/unet.hpp"

#include "augpaint/errors.hpp"

namespace augpaint::nn {

UNet::ResBlock UNet::make_resblock(const std::string& name, int cin, int cout, Rng& rng) {
    ResBlock rb;
    rb.gn1 = GroupNormLayer::create(params_, name + ".gn1", cin, cfg_.groups);
    rb.conv1 = Conv2dLayer::create(params_, name + ".conv1", cin, cout, 3, 1, 1, rng);
    rb.gn2 = GroupNormLayer::create(params_, name + ".gn2", cout, cfg_.groups);
    // zero-init second conv: block starts as identity + skip
    rb.conv2 = Conv2dLayer::create(params_, name + ".conv2", cout, cout, 3, 1, 1, rng, 0.0f);
    if (cin != cout) {
        rb.skip = Conv2dLayer::create(params_, name + ".skip", cin, cout, 1, 1, 0, rng);
        rb.has_skip = true;
    }
    if (cfg_.temb_dim > 0) {
        rb.temb_proj = LinearLayer::create(params_, name + ".temb", cfg_.temb_dim, cout, rng);
        rb.has_temb = true;
    }
    return rb;
}

NodePtr UNet::ResBlock::apply(const NodePtr& x, const NodePtr& temb) const {
    NodePtr h = conv1(silu(gn1(x)));
    if (has_temb) {
        if (!temb) throw ConfigError("resblock requires a timestep embedding");
        h = add_channel_bias(h, temb_proj(silu(temb)));
    }
    h = conv2(silu(gn2(h)));
    return add(h, has_skip ? skip(x) : x);
}

UNet::UNet(const UNetConfig& cfg) : cfg_(cfg) {
    for (int w : cfg_.widths) {
        if (w <= 0 || w % cfg_.groups != 0) {
            throw ConfigError("unet widths must be positive multiples of the norm group count");
        }
    }
    Rng rng(cfg_.init_seed);
    if (cfg_.temb_dim > 0) {
        temb1_ = LinearLayer::create(params_, "temb.l1", cfg_.temb_dim, cfg_.temb_dim, rng);
        temb2_ = LinearLayer::create(params_, "temb.l2", cfg_.temb_dim, cfg_.temb_dim, rng);
    }
    const auto& w = cfg_.widths;
    stem_ = Conv2dLayer::create(params_, "stem", cfg_.in_channels, w[0], 3, 1, 1, rng);
    enc_[0] = make_resblock("enc0", w[0], w[0], rng);
    enc_[1] = make_resblock("enc1", w[0], w[1], rng);
    enc_[2] = make_resblock("enc2", w[1], w[2], rng);
    enc_[3] = make_resblock("enc3", w[2], w[3], rng);
    mid_ = make_resblock("mid", w[3], w[3], rng);
    dec_[2] = make_resblock("dec2", w[3] + w[2], w[2], rng);
    dec_[1] = make_resblock("dec1", w[2] + w[1], w[1], rng);
    dec_[0] = make_resblock("dec0", w[1] + w[0], w[0], rng);
    out_gn_ = GroupNormLayer::create(params_, "out.gn", w[0], cfg_.groups);
    out_conv_ = Conv2dLayer::create(params_, "out.conv", w[0], cfg_.out_channels, 3, 1, 1,
                                    rng, 0.0f);
}

NodePtr UNet::forward(const NodePtr& x, const std::vector<int>* timesteps) const {
    const Shape s = x->value.shape();
    if (s.c != cfg_.in_channels) {
        throw ShapeError("unet: expected " + std::to_string(cfg_.in_channels) +
                         " input channels, got " + s.str());
    }
    if (s.h % 8 != 0 || s.w % 8 != 0) {
        throw ShapeError("unet: spatial dims must be divisible by 8, got " + s.str());
    }
    NodePtr temb;
    if (cfg_.temb_dim > 0) {
        if (!timesteps || static_cast<int>(timesteps->size()) != s.n) {
            throw ConfigError("unet: one timestep per batch element required");
        }
        temb = temb2_(silu(temb1_(make_const(timestep_embedding(*timesteps, cfg_.temb_dim)))));
    } else if (timesteps) {
        throw ConfigError("unet: timesteps given to an unconditioned network");
    }

    NodePtr h = stem_(x);
    NodePtr s0 = enc_[0].apply(h, temb);
    NodePtr s1 = enc_[1].apply(avg_pool2(s0), temb);
    NodePtr s2 = enc_[2].apply(avg_pool2(s1), temb);
    NodePtr h3 = enc_[3].apply(avg_pool2(s2), temb);
    h = mid_.apply(h3, temb);
    h = dec_[2].apply(concat_channels(upsample_nearest2(h), s2), temb);
    h = dec_[1].apply(concat_channels(upsample_nearest2(h), s1), temb);
    h = dec_[0].apply(concat_channels(upsample_nearest2(h), s0), temb);
    return out_conv_(silu(out_gn_(h)));
}

Tensor UNet::infer(const Tensor& x, const std::vector<int>* timesteps) const {
    return forward(make_const(x), timesteps)->value;
}

}  // namespace augpaint::nn
