#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "augpaint/nn/layers.hpp"

namespace augpaint::nn {

// Encoder-decoder U-Net with four resolution stages, GroupNorm + SiLU
// residual blocks and skip concatenation. With temb_dim > 0 every residual
// block receives a per-channel bias projected from a sinusoidal timestep
// embedding (used by the noise predictor); with temb_dim == 0 the network is
// a plain segmentation U-Net.
struct UNetConfig {
    int in_channels = 3;
    int out_channels = 3;
    std::array<int, 4> widths{32, 48, 64, 96};  // must be multiples of `groups`
    int temb_dim = 0;
    int groups = 8;
    std::uint64_t init_seed = 1;
};

class UNet {
public:
    UNet() = default;
    explicit UNet(const UNetConfig& cfg);

    // timesteps required iff temb_dim > 0 (one entry per batch element).
    NodePtr forward(const NodePtr& x, const std::vector<int>* timesteps = nullptr) const;
    Tensor infer(const Tensor& x, const std::vector<int>* timesteps = nullptr) const;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const UNetConfig& config() const { return cfg_; }

private:
    struct ResBlock {
        GroupNormLayer gn1, gn2;
        Conv2dLayer conv1, conv2;
        Conv2dLayer skip;
        LinearLayer temb_proj;
        bool has_skip = false;
        bool has_temb = false;

        NodePtr apply(const NodePtr& x, const NodePtr& temb) const;
    };

    ResBlock make_resblock(const std::string& name, int cin, int cout, Rng& rng);

    UNetConfig cfg_;
    ParamStore params_;
    Conv2dLayer stem_, out_conv_;
    GroupNormLayer out_gn_;
    LinearLayer temb1_, temb2_;
    std::array<ResBlock, 4> enc_;
    ResBlock mid_;
    std::array<ResBlock, 3> dec_;
};

}  // namespace augpaint::nn
