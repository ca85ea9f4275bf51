#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "augpaint/datasets.hpp"
#include "augpaint/latent.hpp"
#include "augpaint/train_stats.hpp"
#include "augpaint/nn/layers.hpp"
#include "augpaint/rng.hpp"

namespace augpaint {

enum class AeVariant { vq, plain };

const char* to_string(AeVariant v);
AeVariant ae_variant_from_string(const std::string& s);

struct AutoencoderConfig {
    int factor = 4;  // spatial compression, power of 2
    int latent_channels = 3;
    int base_width = 32;
    AeVariant variant = AeVariant::vq;
    int codebook_size = 256;
    float commitment_beta = 0.25f;
    std::uint64_t init_seed = 1;

    void validate() const;
};

struct AeTrainConfig {
    int epochs = 40;
    int batch_size = 4;
    float lr = 1e-3f;
    std::uint64_t seed = 1;
};

// Perceptual compressor: encoder downsamples by `factor`, decoder mirrors it.
// The VQ variant carries a codebook used only inside the training loss; the
// encode/decode inference path stays continuous.
class Autoencoder {
public:
    Autoencoder() = default;
    explicit Autoencoder(const AutoencoderConfig& cfg);

    const AutoencoderConfig& config() const { return cfg_; }
    int factor() const { return cfg_.factor; }
    int latent_channels() const { return cfg_.latent_channels; }

    LatentGrid encode(const Tensor& image, const std::string& source_id = {}) const;
    Tensor decode(const LatentGrid& latent) const;  // clipped to [0,1]

    // Graph-building variants used by the trainer.
    nn::NodePtr encode_graph(const nn::NodePtr& x) const;
    nn::NodePtr decode_graph(const nn::NodePtr& z) const;

    // Nearest-codebook index per latent position (VQ variant only).
    std::vector<int> quantize_indices(const Tensor& z) const;
    Tensor quantize(const Tensor& z) const;

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    nn::NodePtr codebook() const { return codebook_; }

    void save(const std::filesystem::path& path, const std::string& config_hash = {}) const;
    static Autoencoder load(const std::filesystem::path& path);

private:
    struct Res {
        nn::GroupNormLayer gn1, gn2;
        nn::Conv2dLayer conv1, conv2, skip;
        bool has_skip = false;
        nn::NodePtr apply(const nn::NodePtr& x) const;
    };
    Res make_res(const std::string& name, int cin, int cout, Rng& rng);

    AutoencoderConfig cfg_;
    nn::ParamStore params_;
    // encoder
    nn::Conv2dLayer enc_stem_, enc_out_;
    nn::GroupNormLayer enc_gn_;
    std::vector<Res> enc_res_, enc_mid_;
    // decoder
    nn::Conv2dLayer dec_stem_, dec_out_;
    nn::GroupNormLayer dec_gn_;
    std::vector<Res> dec_res_, dec_mid_;
    nn::NodePtr codebook_;  // (1,1,V,C), VQ variant only
};

// Trains on all images of the given samples (labels are not used). Throws
// TrainingDiverged on a non-finite loss.
Autoencoder train_autoencoder(const std::vector<LabeledSample>& dataset,
                              const AutoencoderConfig& model_cfg,
                              const AeTrainConfig& train_cfg,
                              TrainStats* stats = nullptr);

}  // namespace augpaint
