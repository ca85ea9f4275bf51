#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "augpaint/autoencoder.hpp"
#include "augpaint/latent.hpp"
#include "augpaint/nn/unet.hpp"
#include "augpaint/rng.hpp"

namespace augpaint {

// Timestep count plus cumulative signal coefficients. alpha_bar has length
// T+1 with alpha_bar[0] = 1 and alpha_bar[t] = prod_{s<t} (1 - beta[s]).
struct NoiseSchedule {
    int T = 0;
    std::vector<double> alpha_bar;  // length T+1
    std::vector<double> beta;       // length T
};

enum class ScheduleKind { linear };

NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_min, double beta_max);

enum class QSampleVariant {
    standard,       // z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
    paper_literal,  // z_t = sqrt(abar_t) z0 + (1 - abar_t) eps  (A/B flag)
};

LatentGrid q_sample(const LatentGrid& z0, int t, const Tensor& eps,
                    const NoiseSchedule& sched,
                    QSampleVariant variant = QSampleVariant::standard);

// Double-precision twin sharing the same kernel (precision-sensitive oracles).
std::vector<double> q_sample_f64(const std::vector<double>& z0, int t,
                                 const std::vector<double>& eps,
                                 const NoiseSchedule& sched,
                                 QSampleVariant variant = QSampleVariant::standard);

// One axis-aligned rectangle of known pixels covering a uniformly drawn
// fraction of the area in [frac_min, frac_max].
GridU8 random_box_mask(int h, int w, Rng& rng, double frac_min = 0.1,
                       double frac_max = 0.6);

struct DiffusionConfig {
    int latent_channels = 3;
    std::array<int, 4> widths{32, 48, 64, 96};
    int temb_dim = 64;
    bool conditional = false;
    std::uint64_t init_seed = 1;
};

struct LdmTrainConfig {
    int epochs = 250;
    int batch_size = 8;
    float lr = 3e-4f;
    std::uint64_t seed = 1;
    // conditional training: area fraction range of the random box masks
    double mask_frac_min = 0.1;
    double mask_frac_max = 0.6;
};

// epsilon-predictor U-Net over latents; the conditional variant takes the
// encoded masked image concatenated on the channel axis (2C input channels).
class DiffusionModel {
public:
    DiffusionModel() = default;
    DiffusionModel(const DiffusionConfig& cfg, NoiseSchedule sched);

    bool conditional() const { return cfg_.conditional; }
    const DiffusionConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return sched_; }
    nn::UNet& unet() { return unet_; }
    const nn::UNet& unet() const { return unet_; }

    void save(const std::filesystem::path& path, const std::string& config_hash = {}) const;
    static DiffusionModel load(const std::filesystem::path& path);

private:
    DiffusionConfig cfg_;
    NoiseSchedule sched_;
    nn::UNet unet_;
};

// cond must be present iff the model is conditional; output shape = z shape.
Tensor predict_eps(const DiffusionModel& model, const LatentGrid& z, int t,
                   const LatentGrid* cond = nullptr);

// Trains the epsilon predictor on precomputed latents. For the conditional
// variant, `images` (aligned with `latents`) and `ae` are required: each
// batch draws fresh random box masks, masks the images and re-encodes them
// as the condition.
DiffusionModel train_ldm(const std::vector<LatentGrid>& latents,
                         const DiffusionConfig& model_cfg, const NoiseSchedule& sched,
                         const LdmTrainConfig& train_cfg,
                         const std::vector<Tensor>* images = nullptr,
                         const Autoencoder* ae = nullptr, TrainStats* stats = nullptr);

}  // namespace augpaint
