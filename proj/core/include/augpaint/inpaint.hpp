#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "augpaint/autoencoder.hpp"
#include "augpaint/datasets.hpp"
#include "augpaint/diffusion.hpp"
#include "augpaint/generated_pair.hpp"
#include "augpaint/latent.hpp"
#include "augpaint/masking.hpp"

namespace augpaint {

struct InpaintConfig {
    int steps = 50;     // DDIM steps T'
    double eta = 1.0;   // stochasticity; the printed step variance is the eta=1 case
    int samples_per_pair = 5;
    bool flipping_enabled = false;
    MaskKind mask_kind = MaskKind::box;
    int mask_padding = 0;
    double min_mask_area_frac = 0.0;  // grow masks to this coverage when > 0
    bool final_composite = false;     // composite once more with z_0 before decoding
    std::uint64_t seed = 0;

    void validate(int T) const;
};

// Counters filled by instrumented sampling runs.
struct SampleInstrumentation {
    bool check_known_region = false;
    std::int64_t known_region_mismatches = 0;
    std::int64_t known_region_checked = 0;
    int steps_visited = 0;
    std::int64_t clamp_count = 0;  // ddim sub-variance domain clamps
};

// Elementwise select: known entries come from z_t (bitwise), the rest from
// zhat_t. The mask is broadcast across channels.
LatentGrid composite(const GridU8& latent_mask, const LatentGrid& z_t,
                     const LatentGrid& zhat_t);

// Step variance of the strided sampler; eta scales the eta=1 closed form.
double ddim_tau(const NoiseSchedule& sched, int t, int t_prev, double eta);

// Predicted clean latent (z - sqrt(1-abar_t) eps_hat) / sqrt(abar_t).
Tensor ddim_pred_x0(const Tensor& z, const Tensor& eps_hat, double abar_t);
std::vector<double> ddim_pred_x0_f64(const std::vector<double>& z,
                                     const std::vector<double>& eps_hat, double abar_t);

// One reverse step t -> t_prev. beta_noise may be null when eta == 0; a
// negative sub-variance (numeric domain violation) is clamped to 0 and
// counted in instr->clamp_count.
LatentGrid ddim_step(const LatentGrid& z_in, const Tensor& eps_hat, int t, int t_prev,
                     const NoiseSchedule& sched, double eta, const Tensor* beta_noise,
                     SampleInstrumentation* instr = nullptr);

// Exactly `steps` timesteps, evenly spaced, strictly decreasing from T to 1.
std::vector<int> ddim_timesteps(int T, int steps);

// Inpainting with the unconditional model: encode, then per DDIM step draw
// fresh noise, q-sample the clean latent, composite the known region,
// predict noise and step; finally decode. The output pairs with the
// (possibly flipped) label.
GeneratedPair augpaint_sample(const Tensor& x0, const GridU8& y0, const Autoencoder& ae,
                              const DiffusionModel& model, const NoiseSchedule& sched,
                              const InpaintConfig& cfg, Rng& rng,
                              SampleInstrumentation* instr = nullptr);

// Conditional variant: plain DDIM loop conditioned on the encoded masked
// image at every step; no compositing.
GeneratedPair cond_sample(const Tensor& x0, const GridU8& y0, const Autoencoder& ae,
                          const DiffusionModel& model, const NoiseSchedule& sched,
                          const InpaintConfig& cfg, Rng& rng);

// samples_per_pair samples per foreground-bearing source, each from an
// independent RNG substream keyed by (cfg.seed, source id, sample index), so
// results do not depend on iteration order. Dispatches on model.conditional().
std::vector<GeneratedPair> generate_batch(const std::vector<LabeledSample>& labeled,
                                          const Autoencoder& ae, const DiffusionModel& model,
                                          const NoiseSchedule& sched, const InpaintConfig& cfg,
                                          SampleInstrumentation* instr = nullptr);

struct DiversityReport {
    struct PerSource {
        std::string source_id;
        int n_samples = 0;
        double mean_pairwise_l2 = 0.0;
    };
    std::vector<PerSource> sources;
    double mean_over_sources = 0.0;
    int skipped_sources = 0;  // sources with fewer than 2 samples
};

// Mean pairwise Euclidean distance between generated images, per source.
DiversityReport diversity_report(const std::vector<GeneratedPair>& pairs);

// Dataset directory layout (images/, labels/) plus provenance.jsonl with
// {id, source_id, seed, steps, eta, mask_kind, flips, confidence}.
void save_generated(const std::vector<GeneratedPair>& pairs,
                    const std::filesystem::path& dir, const InpaintConfig& cfg);
std::vector<GeneratedPair> load_generated(const std::filesystem::path& dir);

}  // namespace augpaint
