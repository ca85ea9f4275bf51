#include "augpaint/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "augpaint/checkpoint.hpp"
#include "augpaint/detail/sampling_math.hpp"
#include "augpaint/errors.hpp"
#include "augpaint/image.hpp"

namespace augpaint {

NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_min, double beta_max) {
    if (T < 1) throw ConfigError("schedule: T must be >= 1");
    if (!(beta_min > 0.0) || beta_min > beta_max || !(beta_max < 1.0)) {
        throw ConfigError("schedule: need 0 < beta_min <= beta_max < 1");
    }
    if (kind != ScheduleKind::linear) throw ConfigError("schedule: unknown kind");

    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        s.beta[std::size_t(t)] =
            T == 1 ? beta_min : beta_min + (beta_max - beta_min) * t / (T - 1);
    }
    s.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 0; t < T; ++t) {
        s.alpha_bar[std::size_t(t) + 1] = s.alpha_bar[std::size_t(t)] * (1.0 - s.beta[std::size_t(t)]);
    }
    return s;
}

LatentGrid q_sample(const LatentGrid& z0, int t, const Tensor& eps,
                    const NoiseSchedule& sched, QSampleVariant variant) {
    if (t < 1 || t > sched.T) {
        throw ConfigError("q_sample: t out of range [1, T]");
    }
    check_same_shape(z0.values, eps, "q_sample");
    const double abar = sched.alpha_bar[std::size_t(t)];
    const double signal = std::sqrt(abar);
    const double noise =
        variant == QSampleVariant::standard ? std::sqrt(1.0 - abar) : 1.0 - abar;
    LatentGrid out = z0;
    detail::q_sample_kernel(z0.values.data(), eps.data(), out.values.data(),
                            out.values.size(), signal, noise);
    return out;
}

std::vector<double> q_sample_f64(const std::vector<double>& z0, int t,
                                 const std::vector<double>& eps,
                                 const NoiseSchedule& sched, QSampleVariant variant) {
    if (t < 1 || t > sched.T) throw ConfigError("q_sample: t out of range [1, T]");
    if (z0.size() != eps.size()) throw ShapeError("q_sample: eps size mismatch");
    const double abar = sched.alpha_bar[std::size_t(t)];
    const double noise =
        variant == QSampleVariant::standard ? std::sqrt(1.0 - abar) : 1.0 - abar;
    std::vector<double> out(z0.size());
    detail::q_sample_kernel(z0.data(), eps.data(), out.data(),
                            static_cast<std::int64_t>(z0.size()), std::sqrt(abar), noise);
    return out;
}

GridU8 random_box_mask(int h, int w, Rng& rng, double frac_min, double frac_max) {
    if (h < 1 || w < 1) throw ConfigError("random_box_mask: invalid shape");
    if (frac_min < 0.0 || frac_max > 1.0 || frac_min > frac_max) {
        throw ConfigError("random_box_mask: invalid area fraction range");
    }
    const double frac = rng.uniform(frac_min, frac_max);
    GridU8 mask(h, w, 0);
    if (frac >= 1.0) {
        std::fill(mask.v.begin(), mask.v.end(), std::uint8_t{1});
        return mask;
    }
    const double area = frac * h * w;
    // aspect drawn log-uniform in [1/2, 2]
    const double aspect = std::exp(rng.uniform(-std::log(2.0), std::log(2.0)));
    int rh = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    rh = std::clamp(rh, 1, h);
    int rw = static_cast<int>(std::lround(area / rh));
    rw = std::clamp(rw, 1, w);
    const int top = static_cast<int>(rng.uniform_int(0, h - rh));
    const int left = static_cast<int>(rng.uniform_int(0, w - rw));
    for (int r = top; r < top + rh; ++r) {
        for (int c = left; c < left + rw; ++c) mask.at(r, c) = 1;
    }
    return mask;
}

DiffusionModel::DiffusionModel(const DiffusionConfig& cfg, NoiseSchedule sched)
    : cfg_(cfg), sched_(std::move(sched)) {
    nn::UNetConfig ucfg;
    ucfg.in_channels = cfg.conditional ? 2 * cfg.latent_channels : cfg.latent_channels;
    ucfg.out_channels = cfg.latent_channels;
    ucfg.widths = cfg.widths;
    ucfg.temb_dim = cfg.temb_dim;
    ucfg.init_seed = cfg.init_seed;
    unet_ = nn::UNet(ucfg);
}

Tensor predict_eps(const DiffusionModel& model, const LatentGrid& z, int t,
                   const LatentGrid* cond) {
    if (model.conditional() && cond == nullptr) {
        throw ConfigError("predict_eps: conditional model requires a condition");
    }
    if (!model.conditional() && cond != nullptr) {
        throw ConfigError("predict_eps: unconditional model given a condition");
    }
    const std::vector<int> ts{t};
    if (!cond) {
        return model.unet().infer(z.values, &ts);
    }
    check_same_shape(z.values, cond->values, "predict_eps: condition");
    auto input = nn::concat_channels(nn::make_const(z.values), nn::make_const(cond->values));
    return model.unet().forward(input, &ts)->value;
}

void DiffusionModel::save(const std::filesystem::path& path,
                          const std::string& config_hash) const {
    Checkpoint ck;
    ck.meta = {{"model", "diffusion"},
               {"latent_channels", cfg_.latent_channels},
               {"widths", cfg_.widths},
               {"temb_dim", cfg_.temb_dim},
               {"conditional", cfg_.conditional},
               {"init_seed", cfg_.init_seed},
               {"T", sched_.T},
               {"beta", sched_.beta},
               {"config_hash", config_hash}};
    for (const auto& [name, node] : unet_.params().entries()) {
        ck.arrays.emplace_back(name, node->value);
    }
    ck.save(path);
}

DiffusionModel DiffusionModel::load(const std::filesystem::path& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("model", "") != "diffusion") {
        throw IoError("checkpoint is not a diffusion model: " + path.string());
    }
    DiffusionConfig cfg;
    cfg.latent_channels = ck.meta.at("latent_channels").get<int>();
    cfg.widths = ck.meta.at("widths").get<std::array<int, 4>>();
    cfg.temb_dim = ck.meta.at("temb_dim").get<int>();
    cfg.conditional = ck.meta.at("conditional").get<bool>();
    cfg.init_seed = ck.meta.at("init_seed").get<std::uint64_t>();

    NoiseSchedule sched;
    sched.T = ck.meta.at("T").get<int>();
    sched.beta = ck.meta.at("beta").get<std::vector<double>>();
    sched.alpha_bar.resize(sched.beta.size() + 1);
    sched.alpha_bar[0] = 1.0;
    for (std::size_t t = 0; t < sched.beta.size(); ++t) {
        sched.alpha_bar[t + 1] = sched.alpha_bar[t] * (1.0 - sched.beta[t]);
    }

    DiffusionModel model(cfg, std::move(sched));
    for (auto& [name, node] : model.unet_.params().entries()) {
        node->value = ck.array(name);
    }
    return model;
}

DiffusionModel train_ldm(const std::vector<LatentGrid>& latents,
                         const DiffusionConfig& model_cfg, const NoiseSchedule& sched,
                         const LdmTrainConfig& train_cfg, const std::vector<Tensor>* images,
                         const Autoencoder* ae, TrainStats* stats) {
    if (latents.empty()) throw ConfigError("train_ldm: no latents");
    if (model_cfg.conditional) {
        if (!images || !ae) {
            throw ConfigError("train_ldm: conditional training needs images and the autoencoder");
        }
        if (images->size() != latents.size()) {
            throw ConfigError("train_ldm: images/latents size mismatch");
        }
    }
    DiffusionModel model(model_cfg, sched);

    const Shape ls = latents[0].values.shape();
    const int C = model_cfg.latent_channels;
    if (ls.c != C) throw ShapeError("train_ldm: latent channel mismatch");

    nn::Adam opt(model.unet().params().nodes(), train_cfg.lr);
    Rng rng(train_cfg.seed);
    const int n = static_cast<int>(latents.size());
    const int bs = std::min(train_cfg.batch_size, n);

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;

    TrainStats local;
    std::vector<Tensor> last_good;
    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        if (train_cfg.epochs > 1) {
            const float frac = static_cast<float>(epoch) / (train_cfg.epochs - 1);
            opt.set_lr(train_cfg.lr * std::max(0.1f, 1.0f - 0.9f * frac));
        }
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform_int(0, i));
            std::swap(order[std::size_t(i)], order[std::size_t(j)]);
        }
        for (int start = 0; start + bs <= n; start += bs) {
            const int in_ch = model_cfg.conditional ? 2 * C : C;
            Tensor input(Shape{bs, in_ch, ls.h, ls.w});
            Tensor target(Shape{bs, C, ls.h, ls.w});
            std::vector<int> ts(static_cast<std::size_t>(bs));
            const std::int64_t per = std::int64_t(C) * ls.h * ls.w;
            for (int b = 0; b < bs; ++b) {
                const LatentGrid& z0 = latents[std::size_t(order[std::size_t(start + b)])];
                const int t = static_cast<int>(rng.uniform_int(1, sched.T));
                ts[std::size_t(b)] = t;
                Tensor eps(z0.values.shape());
                rng.fill_normal(eps);
                const LatentGrid zt = q_sample(z0, t, eps, sched);
                std::copy_n(zt.values.data(), per,
                            input.data() + std::int64_t(b) * in_ch * ls.h * ls.w);
                std::copy_n(eps.data(), per, target.data() + std::int64_t(b) * per);
                if (model_cfg.conditional) {
                    const Tensor& img = (*images)[std::size_t(order[std::size_t(start + b)])];
                    GridU8 mask = random_box_mask(img.shape().h, img.shape().w, rng,
                                                  train_cfg.mask_frac_min,
                                                  train_cfg.mask_frac_max);
                    const LatentGrid cond = ae->encode(apply_mask(img, mask));
                    std::copy_n(cond.values.data(), per,
                                input.data() + std::int64_t(b) * in_ch * ls.h * ls.w + per);
                }
            }
            auto pred = model.unet().forward(nn::make_const(input), &ts);
            auto loss = nn::mse_loss(pred, target);
            const float lv = loss->value[0];
            if (!std::isfinite(lv)) {
                if (!last_good.empty()) {
                    model.unet().params().restore_values(last_good);
                }
                throw TrainingDiverged(
                    "ldm training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                    (last_good.empty() ? "" : "; parameters restored to last good snapshot"));
            }
            opt.zero_grad();
            nn::backward(loss);
            opt.step();
            ++local.steps;
            local.final_loss = lv;
            if (local.steps % 100 == 0) {
                last_good = model.unet().params().snapshot_values();
            }
        }
        local.losses.push_back(local.final_loss);
    }
    if (stats) *stats = local;
    return model;
}

}  // namespace augpaint
