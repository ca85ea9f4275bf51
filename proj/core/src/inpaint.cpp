#include "augpaint/inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "augpaint/checkpoint.hpp"
#include "augpaint/detail/sampling_math.hpp"
#include "augpaint/errors.hpp"
#include "augpaint/png_io.hpp"

namespace augpaint {

void InpaintConfig::validate(int T) const {
    if (steps < 1) throw ConfigError("inpaint: steps must be >= 1");
    if (steps > T) throw ConfigError("inpaint: steps cannot exceed schedule length T");
    if (eta < 0.0 || eta > 1.0) throw ConfigError("inpaint: eta must be in [0,1]");
    if (samples_per_pair < 1) throw ConfigError("inpaint: samples_per_pair must be >= 1");
    if (mask_padding < 0) throw ConfigError("inpaint: mask_padding must be >= 0");
}

LatentGrid composite(const GridU8& latent_mask, const LatentGrid& z_t,
                     const LatentGrid& zhat_t) {
    check_same_shape(z_t.values, zhat_t.values, "composite");
    const Shape s = z_t.values.shape();
    if (latent_mask.h != s.h || latent_mask.w != s.w) {
        throw ShapeError("composite: mask dims do not match latent");
    }
    LatentGrid out = zhat_t;
    const std::int64_t hw = std::int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const std::int64_t base = (std::int64_t(n) * s.c + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                if (latent_mask.v[static_cast<std::size_t>(i)]) {
                    out.values[base + i] = z_t.values[base + i];
                }
            }
        }
    }
    return out;
}

double ddim_tau(const NoiseSchedule& sched, int t, int t_prev, double eta) {
    if (t < 1 || t > sched.T || t_prev < 0 || t_prev >= t) {
        throw ConfigError("ddim_tau: need 0 <= t_prev < t <= T");
    }
    const double A = sched.alpha_bar[std::size_t(t)];
    const double P = sched.alpha_bar[std::size_t(t_prev)];
    if (!(P > A)) throw NumericError("ddim_tau: alpha_bar[t_prev] must exceed alpha_bar[t]");
    if (P == 1.0) return 0.0;  // final step is always deterministic
    return eta * std::sqrt((1.0 - P) / (1.0 - A)) * std::sqrt(1.0 - A / P);
}

Tensor ddim_pred_x0(const Tensor& z, const Tensor& eps_hat, double abar_t) {
    check_same_shape(z, eps_hat, "ddim_pred_x0");
    Tensor out(z.shape());
    detail::ddim_pred_x0_kernel(z.data(), eps_hat.data(), out.data(), z.size(), abar_t);
    return out;
}

std::vector<double> ddim_pred_x0_f64(const std::vector<double>& z,
                                     const std::vector<double>& eps_hat, double abar_t) {
    if (z.size() != eps_hat.size()) throw ShapeError("ddim_pred_x0: size mismatch");
    std::vector<double> out(z.size());
    detail::ddim_pred_x0_kernel(z.data(), eps_hat.data(), out.data(),
                                static_cast<std::int64_t>(z.size()), abar_t);
    return out;
}

LatentGrid ddim_step(const LatentGrid& z_in, const Tensor& eps_hat, int t, int t_prev,
                     const NoiseSchedule& sched, double eta, const Tensor* beta_noise,
                     SampleInstrumentation* instr) {
    check_same_shape(z_in.values, eps_hat, "ddim_step");
    if (eta < 0.0 || eta > 1.0) throw ConfigError("ddim_step: eta must be in [0,1]");
    const double A = sched.alpha_bar[std::size_t(t)];
    const double P = sched.alpha_bar[std::size_t(t_prev)];
    const double tau = ddim_tau(sched, t, t_prev, eta);

    double dir_sq = 1.0 - P - tau * tau;
    if (dir_sq < 0.0) {
        if (instr) ++instr->clamp_count;
        dir_sq = 0.0;
    }
    const double sqrt_P = std::sqrt(P);
    const double dir = std::sqrt(dir_sq);
    const bool stochastic = tau > 0.0;
    if (stochastic) {
        if (!beta_noise) throw ConfigError("ddim_step: eta > 0 requires beta noise");
        check_same_shape(z_in.values, *beta_noise, "ddim_step: beta noise");
    }

    const Tensor x0 = ddim_pred_x0(z_in.values, eps_hat, A);
    LatentGrid out = z_in;
    for (std::int64_t i = 0; i < out.values.size(); ++i) {
        double v = sqrt_P * x0[i] + dir * eps_hat[i];
        if (stochastic) v += tau * (*beta_noise)[i];
        out.values[i] = static_cast<float>(v);
    }
    return out;
}

std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1) throw ConfigError("ddim_timesteps: steps must be >= 1");
    if (steps > T) throw ConfigError("ddim_timesteps: steps cannot exceed T");
    std::vector<int> ts(static_cast<std::size_t>(steps));
    if (steps == 1) {
        ts[0] = T;
        return ts;
    }
    const double span = static_cast<double>(T - 1) / (steps - 1);
    for (int i = 0; i < steps; ++i) {
        ts[std::size_t(i)] = static_cast<int>(std::llround(T - i * span));
    }
    return ts;
}

namespace {

MaskSpec build_condition_mask(const GridU8& y0, const InpaintConfig& cfg) {
    MaskSpec mask = cfg.mask_kind == MaskKind::label_shape ? get_label_mask(y0)
                                                           : get_box_mask(y0, cfg.mask_padding);
    if (cfg.min_mask_area_frac > 0.0) {
        mask = grow_mask_to_area(mask, cfg.min_mask_area_frac);
    }
    return mask;
}

FlipPair draw_flips(const InpaintConfig& cfg, Rng& rng) {
    FlipPair flips;
    if (cfg.flipping_enabled) {
        flips.horizontal = rng.bernoulli(0.5);
        flips.vertical = rng.bernoulli(0.5);
    }
    return flips;
}

void check_finite_or_throw(const Tensor& z, int step_index, int t) {
    if (!z.all_finite()) {
        throw NumericError("sampling produced a non-finite latent at step " +
                           std::to_string(step_index) + " (t=" + std::to_string(t) + ")");
    }
}

}  // namespace

GeneratedPair augpaint_sample(const Tensor& x0, const GridU8& y0, const Autoencoder& ae,
                              const DiffusionModel& model, const NoiseSchedule& sched,
                              const InpaintConfig& cfg, Rng& rng,
                              SampleInstrumentation* instr) {
    if (model.conditional()) {
        throw ConfigError("augpaint_sample: model must be unconditional");
    }
    cfg.validate(sched.T);

    MaskSpec mask = build_condition_mask(y0, cfg);
    const FlipPair flips = draw_flips(cfg, rng);
    FlippedSample fs = flip_foreground(x0, y0, mask, flips);

    const LatentGrid z0 = ae.encode(fs.image);
    const GridU8 latent_mask = resize_mask_to_latent(fs.mask, ae.factor());
    const std::vector<int> ts = ddim_timesteps(sched.T, cfg.steps);

    LatentGrid zhat = z0;
    rng.fill_normal(zhat.values);

    Tensor eps(z0.values.shape());
    Tensor beta(z0.values.shape());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const int t_prev = (i + 1 < ts.size()) ? ts[i + 1] : 0;

        rng.fill_normal(eps);
        const LatentGrid zt = q_sample(z0, t, eps, sched);
        const LatentGrid zcond = composite(latent_mask, zt, zhat);
        if (instr) {
            ++instr->steps_visited;
            if (instr->check_known_region) {
                const std::int64_t hw = std::int64_t(latent_mask.h) * latent_mask.w;
                for (int c = 0; c < z0.values.shape().c; ++c) {
                    for (std::int64_t p = 0; p < hw; ++p) {
                        if (!latent_mask.v[static_cast<std::size_t>(p)]) continue;
                        ++instr->known_region_checked;
                        const std::int64_t idx = std::int64_t(c) * hw + p;
                        if (std::memcmp(zcond.values.data() + idx, zt.values.data() + idx,
                                        sizeof(float)) != 0) {
                            ++instr->known_region_mismatches;
                        }
                    }
                }
            }
        }

        const Tensor eps_hat = predict_eps(model, zcond, t);
        const Tensor* beta_ptr = nullptr;
        if (cfg.eta > 0.0) {
            rng.fill_normal(beta);
            beta_ptr = &beta;
        }
        zhat = ddim_step(zcond, eps_hat, t, t_prev, sched, cfg.eta, beta_ptr, instr);
        check_finite_or_throw(zhat.values, static_cast<int>(i), t);
    }
    if (cfg.final_composite) {
        zhat = composite(latent_mask, z0, zhat);
    }

    GeneratedPair pair;
    pair.image = ae.decode(zhat);
    pair.label = std::move(fs.label);
    pair.mask_spec = std::move(fs.mask);
    return pair;
}

GeneratedPair cond_sample(const Tensor& x0, const GridU8& y0, const Autoencoder& ae,
                          const DiffusionModel& model, const NoiseSchedule& sched,
                          const InpaintConfig& cfg, Rng& rng) {
    if (!model.conditional()) {
        throw ConfigError("cond_sample: model must be conditional");
    }
    cfg.validate(sched.T);

    MaskSpec mask = build_condition_mask(y0, cfg);
    const FlipPair flips = draw_flips(cfg, rng);
    FlippedSample fs = flip_foreground(x0, y0, mask, flips);

    const LatentGrid cond = ae.encode(apply_mask(fs.image, fs.mask.pixel_mask));
    const std::vector<int> ts = ddim_timesteps(sched.T, cfg.steps);

    LatentGrid zhat = cond;
    rng.fill_normal(zhat.values);

    Tensor beta(cond.values.shape());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const int t_prev = (i + 1 < ts.size()) ? ts[i + 1] : 0;
        const Tensor eps_hat = predict_eps(model, zhat, t, &cond);
        const Tensor* beta_ptr = nullptr;
        if (cfg.eta > 0.0) {
            rng.fill_normal(beta);
            beta_ptr = &beta;
        }
        zhat = ddim_step(zhat, eps_hat, t, t_prev, sched, cfg.eta, beta_ptr, nullptr);
        check_finite_or_throw(zhat.values, static_cast<int>(i), t);
    }

    GeneratedPair pair;
    pair.image = ae.decode(zhat);
    pair.label = std::move(fs.label);
    pair.mask_spec = std::move(fs.mask);
    return pair;
}

std::vector<GeneratedPair> generate_batch(const std::vector<LabeledSample>& labeled,
                                          const Autoencoder& ae, const DiffusionModel& model,
                                          const NoiseSchedule& sched, const InpaintConfig& cfg,
                                          SampleInstrumentation* instr) {
    if (labeled.empty()) throw ConfigError("generate_batch: empty labeled set");
    std::vector<GeneratedPair> out;
    out.reserve(labeled.size() * static_cast<std::size_t>(cfg.samples_per_pair));
    for (const auto& src : labeled) {
        if (src.label.count_nonzero() == 0) continue;  // NoForeground source, skipped
        for (int k = 0; k < cfg.samples_per_pair; ++k) {
            const std::uint64_t seed =
                derive_stream_seed(cfg.seed, src.id, static_cast<std::uint64_t>(k));
            Rng rng(seed);
            GeneratedPair pair =
                model.conditional()
                    ? cond_sample(src.image, src.label, ae, model, sched, cfg, rng)
                    : augpaint_sample(src.image, src.label, ae, model, sched, cfg, rng, instr);
            pair.id = src.id + "_g" + std::to_string(k);
            pair.source_id = src.id;
            pair.seed = seed;
            pair.mask_spec.source_label_id = src.id;
            out.push_back(std::move(pair));
        }
    }
    return out;
}

void save_generated(const std::vector<GeneratedPair>& pairs,
                    const std::filesystem::path& dir, const InpaintConfig& cfg) {
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "labels");
    std::ostringstream manifest;
    for (const auto& p : pairs) {
        write_png_rgb(dir / "images" / (p.id + ".png"), p.image);
        write_png_gray(dir / "labels" / (p.id + ".png"), p.label);
        nlohmann::json rec{{"id", p.id},
                           {"source_id", p.source_id},
                           {"seed", p.seed},
                           {"steps", cfg.steps},
                           {"eta", cfg.eta},
                           {"mask_kind", to_string(p.mask_spec.kind)},
                           {"flips", {p.mask_spec.flip_horizontal, p.mask_spec.flip_vertical}}};
        if (p.scored()) {
            rec["confidence"] = p.confidence;
        } else {
            rec["confidence"] = nullptr;
        }
        manifest << rec.dump() << "\n";
    }
    write_text_atomic(dir / "provenance.jsonl", manifest.str());
}

std::vector<GeneratedPair> load_generated(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "provenance.jsonl";
    std::ifstream is(manifest_path);
    if (!is) throw IoError("provenance not found: " + manifest_path.string());
    std::vector<GeneratedPair> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded()) throw IoError("bad provenance record in " + manifest_path.string());
        GeneratedPair p;
        p.id = rec.at("id").get<std::string>();
        p.source_id = rec.at("source_id").get<std::string>();
        p.seed = rec.at("seed").get<std::uint64_t>();
        p.mask_spec.kind = mask_kind_from_string(rec.at("mask_kind").get<std::string>());
        const auto flips = rec.at("flips");
        p.mask_spec.flip_horizontal = flips.at(0).get<bool>();
        p.mask_spec.flip_vertical = flips.at(1).get<bool>();
        if (!rec.at("confidence").is_null()) {
            p.confidence = rec.at("confidence").get<float>();
        }
        p.image = read_png_rgb(dir / "images" / (p.id + ".png"));
        p.label = read_png_gray(dir / "labels" / (p.id + ".png"));
        out.push_back(std::move(p));
    }
    return out;
}

DiversityReport diversity_report(const std::vector<GeneratedPair>& pairs) {
    DiversityReport rep;
    std::vector<std::string> sources;
    for (const auto& p : pairs) {
        if (std::find(sources.begin(), sources.end(), p.source_id) == sources.end()) {
            sources.push_back(p.source_id);
        }
    }
    double acc = 0.0;
    for (const auto& sid : sources) {
        std::vector<const Tensor*> imgs;
        for (const auto& p : pairs) {
            if (p.source_id == sid) imgs.push_back(&p.image);
        }
        if (imgs.size() < 2) {
            ++rep.skipped_sources;
            continue;
        }
        double sum = 0.0;
        int count = 0;
        for (std::size_t a = 0; a < imgs.size(); ++a) {
            for (std::size_t b = a + 1; b < imgs.size(); ++b) {
                double sq = 0.0;
                for (std::int64_t i = 0; i < imgs[a]->size(); ++i) {
                    const double d = double((*imgs[a])[i]) - (*imgs[b])[i];
                    sq += d * d;
                }
                sum += std::sqrt(sq);
                ++count;
            }
        }
        DiversityReport::PerSource ps;
        ps.source_id = sid;
        ps.n_samples = static_cast<int>(imgs.size());
        ps.mean_pairwise_l2 = sum / count;
        rep.sources.push_back(ps);
        acc += ps.mean_pairwise_l2;
    }
    if (!rep.sources.empty()) {
        rep.mean_over_sources = acc / static_cast<double>(rep.sources.size());
    }
    return rep;
}

}  // namespace augpaint
