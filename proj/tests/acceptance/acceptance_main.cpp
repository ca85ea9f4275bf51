// Acceptance suite: runs every release criterion end to end and prints one
// PASS/FAIL line per criterion. Heavy stages are checkpointed under the work
// directory (AUGPAINT_ACCEPT_DIR or <tmp>/augpaint_acceptance), so re-runs
// only redo what changed. Criterion 11 is a stochastic trend and is reported
// as soft: it never fails the suite.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <vector>

#include "augpaint/config.hpp"
#include "augpaint/pipeline.hpp"

using namespace augpaint;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail, bool soft = false) {
    if (!pass && !soft) ++g_failures;
    std::printf("%s criterion %2d: %s%s\n", pass ? "PASS" : "FAIL", criterion,
                detail.c_str(), (!pass && soft) ? " [soft: not a gate]" : "");
    std::fflush(stdout);
}

fs::path work_dir() {
    if (const char* env = std::getenv("AUGPAINT_ACCEPT_DIR")) return fs::path(env);
    return fs::temp_directory_path() / "augpaint_acceptance";
}

// desk-scale experiment shared by criteria 9-11
ExperimentConfig desk_config(const fs::path& out, Method method) {
    ExperimentConfig cfg = default_config(Preset::desk);
    cfg.method = method;
    cfg.labeled_cases = 2;
    cfg.repeats = 3;
    cfg.seeds = {1, 2, 3};
    cfg.output_dir = out.string();
    return cfg;
}

// small world for the structural criteria (1, 8): real phantoms, a briefly
// trained AE and unconditional LDM so the predicted noise is non-trivial
struct TinyWorld {
    std::vector<LabeledSample> samples;
    Autoencoder ae;
    DiffusionModel ldm;
    NoiseSchedule sched;
};

TinyWorld make_tiny_world() {
    TinyWorld w;
    PhantomConfig pc;
    pc.n_cases = 4;
    pc.slices_per_case = 6;
    pc.image_size = 64;
    pc.seed = 11;
    w.samples = synth_phantoms(pc);

    AutoencoderConfig acfg;
    acfg.base_width = 8;
    acfg.init_seed = 21;
    AeTrainConfig atr;
    atr.epochs = 3;
    atr.batch_size = 4;
    atr.lr = 1e-3f;
    w.ae = train_autoencoder(w.samples, acfg, atr);

    w.sched = make_schedule(1000, ScheduleKind::linear, 1e-4, 2e-2);
    DiffusionConfig dcfg;
    dcfg.widths = {16, 16, 24, 32};
    dcfg.temb_dim = 32;
    dcfg.init_seed = 31;
    std::vector<LatentGrid> latents;
    for (const auto& s : w.samples) latents.push_back(w.ae.encode(s.image));
    LdmTrainConfig ltr;
    ltr.epochs = 10;
    ltr.batch_size = 8;
    ltr.lr = 1e-3f;
    w.ldm = train_ldm(latents, dcfg, w.sched, ltr);
    return w;
}

void criterion_1_known_region(TinyWorld& w) {
    InpaintConfig cfg;
    cfg.steps = 50;
    cfg.eta = 1.0;
    cfg.samples_per_pair = 1;
    cfg.seed = 77;
    SampleInstrumentation instr;
    instr.check_known_region = true;
    int pairs_run = 0;
    for (const auto& s : w.samples) {
        if (pairs_run >= 20) break;
        Rng rng(derive_stream_seed(cfg.seed, s.id, 0));
        (void)augpaint_sample(s.image, s.label, w.ae, w.ldm, w.sched, cfg, rng, &instr);
        ++pairs_run;
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "known-region preservation: %d pairs, %d steps, %lld masked entries "
                  "checked, %lld mismatches (exact)",
                  pairs_run, instr.steps_visited,
                  static_cast<long long>(instr.known_region_checked),
                  static_cast<long long>(instr.known_region_mismatches));
    report(1, pairs_run == 20 && instr.known_region_checked > 0 &&
                  instr.known_region_mismatches == 0,
           buf);
}

void criterion_2_inversion() {
    auto sched = make_schedule(1000, ScheduleKind::linear, 1e-4, 2e-2);
    Rng rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> z0(48), eps(48);
        for (auto& v : z0) v = rng.normal();
        for (auto& v : eps) v = rng.normal();
        const int t = static_cast<int>(rng.uniform_int(1, 1000));
        auto zt = q_sample_f64(z0, t, eps, sched);
        auto x0 = ddim_pred_x0_f64(zt, eps, sched.alpha_bar[std::size_t(t)]);
        for (std::size_t i = 0; i < x0.size(); ++i) {
            worst = std::max(worst, std::fabs(x0[i] - z0[i]));
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "ddim inversion oracle: max |x0_rec - z0| = %.3e (tol 1e-5)", worst);
    report(2, worst < 1e-5, buf);
}

void criterion_3_tau() {
    auto sched = make_schedule(1000, ScheduleKind::linear, 1e-4, 2e-2);
    double worst = 0.0;
    auto check_pair = [&](int t, int tp) {
        const double got = ddim_tau(sched, t, tp, 1.0);
        // independent algebraic route: tau^2 = (1-P)(P-A) / (P(1-A))
        const double A = sched.alpha_bar[std::size_t(t)];
        const double P = sched.alpha_bar[std::size_t(tp)];
        const double ref = std::sqrt((1.0 - P) * (P - A) / (P * (1.0 - A)));
        if (ref > 0.0) worst = std::max(worst, std::fabs(got - ref) / ref);
    };
    for (int t = 2; t <= 1000; ++t) check_pair(t, t - 1);
    const auto ts = ddim_timesteps(1000, 50);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) check_pair(ts[i], ts[i + 1]);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "tau closed form vs re-derivation: max rel err %.3e",
                  worst);
    report(3, worst <= 1e-12, buf);
}

void criterion_4_schedule() {
    auto sched = make_schedule(1000, ScheduleKind::linear, 1e-4, 2e-2);
    bool monotone = true;
    for (int t = 1; t <= 1000; ++t) {
        monotone = monotone &&
                   sched.alpha_bar[std::size_t(t)] < sched.alpha_bar[std::size_t(t) - 1] &&
                   sched.alpha_bar[std::size_t(t)] > 0.0 &&
                   sched.alpha_bar[std::size_t(t)] <= 1.0;
    }
    long double prod = 1.0L;
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        prod *= (1.0L - static_cast<long double>(sched.beta[std::size_t(t)]));
        worst = std::max(
            worst, std::fabs(static_cast<double>(prod) - sched.alpha_bar[std::size_t(t) + 1]) /
                       sched.alpha_bar[std::size_t(t) + 1]);
    }
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "schedule invariants: monotone=%d, product identity rel err %.3e, "
                  "abar_T=%.3e (< 0.05)",
                  monotone ? 1 : 0, worst, sched.alpha_bar[1000]);
    report(4, monotone && worst <= 1e-12 && sched.alpha_bar[1000] < 0.05, buf);
}

void criterion_5_masks() {
    Rng rng(505);
    bool boxes_ok = true, coverage_ok = true, resize_ok = true;
    int labels_checked = 0;
    while (labels_checked < 500) {
        const int h = static_cast<int>(rng.uniform_int(4, 16));
        const int w = static_cast<int>(rng.uniform_int(4, 16));
        GridU8 label(h, w, 0);
        for (auto& v : label.v) {
            if (rng.bernoulli(0.25)) v = static_cast<std::uint8_t>(rng.uniform_int(1, 3));
        }
        if (label.count_nonzero() == 0) continue;
        ++labels_checked;
        const int padding = static_cast<int>(rng.uniform_int(0, 2));
        auto mask = get_box_mask(label, padding);
        // brute-force per-class min/max rectangles
        GridU8 ref(h, w, 0);
        for (int c = 1; c <= 3; ++c) {
            int rmin = h, rmax = -1, cmin = w, cmax = -1;
            for (int r = 0; r < h; ++r) {
                for (int col = 0; col < w; ++col) {
                    if (label.at(r, col) != c) continue;
                    rmin = std::min(rmin, r);
                    rmax = std::max(rmax, r);
                    cmin = std::min(cmin, col);
                    cmax = std::max(cmax, col);
                }
            }
            if (rmax < 0) continue;
            for (int r = std::max(0, rmin - padding); r <= std::min(h - 1, rmax + padding);
                 ++r) {
                for (int col = std::max(0, cmin - padding);
                     col <= std::min(w - 1, cmax + padding); ++col) {
                    ref.at(r, col) = 1;
                }
            }
        }
        boxes_ok = boxes_ok && (mask.pixel_mask == ref);
        for (std::size_t i = 0; i < label.v.size(); ++i) {
            if (label.v[i] > 0 && !mask.pixel_mask.v[i]) coverage_ok = false;
        }
    }
    for (int trial = 0; trial < 200; ++trial) {
        MaskSpec m;
        m.pixel_mask = GridU8(16, 16, 0);
        for (auto& v : m.pixel_mask.v) v = rng.bernoulli(0.5);
        for (int f : {2, 4}) {
            auto got = resize_mask_to_latent(m, f);
            GridU8 ref(16 / f, 16 / f, 0);
            for (int i = 0; i < ref.h; ++i) {
                for (int j = 0; j < ref.w; ++j) {
                    int count = 0;
                    for (int dy = 0; dy < f; ++dy) {
                        for (int dx = 0; dx < f; ++dx) {
                            count += m.pixel_mask.at(i * f + dy, j * f + dx) != 0;
                        }
                    }
                    ref.at(i, j) = (static_cast<double>(count) / (f * f) >= 0.5) ? 1 : 0;
                }
            }
            resize_ok = resize_ok && (got == ref);
        }
    }
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "mask correctness on %d labels: boxes exact=%d, coverage 100%%=%d, "
                  "latent resize exact=%d",
                  labels_checked, boxes_ok, coverage_ok, resize_ok);
    report(5, boxes_ok && coverage_ok && resize_ok, buf);
}

void criterion_6_metrics() {
    Rng rng(606);
    bool dice_ok = true, hd_ok = true, props_ok = true;
    int compared = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int h = static_cast<int>(rng.uniform_int(2, 9));
        const int w = static_cast<int>(rng.uniform_int(2, 9));
        GridU8 a(h, w, 0), b(h, w, 0);
        for (auto& v : a.v) v = rng.bernoulli(0.3);
        for (auto& v : b.v) v = rng.bernoulli(0.3);

        std::int64_t na = 0, nb = 0, inter = 0;
        for (std::size_t i = 0; i < a.v.size(); ++i) {
            na += a.v[i] != 0;
            nb += b.v[i] != 0;
            inter += (a.v[i] && b.v[i]);
        }
        const double dice_ref =
            (na + nb == 0) ? 100.0 : 100.0 * 2.0 * double(inter) / double(na + nb);
        dice_ok = dice_ok && std::fabs(dice_score(a, b) - dice_ref) < 1e-9;
        props_ok = props_ok && dice_score(a, b) == dice_score(b, a) &&
                   dice_score(a, b) >= 0.0 && dice_score(a, b) <= 100.0;

        auto ours = hd95(a, b);
        auto boundary = [](const GridU8& m) {
            std::vector<std::pair<int, int>> out;
            for (int r = 0; r < m.h; ++r) {
                for (int c = 0; c < m.w; ++c) {
                    if (!m.at(r, c)) continue;
                    bool edge = r == 0 || r == m.h - 1 || c == 0 || c == m.w - 1;
                    if (!edge) {
                        edge = !m.at(r - 1, c) || !m.at(r + 1, c) || !m.at(r, c - 1) ||
                               !m.at(r, c + 1);
                    }
                    if (edge) out.emplace_back(r, c);
                }
            }
            return out;
        };
        if (na == 0 || nb == 0) {
            if (na == 0 && nb == 0) {
                hd_ok = hd_ok && ours.has_value() && *ours == 0.0;
            } else {
                hd_ok = hd_ok && !ours.has_value();
            }
            continue;
        }
        const auto ba = boundary(a), bb = boundary(b);
        std::vector<double> d;
        for (const auto& [r, c] : ba) {
            double best = 1e300;
            for (const auto& [r2, c2] : bb) {
                best = std::min(best, std::hypot(double(r - r2), double(c - c2)));
            }
            d.push_back(best);
        }
        for (const auto& [r, c] : bb) {
            double best = 1e300;
            for (const auto& [r2, c2] : ba) {
                best = std::min(best, std::hypot(double(r - r2), double(c - c2)));
            }
            d.push_back(best);
        }
        std::sort(d.begin(), d.end());
        const double pos = 0.95 * (double(d.size()) - 1.0);
        const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
        const double ref =
            lo + 1 >= d.size() ? d.back() : d[lo] + (pos - lo) * (d[lo + 1] - d[lo]);
        hd_ok = hd_ok && ours.has_value() && std::fabs(*ours - ref) < 1e-9;
        ++compared;
    }
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "metric oracles on 200 mask pairs (%d with defined hd95): dice=%d, "
                  "hd95=%d, symmetry/range=%d",
                  compared, dice_ok, hd_ok, props_ok);
    report(6, dice_ok && hd_ok && props_ok, buf);
}

void criterion_7_filter() {
    Rng rng(707);
    bool ok = true;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(1, 32));
        std::vector<GeneratedPair> pairs;
        for (int i = 0; i < n; ++i) {
            GeneratedPair p;
            p.id = "p" + std::to_string(i);
            p.image = Tensor(Shape{1, 1, 1, 1});
            p.confidence = static_cast<float>(rng.uniform_int(0, 5)) / 5.0f;  // ties
            pairs.push_back(std::move(p));
        }
        auto kept = filter_top_half(pairs);
        ok = ok && kept.size() == (pairs.size() + 1) / 2;
        std::vector<std::pair<float, std::string>> oracle;
        for (const auto& p : pairs) oracle.emplace_back(p.confidence, p.id);
        std::stable_sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t i = 0; i < kept.size() && ok; ++i) {
            ok = kept[i].id == oracle[i].second;
        }
    }
    report(7, ok,
           "filtering matches the stable-sort oracle on 1000 score sets, kept count = "
           "ceil(N/2)");
}

void criterion_8_determinism(TinyWorld& w) {
    InpaintConfig cfg;
    cfg.steps = 50;
    cfg.eta = 0.0;
    cfg.samples_per_pair = 2;
    cfg.seed = 88;
    const auto& src = w.samples[0];
    Rng r1(derive_stream_seed(cfg.seed, src.id, 0));
    Rng r2(derive_stream_seed(cfg.seed, src.id, 0));
    auto p1 = augpaint_sample(src.image, src.label, w.ae, w.ldm, w.sched, cfg, r1);
    auto p2 = augpaint_sample(src.image, src.label, w.ae, w.ldm, w.sched, cfg, r2);
    const bool bitwise = Tensor::bitwise_equal(p1.image, p2.image) && p1.label == p2.label;

    std::vector<LabeledSample> fwd(w.samples.begin(), w.samples.begin() + 4);
    std::vector<LabeledSample> rev(fwd.rbegin(), fwd.rend());
    cfg.eta = 1.0;
    auto pa = generate_batch(fwd, w.ae, w.ldm, w.sched, cfg);
    auto pb = generate_batch(rev, w.ae, w.ldm, w.sched, cfg);
    bool invariant = pa.size() == pb.size();
    for (const auto& p : pa) {
        const auto it = std::find_if(pb.begin(), pb.end(),
                                     [&](const GeneratedPair& q) { return q.id == p.id; });
        invariant = invariant && it != pb.end() && Tensor::bitwise_equal(p.image, it->image);
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "determinism: eta=0 resample bitwise=%d, batch order-invariance=%d",
                  bitwise, invariant);
    report(8, bitwise && invariant, buf);
}

void criteria_9_10_e2e(const fs::path& wd) {
    ExperimentConfig base = desk_config(wd / "e2e_baseline", Method::baseline);
    RunReport base_rep = run_pipeline(base);

    ExperimentConfig aug = desk_config(wd / "e2e_augpaint", Method::augpaint);
    seed_stage_cache(base.output_dir, aug.output_dir);
    RunReport aug_rep = run_pipeline(aug);

    const double gap = aug_rep.mean_dice - base_rep.mean_dice;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "desk e2e over %d repeats: augpaint %.2f +/- %.2f vs baseline %.2f +/- "
                  "%.2f Dice, gap %+.2f (need >= +2)",
                  aug_rep.completed_repeats, aug_rep.mean_dice, aug_rep.std_dice,
                  base_rep.mean_dice, base_rep.std_dice, gap);
    report(9,
           base_rep.completed_repeats == 3 && aug_rep.completed_repeats == 3 && gap >= 2.0,
           buf);

    // criterion 10: identical setup with label-shape masks; the box arm is
    // the criterion-9 augpaint run
    ExperimentConfig label = desk_config(wd / "e2e_label_mask", Method::augpaint);
    label.inpaint.mask_kind = MaskKind::label_shape;
    seed_stage_cache(aug.output_dir, label.output_dir);
    RunReport label_rep = run_pipeline(label);
    std::snprintf(buf, sizeof(buf),
                  "mask-type ablation: box %.2f vs label-shape %.2f mean Dice (box must "
                  "be >= label)",
                  aug_rep.mean_dice, label_rep.mean_dice);
    report(10,
           label_rep.completed_repeats == 3 && aug_rep.mean_dice >= label_rep.mean_dice,
           buf);
}

void criterion_11_diversity(const fs::path& wd) {
    ExperimentConfig cfg = desk_config(wd / "e2e_augpaint", Method::augpaint);
    DiversityStudyOptions opts;
    opts.min_mask_area_frac = 0.6;
    opts.n_sources = 8;
    opts.samples_per_source = 4;
    opts.ldm_epochs = 150;  // overfit regime on the labeled latents only
    DiversityStudyResult res = diversity_study(cfg, opts);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "large-mask (>=60%%) diversity over %d repeats: unconditional L2 %.3f "
                  "vs conditional %.3f (trend: uncond >= cond)",
                  res.repeats, res.uncond_mean_l2, res.cond_mean_l2);
    report(11, res.repeats == 3 && res.uncond_mean_l2 >= res.cond_mean_l2, buf,
           /*soft=*/true);
}

void criterion_12_overfit() {
    // LDM memorization oracle: 8 fixed (z0, t, eps) triples, full-batch.
    // (Resampling eps every step has an irreducible loss floor, so the
    // overfit oracle memorizes a fixed set.)
    auto sched = make_schedule(1000, ScheduleKind::linear, 1e-4, 2e-2);
    Rng rng(1212);
    const int n = 8;
    std::vector<int> ts(static_cast<std::size_t>(n));
    Tensor input(Shape{n, 3, 16, 16});
    Tensor target(Shape{n, 3, 16, 16});
    for (int i = 0; i < n; ++i) {
        LatentGrid z0;
        z0.values = Tensor(Shape{1, 3, 16, 16});
        rng.fill_normal(z0.values);
        Tensor eps(z0.values.shape());
        rng.fill_normal(eps);
        ts[std::size_t(i)] = static_cast<int>(rng.uniform_int(1, 1000));
        auto zt = q_sample(z0, ts[std::size_t(i)], eps, sched);
        std::copy_n(zt.values.data(), zt.values.size(),
                    input.data() + std::int64_t(i) * zt.values.size());
        std::copy_n(eps.data(), eps.size(), target.data() + std::int64_t(i) * eps.size());
    }
    nn::UNetConfig ucfg;
    ucfg.in_channels = 3;
    ucfg.out_channels = 3;
    ucfg.widths = {16, 24, 32, 48};
    ucfg.temb_dim = 32;
    ucfg.init_seed = 5;
    nn::UNet unet(ucfg);
    nn::Adam opt(unet.params().nodes(), 2e-3f);
    float ldm_loss = 1e9f;
    for (int step = 0; step < 2000; ++step) {
        auto loss = nn::mse_loss(unet.forward(nn::make_const(input), &ts), target);
        ldm_loss = loss->value[0];
        opt.zero_grad();
        nn::backward(loss);
        opt.step();
    }

    // seg overfit oracle: 4 phantom samples, 500 full-batch steps
    PhantomConfig pc;
    pc.seed = 3;
    pc.n_cases = 2;
    pc.slices_per_case = 2;
    auto samples = synth_phantoms(pc);
    SegConfig scfg;
    scfg.num_classes = pc.n_classes;
    scfg.base_width = 16;
    scfg.epochs = 500;  // batch = dataset -> one step per epoch
    scfg.batch_size = 4;
    scfg.lr = 1e-3f;
    scfg.seed = 9;
    scfg.init_seed = 9;
    SegModel seg = train_seg(to_train_pairs(samples), scfg);
    const SegMetrics m = evaluate(seg, samples);

    char buf[240];
    std::snprintf(buf, sizeof(buf),
                  "overfit oracles: ldm loss %.4f on 8 fixed latents after 2000 steps "
                  "(< 0.05), seg train Dice %.2f on 4 samples after 500 steps (>= 95)",
                  ldm_loss, m.mean_dice);
    report(12, ldm_loss < 0.05f && m.mean_dice >= 95.0, buf);
}

}  // namespace

int main() {
    const fs::path wd = work_dir();
    fs::create_directories(wd);
    std::printf("acceptance work dir: %s\n", wd.string().c_str());

    try {
        criterion_2_inversion();
        criterion_3_tau();
        criterion_4_schedule();
        criterion_5_masks();
        criterion_6_metrics();
        criterion_7_filter();

        TinyWorld w = make_tiny_world();
        criterion_1_known_region(w);
        criterion_8_determinism(w);

        criterion_12_overfit();

        criteria_9_10_e2e(wd);
        criterion_11_diversity(wd);
    } catch (const std::exception& e) {
        std::printf("FAIL acceptance suite aborted: %s\n", e.what());
        return 2;
    }

    std::printf("%s: %d hard criterion failure(s)\n",
                g_failures == 0 ? "SUCCESS" : "FAILURE", g_failures);
    return g_failures == 0 ? 0 : 1;
}
