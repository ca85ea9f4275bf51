#include <doctest.h>

#include <cmath>

#include "augpaint/diffusion.hpp"

using namespace augpaint;

TEST_SUITE("diffusion") {

TEST_CASE("make_schedule: single step and parameter validation") {
    auto s = make_schedule(1, ScheduleKind::linear, 0.3, 0.3);
    REQUIRE(s.alpha_bar.size() == 2);
    CHECK(s.alpha_bar[0] == 1.0);
    CHECK(s.alpha_bar[1] == doctest::Approx(0.7).epsilon(1e-12));

    CHECK_THROWS_AS(make_schedule(1000, ScheduleKind::linear, 0.02, 1e-4), ConfigError);
    CHECK_THROWS_AS(make_schedule(0, ScheduleKind::linear, 1e-4, 0.02), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, ScheduleKind::linear, 0.0, 0.02), ConfigError);
}

TEST_CASE("default schedule: monotone, product identity, terminal signal") {
    auto s = make_schedule(1000, ScheduleKind::linear, 1e-4, 2e-2);
    REQUIRE(s.alpha_bar.size() == 1001);
    // strictly decreasing, in (0,1]
    for (int t = 1; t <= 1000; ++t) {
        CHECK(s.alpha_bar[std::size_t(t)] < s.alpha_bar[std::size_t(t) - 1]);
        CHECK(s.alpha_bar[std::size_t(t)] > 0.0);
    }
    CHECK(s.alpha_bar[1000] < 0.05);
    // product identity against an independent long-double accumulation
    long double prod = 1.0L;
    for (int t = 0; t < 1000; ++t) {
        prod *= (1.0L - static_cast<long double>(s.beta[std::size_t(t)]));
        const double rel = std::fabs(static_cast<double>(prod) - s.alpha_bar[std::size_t(t) + 1]) /
                           s.alpha_bar[std::size_t(t) + 1];
        CHECK(rel < 1e-12);
    }
}

TEST_CASE("q_sample: zero-noise limit and closed-form substitution") {
    // schedule with a tiny first beta: alpha_bar[1] ~= 1
    auto s = make_schedule(10, ScheduleKind::linear, 1e-12, 1e-12);
    LatentGrid z0;
    z0.values = Tensor(Shape{1, 2, 4, 4}, 1.0f);
    Tensor eps(Shape{1, 2, 4, 4}, 1.0f);
    auto zt = q_sample(z0, 1, eps, s);
    CHECK(Tensor::max_abs_diff(zt.values, z0.values) < 1e-6f);

    // abar = 0.64 -> z_t = 0.8 * 1 + 0.6 * 1 = 1.4
    NoiseSchedule manual;
    manual.T = 1;
    manual.beta = {0.36};
    manual.alpha_bar = {1.0, 0.64};
    auto zt2 = q_sample(z0, 1, eps, manual);
    for (std::int64_t i = 0; i < zt2.values.size(); ++i) {
        CHECK(zt2.values[i] == doctest::Approx(1.4f).epsilon(1e-6));
    }

    // paper-literal A/B variant uses (1 - abar) as the noise coefficient
    auto zt3 = q_sample(z0, 1, eps, manual, QSampleVariant::paper_literal);
    for (std::int64_t i = 0; i < zt3.values.size(); ++i) {
        CHECK(zt3.values[i] == doctest::Approx(0.8f + 0.36f).epsilon(1e-6));
    }

    CHECK_THROWS_AS(q_sample(z0, 0, eps, manual), ConfigError);
    CHECK_THROWS_AS(q_sample(z0, 2, eps, manual), ConfigError);
}

TEST_CASE("q_sample Monte-Carlo variance oracle") {
    auto s = make_schedule(1000, ScheduleKind::linear, 1e-4, 2e-2);
    const int t = 600;
    const double expected_var = 1.0 - s.alpha_bar[std::size_t(t)];
    LatentGrid z0;
    z0.values = Tensor(Shape{1, 1, 320, 320});  // ~1e5 draws, z0 = 0
    Tensor eps(z0.values.shape());
    Rng rng(404);
    rng.fill_normal(eps);
    auto zt = q_sample(z0, t, eps, s);
    const std::int64_t n = zt.values.size();
    double mean = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mean += zt.values[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        var += (zt.values[i] - mean) * (zt.values[i] - mean);
    }
    var /= static_cast<double>(n - 1);
    // sd of the sample variance ~ sigma^2 sqrt(2/(n-1)); allow 3 sd
    const double tol = 3.0 * expected_var * std::sqrt(2.0 / (n - 1));
    CHECK(std::fabs(var - expected_var) < tol);
}

TEST_CASE("q_sample linearity property") {
    auto s = make_schedule(100, ScheduleKind::linear, 1e-3, 2e-2);
    Rng rng(11);
    LatentGrid a, b;
    a.values = Tensor(Shape{1, 3, 4, 4});
    b.values = Tensor(Shape{1, 3, 4, 4});
    rng.fill_normal(a.values);
    rng.fill_normal(b.values);
    Tensor eps(Shape{1, 3, 4, 4});
    rng.fill_normal(eps);
    Tensor zero(Shape{1, 3, 4, 4}, 0.0f);

    const int t = 40;
    LatentGrid sum = a;
    for (std::int64_t i = 0; i < sum.values.size(); ++i) {
        sum.values[i] = 2.0f * a.values[i] + 3.0f * b.values[i];
    }
    auto lhs = q_sample(sum, t, eps, s);
    auto qa = q_sample(a, t, zero, s);
    auto qb = q_sample(b, t, zero, s);
    const float noise_coef = static_cast<float>(std::sqrt(1.0 - s.alpha_bar[std::size_t(t)]));
    for (std::int64_t i = 0; i < lhs.values.size(); ++i) {
        const float rhs = 2.0f * qa.values[i] + 3.0f * qb.values[i] + noise_coef * eps[i];
        CHECK(std::fabs(lhs.values[i] - rhs) < 1e-5f);
    }
}

TEST_CASE("random_box_mask: boundary, area, determinism") {
    Rng rng(5);
    auto full = random_box_mask(16, 16, rng, 1.0, 1.0);
    CHECK(full.count_nonzero() == 256);

    Rng rng2(6);
    auto quarter = random_box_mask(16, 16, rng2, 0.25, 0.25);
    // rectangle of ~64 cells, up to rounding of its sides
    CHECK(std::llabs(quarter.count_nonzero() - 64) <= 16);

    Rng a(9), b(9);
    CHECK(random_box_mask(12, 10, a, 0.1, 0.6) == random_box_mask(12, 10, b, 0.1, 0.6));
}

TEST_CASE("predict_eps: contract and determinism") {
    auto sched = make_schedule(50, ScheduleKind::linear, 1e-3, 2e-2);
    DiffusionConfig cfg;
    cfg.latent_channels = 3;
    cfg.widths = {8, 8, 16, 16};
    cfg.temb_dim = 16;
    cfg.conditional = false;
    cfg.init_seed = 3;
    DiffusionModel uncond(cfg, sched);

    LatentGrid z;
    z.values = Tensor(Shape{1, 3, 16, 16});
    Rng rng(77);
    rng.fill_normal(z.values);

    Tensor e1 = predict_eps(uncond, z, 10);
    Tensor e2 = predict_eps(uncond, z, 10);
    CHECK(e1.shape() == z.values.shape());
    CHECK(Tensor::bitwise_equal(e1, e2));
    CHECK_THROWS_AS(predict_eps(uncond, z, 10, &z), ConfigError);

    cfg.conditional = true;
    DiffusionModel cond(cfg, sched);
    CHECK_THROWS_AS(predict_eps(cond, z, 10), ConfigError);
    Tensor e3 = predict_eps(cond, z, 10, &z);
    CHECK(e3.shape() == z.values.shape());
}

TEST_CASE("train_ldm: input channel contract and a short run") {
    auto sched = make_schedule(50, ScheduleKind::linear, 1e-3, 2e-2);
    Rng rng(15);
    std::vector<LatentGrid> latents;
    for (int i = 0; i < 4; ++i) {
        LatentGrid z;
        z.values = Tensor(Shape{1, 3, 8, 8});
        rng.fill_normal(z.values);
        latents.push_back(std::move(z));
    }
    DiffusionConfig cfg;
    cfg.latent_channels = 3;
    cfg.widths = {8, 8, 8, 8};
    cfg.temb_dim = 16;
    cfg.conditional = false;
    LdmTrainConfig tr;
    tr.epochs = 3;
    tr.batch_size = 2;
    tr.lr = 1e-3f;
    TrainStats stats;
    DiffusionModel m = train_ldm(latents, cfg, sched, tr, nullptr, nullptr, &stats);
    CHECK(m.unet().config().in_channels == 3);
    CHECK(stats.steps == 6);
    CHECK(std::isfinite(stats.final_loss));

    cfg.conditional = true;
    CHECK_THROWS_AS(train_ldm(latents, cfg, sched, tr), ConfigError);
}

}  // TEST_SUITE
