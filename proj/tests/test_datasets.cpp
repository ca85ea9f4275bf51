#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "augpaint/datasets.hpp"
#include "augpaint/png_io.hpp"
#include "test_util.hpp"

using namespace augpaint;

namespace {

PhantomConfig small_cfg() {
    PhantomConfig cfg;
    cfg.n_cases = 10;
    cfg.slices_per_case = 20;
    cfg.image_size = 64;
    cfg.n_classes = 3;
    cfg.seed = 7;
    return cfg;
}

bool samples_equal(const LabeledSample& a, const LabeledSample& b) {
    return a.id == b.id && a.case_id == b.case_id &&
           Tensor::bitwise_equal(a.image, b.image) && a.label == b.label;
}

}  // namespace

TEST_SUITE("datasets") {

TEST_CASE("synth_phantoms: counts, shapes, determinism") {
    PhantomConfig cfg = small_cfg();
    auto samples = synth_phantoms(cfg);
    CHECK(samples.size() == 200);
    for (const auto& s : samples) {
        CHECK(s.image.shape() == Shape{1, 3, 64, 64});
        CHECK(s.label.h == 64);
        CHECK(s.label.w == 64);
        CHECK(s.label.max_value() < cfg.n_classes);
    }
    auto again = synth_phantoms(cfg);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples_equal(samples[i], again[i]));
    }
    // with presence prob 1, every class is present on every slice
    for (const auto& s : samples) {
        std::set<int> present;
        for (auto v : s.label.v) present.insert(v);
        CHECK(present.count(1) == 1);
        CHECK(present.count(2) == 1);
    }
}

TEST_CASE("synth_phantoms: degenerate radius range rejected") {
    PhantomConfig cfg = small_cfg();
    cfg.radius_min = 0.2;  // would allow zero-area shapes
    CHECK_THROWS_AS(synth_phantoms(cfg), ConfigError);
    cfg = small_cfg();
    cfg.radius_max = 2.0;
    cfg.radius_min = 3.0;  // inverted
    CHECK_THROWS_AS(synth_phantoms(cfg), ConfigError);
    cfg = small_cfg();
    cfg.n_classes = 1;
    CHECK_THROWS_AS(synth_phantoms(cfg), ConfigError);
}

TEST_CASE("split_dataset: case-wise with largest-remainder counts") {
    // 100 cases at 70:15:15 -> exactly 70/15/15
    PhantomConfig cfg = small_cfg();
    cfg.n_cases = 100;
    cfg.slices_per_case = 1;
    auto samples = synth_phantoms(cfg);
    auto split = split_dataset(samples, {0.70, 0.15, 0.15}, 3);
    CHECK(distinct_case_ids(split.unlabeled).size() == 70);
    CHECK(distinct_case_ids(split.val).size() == 15);
    CHECK(distinct_case_ids(split.test).size() == 15);

    // every case appears in exactly one split
    std::set<std::string> seen;
    for (const auto* part : {&split.unlabeled, &split.val, &split.test}) {
        for (const auto& cid : distinct_case_ids(*part)) {
            CHECK(seen.insert(cid).second);
        }
    }
    CHECK(seen.size() == 100);
}

TEST_CASE("split_dataset: 3 cases at equal thirds -> 1/1/1") {
    PhantomConfig cfg = small_cfg();
    cfg.n_cases = 3;
    cfg.slices_per_case = 2;
    auto samples = synth_phantoms(cfg);
    auto split = split_dataset(samples, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 11);
    CHECK(distinct_case_ids(split.unlabeled).size() == 1);
    CHECK(distinct_case_ids(split.val).size() == 1);
    CHECK(distinct_case_ids(split.test).size() == 1);
}

TEST_CASE("split_dataset: largest-remainder hand oracle for 10 cases at 90/5/5") {
    // exact seats (9, 0.5, 0.5); floors (9,0,0); the leftover seat goes to
    // the earlier split among tied remainders -> val
    PhantomConfig cfg = small_cfg();
    cfg.n_cases = 10;
    cfg.slices_per_case = 1;
    auto samples = synth_phantoms(cfg);
    auto split = split_dataset(samples, {0.90, 0.05, 0.05}, 5);
    CHECK(distinct_case_ids(split.unlabeled).size() == 9);
    CHECK(distinct_case_ids(split.val).size() == 1);
    CHECK(distinct_case_ids(split.test).size() == 0);
}

TEST_CASE("split_dataset: slices of one case never straddle splits") {
    auto samples = synth_phantoms(small_cfg());
    auto split = split_dataset(samples, {0.70, 0.15, 0.15}, 9);
    for (const auto& s : samples) {
        int found_in = 0;
        for (const auto* part : {&split.unlabeled, &split.val, &split.test}) {
            for (const auto& cid : distinct_case_ids(*part)) {
                if (cid == s.case_id) {
                    ++found_in;
                    break;
                }
            }
        }
        CHECK(found_in == 1);
    }
    CHECK_THROWS_AS(split_dataset({samples[0], samples[1]}, {0.5, 0.25, 0.25}, 1),
                    ConfigError);
    CHECK_THROWS_AS(split_dataset(samples, {0.5, 0.2, 0.2}, 1), ConfigError);
}

TEST_CASE("sample_labeled_subset: whole cases, hidden flags, determinism") {
    auto samples = synth_phantoms(small_cfg());
    auto split = split_dataset(samples, {0.70, 0.15, 0.15}, 21);
    const auto pool = split.unlabeled;
    auto [sl, su] = sample_labeled_subset(pool, 2, 77);
    CHECK(distinct_case_ids(sl).size() == 2);
    CHECK(sl.size() + su.size() == pool.size());
    for (const auto& s : sl) CHECK(!s.label_hidden);
    for (const auto& s : su) CHECK(s.label_hidden);
    for (const auto& a : sl) {
        CHECK(std::none_of(su.begin(), su.end(),
                           [&](const LabeledSample& b) { return b.id == a.id; }));
    }
    const int all_cases = static_cast<int>(distinct_case_ids(pool).size());
    auto [sl2, su2] = sample_labeled_subset(pool, all_cases, 77);
    CHECK(su2.empty());
    auto [sl3, su3] = sample_labeled_subset(pool, 2, 77);
    REQUIRE(sl3.size() == sl.size());
    for (std::size_t i = 0; i < sl.size(); ++i) CHECK(sl[i].id == sl3[i].id);
    CHECK_THROWS_AS(sample_labeled_subset(pool, 0, 1), ConfigError);
    CHECK_THROWS_AS(sample_labeled_subset(pool, all_cases + 1, 1), ConfigError);
}

TEST_CASE("resize_canonical: dims, identity, constant label") {
    PhantomConfig cfg = small_cfg();
    cfg.n_cases = 1;
    cfg.slices_per_case = 1;
    auto s = synth_phantoms(cfg)[0];

    auto up = resize_canonical(s, 128);
    CHECK(up.image.shape() == Shape{1, 3, 128, 128});
    CHECK(up.label.h == 128);

    auto same = resize_canonical(s, 64);
    CHECK(Tensor::bitwise_equal(same.image, s.image));
    CHECK(same.label == s.label);

    LabeledSample constant = s;
    constant.label = GridU8(64, 64, 2);
    auto resized = resize_canonical(constant, 96);
    for (auto v : resized.label.v) CHECK(v == 2);
}

TEST_CASE("rand_aug: counts, identity set, unscored confidence") {
    auto samples = synth_phantoms(small_cfg());
    std::vector<LabeledSample> labeled(samples.begin(), samples.begin() + 40);

    auto pairs = rand_aug(labeled, 5, 42);
    CHECK(pairs.size() == 200);
    for (const auto& p : pairs) CHECK(!p.scored());

    RandAugOptions identity;
    identity.flips = false;
    identity.rot90 = false;
    identity.brightness_delta = 0.0;
    identity.max_translate_frac = 0.0;
    auto same = rand_aug(labeled, 1, 42, identity);
    REQUIRE(same.size() == labeled.size());
    for (std::size_t i = 0; i < same.size(); ++i) {
        CHECK(Tensor::bitwise_equal(same[i].image, labeled[i].image));
        CHECK(same[i].label == labeled[i].label);
    }
    CHECK_THROWS_AS(rand_aug(labeled, 0, 1), ConfigError);
}

TEST_CASE("rot90 coordinate-map oracle") {
    GridU8 g(6, 8, 0);
    g.at(2, 3) = 1;
    // one quarter turn counter-clockwise: (r, c) -> (W-1-c, r)
    auto r1 = rot90_grid(g, 1);
    CHECK(r1.h == 8);
    CHECK(r1.w == 6);
    CHECK(r1.at(8 - 1 - 3, 2) == 1);
    CHECK(r1.count_nonzero() == 1);
    auto r4 = rot90_grid(rot90_grid(rot90_grid(r1, 1), 1), 1);
    CHECK(r4 == g);
}

TEST_CASE("rand_aug geometric transforms keep image and label aligned") {
    auto samples = synth_phantoms(small_cfg());
    std::vector<LabeledSample> labeled(samples.begin(), samples.begin() + 4);
    RandAugOptions geo;  // flips + rotations only: exact label transport
    geo.brightness_delta = 0.0;
    geo.max_translate_frac = 0.0;
    auto pairs = rand_aug(labeled, 4, 99, geo);
    for (const auto& p : pairs) {
        const auto& src =
            *std::find_if(labeled.begin(), labeled.end(),
                          [&](const LabeledSample& s) { return s.id == p.source_id; });
        CHECK(p.label.count_nonzero() == src.label.count_nonzero());
        // labeled pixels keep their colors: check a foreground pixel's value
        // exists somewhere in the source's foreground (transport, not resample)
        bool found = false;
        for (int y = 0; y < p.label.h && !found; ++y) {
            for (int x = 0; x < p.label.w && !found; ++x) {
                if (p.label.at(y, x) == 1) {
                    const float v = p.image.at(0, 0, y, x);
                    for (int sy = 0; sy < 64 && !found; ++sy) {
                        for (int sx = 0; sx < 64 && !found; ++sx) {
                            if (src.label.at(sy, sx) == 1 &&
                                src.image.at(0, 0, sy, sx) == v) {
                                found = true;
                            }
                        }
                    }
                }
            }
        }
        CHECK(found);
    }
}

TEST_CASE("save/load round trip") {
    TempDir tmp("dataset");
    PhantomConfig cfg = small_cfg();
    cfg.n_cases = 3;
    cfg.slices_per_case = 4;
    auto samples = synth_phantoms(cfg);
    samples[3].label_hidden = true;
    save_dataset(samples, tmp.path);
    auto loaded = load_dataset(tmp.path, cfg.n_classes);
    REQUIRE(loaded.size() == samples.size());
    float max_err = 0.0f;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].id == samples[i].id);
        CHECK(loaded[i].case_id == samples[i].case_id);
        CHECK(loaded[i].label == samples[i].label);  // labels bitwise exact
        CHECK(loaded[i].label_hidden == samples[i].label_hidden);
        max_err = std::max(max_err, Tensor::max_abs_diff(loaded[i].image, samples[i].image));
    }
    CHECK(max_err <= 1.0f / 255.0f);  // 8-bit quantization bound
}

TEST_CASE("load errors: missing manifest, missing file, bad class id") {
    TempDir tmp("dataset_err");
    CHECK_THROWS_AS(load_dataset(tmp.path / "nope"), IoError);

    PhantomConfig cfg = small_cfg();
    cfg.n_cases = 3;
    cfg.slices_per_case = 1;
    auto samples = synth_phantoms(cfg);
    save_dataset(samples, tmp.path);

    std::filesystem::remove(tmp.path / "images" / (samples[1].id + ".png"));
    try {
        load_dataset(tmp.path);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find(samples[1].id) != std::string::npos);
    }

    TempDir tmp2("dataset_err2");
    samples = synth_phantoms(cfg);
    samples[0].label.at(0, 0) = 9;
    save_dataset(samples, tmp2.path);
    try {
        load_dataset(tmp2.path, cfg.n_classes);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find(samples[0].id) != std::string::npos);
    }
}

TEST_CASE("phantom classes carry their fixed colors") {
    PhantomConfig cfg = small_cfg();
    cfg.n_cases = 2;
    cfg.slices_per_case = 3;
    auto samples = synth_phantoms(cfg);
    for (const auto& s : samples) {
        for (int c = 1; c < cfg.n_classes; ++c) {
            double mean_r = 0.0;
            int count = 0;
            for (int y = 0; y < 64; ++y) {
                for (int x = 0; x < 64; ++x) {
                    if (s.label.at(y, x) != c) continue;
                    mean_r += s.image.at(0, 0, y, x);
                    ++count;
                }
            }
            REQUIRE(count > 0);
            mean_r /= count;
            // class 1 is red-dominant, class 2 blue-dominant
            if (c == 1) CHECK(mean_r > 0.6);
            if (c == 2) CHECK(mean_r < 0.55);
        }
    }
}

}  // TEST_SUITE
