#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "augpaint/datasets.hpp"
#include "augpaint/filtering.hpp"
#include "test_util.hpp"

using namespace augpaint;

namespace {

// scorer with a fixed per-pixel probability map
class FixedProbBackbone : public SegBackbone {
public:
    FixedProbBackbone(Tensor probs) : probs_(std::move(probs)) {}
    Tensor predict_probs(const Tensor&) const override { return probs_; }
    int num_classes() const override { return probs_.shape().c; }

private:
    Tensor probs_;
};

GeneratedPair scored_pair(const std::string& id, float conf) {
    GeneratedPair p;
    p.id = id;
    p.source_id = "s";
    p.image = Tensor(Shape{1, 3, 4, 4});
    p.label = GridU8(4, 4, 0);
    p.label.at(0, 0) = 1;
    p.confidence = conf;
    return p;
}

}  // namespace

TEST_SUITE("filtering") {

TEST_CASE("confidence_score: perfect, uniform, and scalar-loop oracle") {
    GeneratedPair pair;
    pair.id = "p";
    pair.image = Tensor(Shape{1, 3, 4, 4});
    pair.label = GridU8(4, 4, 0);
    pair.label.at(1, 1) = 1;
    pair.label.at(2, 2) = 2;

    // oracle: probability 1 on the true class everywhere
    Tensor perfect(Shape{1, 3, 4, 4}, 0.0f);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) perfect.at(0, pair.label.at(y, x), y, x) = 1.0f;
    }
    CHECK(confidence_score(FixedProbBackbone(perfect), pair) == doctest::Approx(1.0));

    // uniform over K classes -> 1/K
    Tensor uniform(Shape{1, 3, 4, 4}, 1.0f / 3.0f);
    CHECK(confidence_score(FixedProbBackbone(uniform), pair) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    // random map vs scalar loop
    Rng rng(5);
    Tensor random(Shape{1, 3, 4, 4});
    for (std::int64_t i = 0; i < random.size(); ++i) {
        random[i] = static_cast<float>(rng.uniform());
    }
    const float got = confidence_score(FixedProbBackbone(random), pair);
    double expect = 0.0;
    int count = 0;
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const int lab = pair.label.at(y, x);
            if (lab == 0) continue;
            expect += random.at(0, lab, y, x);
            ++count;
        }
    }
    CHECK(got == doctest::Approx(expect / count).epsilon(1e-6));

    // no-foreground pair is a contract violation
    GeneratedPair empty = pair;
    empty.label = GridU8(4, 4, 0);
    CHECK_THROWS_AS(confidence_score(FixedProbBackbone(uniform), empty), NoForegroundError);
}

TEST_CASE("filter_top_half: sort example and ceiling rule") {
    std::vector<GeneratedPair> pairs{scored_pair("a", 0.9f), scored_pair("b", 0.5f),
                                     scored_pair("c", 0.7f), scored_pair("d", 0.1f)};
    auto kept = filter_top_half(pairs);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].id == "a");
    CHECK(kept[1].id == "c");

    pairs.push_back(scored_pair("e", 0.3f));
    kept = filter_top_half(pairs);
    CHECK(kept.size() == 3);  // ceil(5/2)

    pairs[0].confidence = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(filter_top_half(pairs), ConfigError);
}

TEST_CASE("filter_top_half equals a stable-sort oracle on 1000 random score sets") {
    Rng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(1, 24));
        std::vector<GeneratedPair> pairs;
        for (int i = 0; i < n; ++i) {
            // coarse grid of scores forces plenty of ties
            const float score = static_cast<float>(rng.uniform_int(0, 4)) / 4.0f;
            pairs.push_back(scored_pair("id" + std::to_string(i), score));
        }
        auto kept = filter_top_half(pairs);
        CHECK(kept.size() == (pairs.size() + 1) / 2);

        // oracle: independent stable sort on (confidence desc, id asc)
        std::vector<std::pair<float, std::string>> oracle;
        for (const auto& p : pairs) oracle.emplace_back(p.confidence, p.id);
        std::stable_sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t i = 0; i < kept.size(); ++i) {
            CHECK(kept[i].id == oracle[i].second);
        }
        // kept minimum >= discarded maximum
        if (kept.size() < pairs.size()) {
            CHECK(kept.back().confidence >= oracle[kept.size()].first);
        }
    }
}

TEST_CASE("scoring is invariant to pair order") {
    PhantomConfig pc;
    pc.n_cases = 3;
    pc.slices_per_case = 2;
    pc.image_size = 16;
    pc.radius_min = 2.0;
    pc.radius_max = 5.0;
    pc.seed = 31;
    auto samples = synth_phantoms(pc);

    Tensor probs(Shape{1, 3, 16, 16}, 1.0f / 3.0f);
    FixedProbBackbone scorer(probs);
    std::vector<GeneratedPair> pairs;
    for (const auto& s : samples) {
        GeneratedPair p;
        p.id = s.id;
        p.source_id = s.id;
        p.image = s.image;
        p.label = s.label;
        pairs.push_back(std::move(p));
    }
    std::vector<GeneratedPair> reversed(pairs.rbegin(), pairs.rend());
    for (auto& p : pairs) p.confidence = confidence_score(scorer, p);
    for (auto& p : reversed) p.confidence = confidence_score(scorer, p);
    for (const auto& p : pairs) {
        const auto it = std::find_if(reversed.begin(), reversed.end(),
                                     [&](const GeneratedPair& q) { return q.id == p.id; });
        CHECK(it->confidence == p.confidence);
    }
}

TEST_CASE("filter_pipeline: keeps half, trains scorer, writes report") {
    TempDir tmp("filter");
    PhantomConfig pc;
    pc.n_cases = 2;
    pc.slices_per_case = 3;
    pc.image_size = 16;
    pc.radius_min = 2.0;
    pc.radius_max = 5.0;
    pc.seed = 13;
    auto samples = synth_phantoms(pc);

    std::vector<GeneratedPair> pairs;
    for (int k = 0; k < 2; ++k) {
        for (const auto& s : samples) {
            GeneratedPair p;
            p.id = s.id + "_g" + std::to_string(k);
            p.source_id = s.id;
            p.image = s.image;
            p.label = s.label;
            pairs.push_back(std::move(p));
        }
    }
    FilterConfig fc;
    fc.seg.num_classes = pc.n_classes;
    fc.seg.base_width = 8;
    fc.seg.epochs = 2;
    fc.seg.batch_size = 2;

    FilterReport rep;
    auto kept = filter_pipeline(samples, pairs, fc, nullptr, &rep);
    CHECK(kept.size() == (pairs.size() + 1) / 2);
    CHECK(rep.kept.size() + rep.discarded.size() == pairs.size());
    for (const auto& p : kept) {
        CHECK(p.confidence >= 0.0f);
        CHECK(p.confidence <= 1.0f);
    }
    rep.write_json(tmp.path / "filter_report.json");
    CHECK(std::filesystem::exists(tmp.path / "filter_report.json"));

    // zero pairs in -> zero out, training still succeeds
    FilterReport rep2;
    auto none = filter_pipeline(samples, {}, fc, nullptr, &rep2);
    CHECK(none.empty());
}

}  // TEST_SUITE
