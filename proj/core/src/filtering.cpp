#include "augpaint/filtering.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "augpaint/checkpoint.hpp"
#include "augpaint/errors.hpp"

namespace augpaint {

const char* to_string(FilterMetric m) {
    return m == FilterMetric::prob ? "prob" : "dice";
}

FilterMetric filter_metric_from_string(const std::string& s) {
    if (s == "prob") return FilterMetric::prob;
    if (s == "dice") return FilterMetric::dice;
    throw ConfigError("unknown filter metric: " + s);
}

float confidence_score(const SegBackbone& model, const GeneratedPair& pair,
                       FilterMetric metric) {
    if (pair.label.count_nonzero() == 0) {
        throw NoForegroundError("confidence_score: pair '" + pair.id +
                                "' has no foreground (should have been excluded)");
    }
    const int K = model.num_classes();
    if (pair.label.max_value() >= K) {
        throw ConfigError("confidence_score: pair label exceeds model classes");
    }
    const Tensor probs = model.predict_probs(pair.image);
    const Shape s = probs.shape();
    if (s.h != pair.label.h || s.w != pair.label.w) {
        throw ShapeError("confidence_score: prediction dims do not match label");
    }
    const std::int64_t hw = std::int64_t(s.h) * s.w;

    if (metric == FilterMetric::prob) {
        double acc = 0.0;
        std::int64_t count = 0;
        for (std::int64_t i = 0; i < hw; ++i) {
            const int lab = pair.label.v[static_cast<std::size_t>(i)];
            if (lab == 0) continue;
            acc += probs[std::int64_t(lab) * hw + i];
            ++count;
        }
        return static_cast<float>(acc / count);
    }

    // dice variant: foreground Dice between the scorer's argmax and the label
    GridU8 pred(s.h, s.w, 0), gt(s.h, s.w, 0);
    for (std::int64_t i = 0; i < hw; ++i) {
        int best = 0;
        float best_p = probs[i];
        for (int c = 1; c < K; ++c) {
            const float p = probs[std::int64_t(c) * hw + i];
            if (p > best_p) {
                best_p = p;
                best = c;
            }
        }
        pred.v[static_cast<std::size_t>(i)] = best > 0;
        gt.v[static_cast<std::size_t>(i)] = pair.label.v[static_cast<std::size_t>(i)] > 0;
    }
    return static_cast<float>(dice_score(pred, gt) / 100.0);
}

std::vector<GeneratedPair> filter_top_half(const std::vector<GeneratedPair>& pairs) {
    if (pairs.empty()) return {};
    for (const auto& p : pairs) {
        if (!p.scored()) {
            throw ConfigError("filter_top_half: pair '" + p.id + "' is unscored");
        }
    }
    std::vector<const GeneratedPair*> sorted;
    sorted.reserve(pairs.size());
    for (const auto& p : pairs) sorted.push_back(&p);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const GeneratedPair* a, const GeneratedPair* b) {
                         if (a->confidence != b->confidence) {
                             return a->confidence > b->confidence;
                         }
                         return a->id < b->id;
                     });
    const std::size_t keep = (pairs.size() + 1) / 2;  // ceil(N/2)
    std::vector<GeneratedPair> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(*sorted[i]);
    return out;
}

void FilterReport::write_json(const std::filesystem::path& path) const {
    nlohmann::json j;
    auto dump = [](const std::vector<std::pair<std::string, float>>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [id, score] : v) {
            arr.push_back({{"id", id}, {"confidence", score}});
        }
        return arr;
    };
    j["kept"] = dump(kept);
    j["discarded"] = dump(discarded);
    j["n_kept"] = kept.size();
    j["n_discarded"] = discarded.size();
    write_text_atomic(path, j.dump(2) + "\n");
}

std::vector<GeneratedPair> filter_pipeline(const std::vector<LabeledSample>& labeled,
                                           std::vector<GeneratedPair> pairs,
                                           const FilterConfig& cfg,
                                           const SegBackbone* baseline,
                                           FilterReport* report) {
    if (labeled.empty()) throw ConfigError("filter_pipeline: empty labeled set");

    SegModel trained;
    if (!baseline) {
        trained = train_seg(to_train_pairs(labeled), cfg.seg);
        baseline = &trained;
    }
    for (auto& p : pairs) {
        p.confidence = confidence_score(*baseline, p, cfg.metric);
    }
    std::vector<GeneratedPair> kept = filter_top_half(pairs);
    if (report) {
        report->kept.clear();
        report->discarded.clear();
        for (const auto& p : kept) report->kept.emplace_back(p.id, p.confidence);
        for (const auto& p : pairs) {
            const bool is_kept = std::any_of(kept.begin(), kept.end(),
                                             [&](const GeneratedPair& k) { return k.id == p.id; });
            if (!is_kept) report->discarded.emplace_back(p.id, p.confidence);
        }
    }
    return kept;
}

}  // namespace augpaint
