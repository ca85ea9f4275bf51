#pragma once

#include <filesystem>
#include <vector>

#include "augpaint/generated_pair.hpp"
#include "augpaint/segmentation.hpp"

namespace augpaint {

enum class FilterMetric { prob, dice };

const char* to_string(FilterMetric m);
FilterMetric filter_metric_from_string(const std::string& s);

struct FilterConfig {
    FilterMetric metric = FilterMetric::prob;
    SegConfig seg;  // baseline scorer training config
};

// Mean predicted probability of the true class over the pair's foreground
// pixels (or foreground Dice of the scorer's prediction against the pair
// label, with FilterMetric::dice). Range [0,1].
float confidence_score(const SegBackbone& model, const GeneratedPair& pair,
                       FilterMetric metric = FilterMetric::prob);

// Keeps the ceil(N/2) highest-confidence pairs; ties broken by id ascending;
// output ordered by (confidence desc, id asc). All pairs must be scored.
std::vector<GeneratedPair> filter_top_half(const std::vector<GeneratedPair>& pairs);

struct FilterReport {
    std::vector<std::pair<std::string, float>> kept;       // (id, confidence)
    std::vector<std::pair<std::string, float>> discarded;  // (id, confidence)

    void write_json(const std::filesystem::path& path) const;
};

// Two-step filter: train the baseline segmenter on the labeled set, score
// every generated pair, keep the top half. A pre-trained baseline can be
// supplied to skip the training step.
std::vector<GeneratedPair> filter_pipeline(const std::vector<LabeledSample>& labeled,
                                           std::vector<GeneratedPair> pairs,
                                           const FilterConfig& cfg,
                                           const SegBackbone* baseline = nullptr,
                                           FilterReport* report = nullptr);

}  // namespace augpaint
