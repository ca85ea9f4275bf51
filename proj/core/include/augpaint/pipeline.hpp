#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "augpaint/config.hpp"
#include "augpaint/inpaint.hpp"
#include "augpaint/segmentation.hpp"

namespace augpaint {

enum class PipelineStage { split, ae, ldm, baseline_seg, generate, filter, seg, all };

struct RepeatResult {
    std::uint64_t seed = 0;
    bool completed = false;
    bool partial = false;  // run stopped at a requested stage boundary
    std::string error;
    SegMetrics metrics;           // the configured method's test metrics
    SegMetrics baseline_metrics;  // labeled-only reference (== metrics for baseline)
    DiversityReport diversity;
    int n_generated = 0;
    int n_kept = 0;
    std::vector<std::pair<std::string, double>> stage_seconds;
};

struct RunReport {
    std::string method;
    std::string config_hash;
    std::vector<RepeatResult> repeats;
    int completed_repeats = 0;
    double mean_dice = 0.0;
    double std_dice = 0.0;  // (n-1) denominator
    double mean_hd95 = 0.0;
    double baseline_mean_dice = 0.0;
    double baseline_std_dice = 0.0;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

// Executes the configured method's stage sequence once per repeat, with that
// repeat's seed driving the split, the labeled subset and every training
// stage. Completed stages are checkpointed under output_dir and skipped on
// re-runs when their config hash matches. A failing stage aborts only its
// repeat; the report flags incomplete repeats. stop_after runs each repeat
// only up to the named stage (used by the per-stage CLI subcommands).
RunReport run_pipeline(const ExperimentConfig& cfg,
                       PipelineStage stop_after = PipelineStage::all);

// Copies reusable stage artifacts (dataset, split, AE, LDM, baseline
// segmenter) from one run directory into another; the receiving run's hash
// checks decide whether they are actually valid there.
void seed_stage_cache(const std::filesystem::path& from, const std::filesystem::path& to);

struct SweepPoint {
    double value = 0.0;
    double mean_dice = 0.0;
    double std_dice = 0.0;
};

// One full pipeline run per value of inpaint.samples_per_pair; writes
// sweep_samples.{json,txt,png} under the output dir.
std::vector<SweepPoint> sweep_samples_per_pair(const ExperimentConfig& cfg,
                                               const std::vector<int>& values);

struct CaseSweepPoint {
    int labeled_cases = 0;
    double baseline_mean_dice = 0.0;
    double augpaint_mean_dice = 0.0;
    double gap = 0.0;
};

// Runs baseline and augpaint per labeled-case count; writes the gap curve.
std::vector<CaseSweepPoint> sweep_labeled_cases(const ExperimentConfig& cfg,
                                                const std::vector<int>& values);

struct MaskAblationReport {
    RunReport box;
    RunReport label;
    double box_coverage = 0.0;    // mean mask area fraction over S^l
    double label_coverage = 0.0;
};

MaskAblationReport ablate_mask_type(const ExperimentConfig& cfg);

struct CondCompareReport {
    RunReport uncond;
    RunReport cond;
    double uncond_diversity = 0.0;  // mean intra-source pairwise L2
    double cond_diversity = 0.0;
};

CondCompareReport compare_cond_uncond(const ExperimentConfig& cfg);

struct DiversityStudyOptions {
    double min_mask_area_frac = 0.6;
    int n_sources = 8;
    int samples_per_source = 4;
    int ldm_epochs = 0;  // 0: reuse cfg.ldm_train.epochs
};

struct DiversityStudyResult {
    int repeats = 0;
    std::vector<std::pair<double, double>> per_repeat;  // (uncond, cond) mean L2
    double uncond_mean_l2 = 0.0;
    double cond_mean_l2 = 0.0;
};

// Large-mask diversity comparison: per repeat, train unconditional and
// conditional models on the labeled latents only (overfit regime), sample
// with masks grown to at least min_mask_area_frac coverage, and compare the
// intra-source pairwise distances of the two samplers.
DiversityStudyResult diversity_study(const ExperimentConfig& cfg,
                                     const DiversityStudyOptions& opts);

}  // namespace augpaint
