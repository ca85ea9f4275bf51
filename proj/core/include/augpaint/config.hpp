#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "augpaint/autoencoder.hpp"
#include "augpaint/datasets.hpp"
#include "augpaint/diffusion.hpp"
#include "augpaint/filtering.hpp"
#include "augpaint/inpaint.hpp"
#include "augpaint/segmentation.hpp"

namespace augpaint {

enum class Preset { desk, paper };
enum class Method { baseline, rand_aug, augpaint, cond_augpaint };

const char* to_string(Preset p);
const char* to_string(Method m);
Preset preset_from_string(const std::string& s);
Method method_from_string(const std::string& s);

// The whole experiment in one structured config. JSON sections: dataset,
// split, ae, diffusion, inpaint, filter, seg, pipeline (see README for the
// key list). Values omitted from a config file fall back to the preset.
struct ExperimentConfig {
    PhantomConfig dataset;
    std::string dataset_path;  // non-empty: load instead of synthesizing
    std::array<double, 3> split_ratios{0.70, 0.15, 0.15};
    int labeled_cases = 2;
    Method method = Method::augpaint;

    AutoencoderConfig ae;
    AeTrainConfig ae_train;

    int T = 1000;
    double beta_min = 1e-4;
    double beta_max = 2e-2;
    DiffusionConfig diffusion;
    LdmTrainConfig ldm_train;

    InpaintConfig inpaint;
    FilterMetric filter_metric = FilterMetric::prob;
    SegConfig seg;

    int repeats = 3;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::string output_dir = "runs/exp";

    void validate() const;
    NoiseSchedule schedule() const {
        return make_schedule(T, ScheduleKind::linear, beta_min, beta_max);
    }
};

ExperimentConfig default_config(Preset preset);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j, Preset base = Preset::desk);

// Preset defaults deep-merged with the file's values.
ExperimentConfig load_experiment_config(const std::filesystem::path& file, Preset base);

// Canonical FNV-1a hash of a JSON document (sorted keys), hex string.
std::string hash_json(const nlohmann::json& j);
std::string hash_strings(const std::vector<std::string>& parts);

}  // namespace augpaint
