#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "augpaint/generated_pair.hpp"
#include "augpaint/image.hpp"
#include "augpaint/tensor.hpp"

namespace augpaint {

enum class Split { train, val, test };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

// One 2D image with its pixel-wise class-label map and provenance.
struct LabeledSample {
    std::string id;
    std::string case_id;
    Tensor image;  // (1,3,H,W), values in [0,1]
    GridU8 label;  // values in {0..K-1}, 0 = background
    Split split = Split::train;
    bool label_hidden = false;  // true for the unlabeled pool; label kept on
                                // disk for oracle checks, unusable in training
};

struct DatasetSplit {
    std::vector<LabeledSample> labeled;    // S^l (empty until subset sampling)
    std::vector<LabeledSample> unlabeled;  // S^u / the train pool
    std::vector<LabeledSample> val;
    std::vector<LabeledSample> test;
};

// Procedural phantom dataset: per-case background style (palette, gradient,
// band-limited noise, distractor blobs) with globally consistent foreground
// classes drawn as ellipse clusters whose analytic shapes emit pixel-exact
// labels.
struct PhantomConfig {
    int n_cases = 10;
    int slices_per_case = 20;
    int image_size = 64;
    int n_classes = 3;  // including background
    // foreground shapes
    int ellipses_min = 1;
    int ellipses_max = 3;
    double radius_min = 4.0;
    double radius_max = 10.0;
    double class_presence_prob = 1.0;
    double fg_jitter = 0.05;
    // background texture
    double bg_gradient = 0.35;
    double bg_noise_amp = 0.04;
    int bg_noise_scale_min = 3;
    int bg_noise_scale_max = 6;
    int distractors_min = 2;
    int distractors_max = 5;
    std::uint64_t seed = 1;

    void validate() const;  // throws ConfigError
};

std::vector<LabeledSample> synth_phantoms(const PhantomConfig& cfg);

// Case-wise three-way split with largest-remainder seat rounding (remainder
// ties broken by split order: train, val, test). Returned DatasetSplit has
// the whole train pool in `unlabeled`; promote cases to `labeled` with
// sample_labeled_subset.
DatasetSplit split_dataset(const std::vector<LabeledSample>& samples,
                           std::array<double, 3> ratios, std::uint64_t seed);

// Picks n_cases whole cases from the train pool as S^l; everything else goes
// to S^u with labels flagged hidden.
std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>>
sample_labeled_subset(const std::vector<LabeledSample>& train_pool, int n_cases,
                      std::uint64_t seed);

// Bilinear for the image, nearest-neighbor for the label (class ids are
// categorical and must never blend).
LabeledSample resize_canonical(const LabeledSample& sample, int size);

struct RandAugOptions {
    bool flips = true;
    bool rot90 = true;
    double brightness_delta = 0.1;
    double max_translate_frac = 0.1;
};

// Random-transform augmentation baseline: `factor` copies per source with a
// random flip / quarter-turn / brightness / small-translation composition,
// label transformed consistently. Confidence stays NaN until filtering.
std::vector<GeneratedPair> rand_aug(const std::vector<LabeledSample>& labeled, int factor,
                                    std::uint64_t seed, const RandAugOptions& opts = {});

// On-disk layout: images/<id>.png (8-bit RGB), labels/<id>.png (8-bit, pixel
// value = class id), manifest.jsonl with {id, case_id, split[, label_hidden]}.
void save_dataset(const std::vector<LabeledSample>& samples,
                  const std::filesystem::path& dir);
// expected_classes > 0 enables class-id validation on load.
std::vector<LabeledSample> load_dataset(const std::filesystem::path& dir,
                                        int expected_classes = 0);

std::vector<std::string> distinct_case_ids(const std::vector<LabeledSample>& samples);

}  // namespace augpaint
