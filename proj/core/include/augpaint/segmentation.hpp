#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "augpaint/datasets.hpp"
#include "augpaint/nn/unet.hpp"
#include "augpaint/train_stats.hpp"

namespace augpaint {

struct SegConfig {
    int num_classes = 3;
    int base_width = 16;  // initial channel count c0; stages are c0,2c0,4c0,8c0
    int epochs = 30;
    int batch_size = 4;
    float lr = 5e-4f;
    float ce_weight = 1.0f;
    float dice_weight = 1.0f;
    std::uint64_t seed = 1;
    std::uint64_t init_seed = 1;

    void validate() const;
};

struct TrainPair {
    Tensor image;  // (1,3,H,W)
    GridU8 label;
};

// U-Net pixel classifier. Any backbone mapping an image to per-pixel class
// probabilities can stand in behind this interface.
class SegBackbone {
public:
    virtual ~SegBackbone() = default;
    // returns (1, K, H, W) probabilities summing to 1 per pixel
    virtual Tensor predict_probs(const Tensor& image) const = 0;
    virtual int num_classes() const = 0;
};

class SegModel : public SegBackbone {
public:
    SegModel() = default;
    explicit SegModel(const SegConfig& cfg);

    Tensor predict_probs(const Tensor& image) const override;
    GridU8 predict_labels(const Tensor& image) const;  // argmax, low index wins ties
    int num_classes() const override { return cfg_.num_classes; }

    const SegConfig& config() const { return cfg_; }
    nn::UNet& unet() { return unet_; }
    const nn::UNet& unet() const { return unet_; }

    void save(const std::filesystem::path& path, const std::string& config_hash = {}) const;
    static SegModel load(const std::filesystem::path& path);

private:
    SegConfig cfg_;
    nn::UNet unet_;
};

// Cross-entropy + soft-Dice (equal weights by default), Adam. Rejects
// samples with hidden labels. Throws TrainingDiverged on non-finite loss.
SegModel train_seg(const std::vector<TrainPair>& dataset, const SegConfig& cfg,
                   TrainStats* stats = nullptr);

std::vector<TrainPair> to_train_pairs(const std::vector<LabeledSample>& samples);

// --- metrics -------------------------------------------------------------

// 100 * 2|A∩B| / (|A|+|B|); both masks empty -> 100 (perfect agreement).
double dice_score(const GridU8& pred, const GridU8& gt);

// 95th percentile (linear interpolation) of symmetric boundary-to-boundary
// Euclidean distances. Exactly one empty mask -> undefined (nullopt); both
// empty -> 0.
std::optional<double> hd95(const GridU8& pred, const GridU8& gt);

struct SegMetrics {
    std::vector<double> dice;  // per foreground class, percent
    std::vector<double> hd95;  // per foreground class, pixels (NaN if undefined)
    double mean_dice = 0.0;
    double mean_hd95 = 0.0;
    int n_samples = 0;
    int undefined_hd95_count = 0;

    std::string to_table() const;
};

// Per-sample argmax predictions scored per foreground class, averaged over
// samples then classes. Samples where a class's HD95 is undefined are
// excluded from that class's mean (counted).
SegMetrics evaluate(const SegBackbone& model, const std::vector<LabeledSample>& split);

nlohmann::json metrics_to_json(const SegMetrics& m, const std::string& split_name);
SegMetrics metrics_from_json(const nlohmann::json& j);

}  // namespace augpaint
