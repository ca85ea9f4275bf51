#include "augpaint/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "augpaint/checkpoint.hpp"
#include "augpaint/errors.hpp"

namespace augpaint {

void SegConfig::validate() const {
    if (num_classes < 2) throw ConfigError("seg: num_classes must be >= 2");
    if (base_width < 8 || base_width % 8 != 0) {
        throw ConfigError("seg: base_width must be a positive multiple of 8");
    }
    if (epochs < 1 || batch_size < 1) throw ConfigError("seg: invalid training budget");
    if (!(lr > 0.0f)) throw ConfigError("seg: lr must be positive");
}

SegModel::SegModel(const SegConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    nn::UNetConfig ucfg;
    ucfg.in_channels = 3;
    ucfg.out_channels = cfg.num_classes;
    ucfg.widths = {cfg.base_width, 2 * cfg.base_width, 4 * cfg.base_width, 8 * cfg.base_width};
    ucfg.temb_dim = 0;
    ucfg.init_seed = cfg.init_seed;
    unet_ = nn::UNet(ucfg);
}

Tensor SegModel::predict_probs(const Tensor& image) const {
    return nn::softmax_channels(unet_.infer(image));
}

GridU8 SegModel::predict_labels(const Tensor& image) const {
    const Tensor probs = predict_probs(image);
    const Shape s = probs.shape();
    GridU8 out(s.h, s.w, 0);
    const std::int64_t hw = std::int64_t(s.h) * s.w;
    for (std::int64_t i = 0; i < hw; ++i) {
        int best = 0;
        float best_p = probs[i];
        for (int c = 1; c < s.c; ++c) {
            const float p = probs[std::int64_t(c) * hw + i];
            if (p > best_p) {  // strict: ties keep the lowest class index
                best_p = p;
                best = c;
            }
        }
        out.v[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
    }
    return out;
}

void SegModel::save(const std::filesystem::path& path, const std::string& config_hash) const {
    Checkpoint ck;
    ck.meta = {{"model", "segmentation"},
               {"num_classes", cfg_.num_classes},
               {"base_width", cfg_.base_width},
               {"init_seed", cfg_.init_seed},
               {"config_hash", config_hash}};
    for (const auto& [name, node] : unet_.params().entries()) {
        ck.arrays.emplace_back(name, node->value);
    }
    ck.save(path);
}

SegModel SegModel::load(const std::filesystem::path& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("model", "") != "segmentation") {
        throw IoError("checkpoint is not a segmentation model: " + path.string());
    }
    SegConfig cfg;
    cfg.num_classes = ck.meta.at("num_classes").get<int>();
    cfg.base_width = ck.meta.at("base_width").get<int>();
    cfg.init_seed = ck.meta.at("init_seed").get<std::uint64_t>();
    SegModel model(cfg);
    for (auto& [name, node] : model.unet_.params().entries()) {
        node->value = ck.array(name);
    }
    return model;
}

std::vector<TrainPair> to_train_pairs(const std::vector<LabeledSample>& samples) {
    std::vector<TrainPair> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.label_hidden) {
            throw ConfigError("sample '" + s.id + "' has a hidden label; not usable for training");
        }
        out.push_back(TrainPair{s.image, s.label});
    }
    return out;
}

SegModel train_seg(const std::vector<TrainPair>& dataset, const SegConfig& cfg,
                   TrainStats* stats) {
    if (dataset.empty()) throw ConfigError("train_seg: empty dataset");
    for (const auto& p : dataset) {
        if (p.label.max_value() >= cfg.num_classes) {
            throw ConfigError("train_seg: label id exceeds num_classes");
        }
    }
    SegModel model(cfg);
    nn::Adam opt(model.unet().params().nodes(), cfg.lr);
    Rng rng(cfg.seed);
    const int n = static_cast<int>(dataset.size());
    const int bs = std::min(cfg.batch_size, n);
    const Shape img_shape = dataset[0].image.shape();

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;

    TrainStats local;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.epochs > 1) {
            const float frac = static_cast<float>(epoch) / (cfg.epochs - 1);
            opt.set_lr(cfg.lr * std::max(0.1f, 1.0f - 0.9f * frac));
        }
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform_int(0, i));
            std::swap(order[std::size_t(i)], order[std::size_t(j)]);
        }
        for (int start = 0; start + bs <= n; start += bs) {
            Tensor batch(Shape{bs, 3, img_shape.h, img_shape.w});
            std::vector<const GridU8*> labels(static_cast<std::size_t>(bs));
            for (int b = 0; b < bs; ++b) {
                const TrainPair& p = dataset[std::size_t(order[std::size_t(start + b)])];
                std::copy_n(p.image.data(), p.image.size(),
                            batch.data() + std::int64_t(b) * p.image.size());
                labels[std::size_t(b)] = &p.label;
            }
            auto logits = model.unet().forward(nn::make_const(batch));
            auto loss = nn::ce_dice_loss(logits, labels, cfg.ce_weight, cfg.dice_weight);
            const float lv = loss->value[0];
            if (!std::isfinite(lv)) {
                throw TrainingDiverged("seg training diverged (non-finite loss) at epoch " +
                                       std::to_string(epoch));
            }
            opt.zero_grad();
            nn::backward(loss);
            opt.step();
            ++local.steps;
            local.final_loss = lv;
        }
        local.losses.push_back(local.final_loss);
    }
    if (stats) *stats = local;
    return model;
}

double dice_score(const GridU8& pred, const GridU8& gt) {
    if (pred.h != gt.h || pred.w != gt.w) throw ShapeError("dice_score: shape mismatch");
    std::int64_t a = 0, b = 0, inter = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const bool pa = pred.v[i] != 0;
        const bool pb = gt.v[i] != 0;
        a += pa;
        b += pb;
        inter += (pa && pb);
    }
    if (a + b == 0) return 100.0;  // empty-empty: perfect agreement by convention
    return 100.0 * 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

namespace {

std::vector<std::pair<int, int>> boundary_pixels(const GridU8& m) {
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < m.h; ++r) {
        for (int c = 0; c < m.w; ++c) {
            if (!m.at(r, c)) continue;
            const bool edge = r == 0 || r == m.h - 1 || c == 0 || c == m.w - 1 ||
                              !m.at(r - 1, c) || !m.at(r + 1, c) || !m.at(r, c - 1) ||
                              !m.at(r, c + 1);
            if (edge) out.emplace_back(r, c);
        }
    }
    return out;
}

void directed_distances(const std::vector<std::pair<int, int>>& from,
                        const std::vector<std::pair<int, int>>& to,
                        std::vector<double>& out) {
    for (const auto& [r, c] : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [r2, c2] : to) {
            const double dr = r - r2, dc = c - c2;
            best = std::min(best, dr * dr + dc * dc);
        }
        out.push_back(std::sqrt(best));
    }
}

}  // namespace

std::optional<double> hd95(const GridU8& pred, const GridU8& gt) {
    if (pred.h != gt.h || pred.w != gt.w) throw ShapeError("hd95: shape mismatch");
    const bool pe = pred.count_nonzero() == 0;
    const bool ge = gt.count_nonzero() == 0;
    if (pe && ge) return 0.0;
    if (pe || ge) return std::nullopt;  // undefined when exactly one mask is empty

    const auto bp = boundary_pixels(pred);
    const auto bg = boundary_pixels(gt);
    std::vector<double> d;
    d.reserve(bp.size() + bg.size());
    directed_distances(bp, bg, d);
    directed_distances(bg, bp, d);
    std::sort(d.begin(), d.end());
    // linear-interpolation percentile
    const double pos = 0.95 * (static_cast<double>(d.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= d.size()) return d.back();
    return d[lo] + frac * (d[lo + 1] - d[lo]);
}

std::string SegMetrics::to_table() const {
    std::ostringstream os;
    os << "class | Dice%  | HD95\n";
    os << "------+--------+------\n";
    for (std::size_t c = 0; c < dice.size(); ++c) {
        os << "  " << (c + 1) << "   | ";
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%6.2f | ", dice[c]);
        os << buf;
        if (std::isnan(hd95[c])) {
            os << "  -\n";
        } else {
            std::snprintf(buf, sizeof(buf), "%.2f\n", hd95[c]);
            os << buf;
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "mean  | %6.2f | %.2f  (n=%d, undefined_hd95=%d)\n",
                  mean_dice, mean_hd95, n_samples, undefined_hd95_count);
    os << buf;
    return os.str();
}

nlohmann::json metrics_to_json(const SegMetrics& m, const std::string& split_name) {
    nlohmann::json hd = nlohmann::json::array();
    for (double v : m.hd95) {
        if (std::isnan(v)) {
            hd.push_back(nullptr);
        } else {
            hd.push_back(v);
        }
    }
    return {{"split", split_name},
            {"per_class_dice", m.dice},
            {"per_class_hd95", hd},
            {"mean_dice", m.mean_dice},
            {"mean_hd95", std::isnan(m.mean_hd95) ? nlohmann::json(nullptr)
                                                  : nlohmann::json(m.mean_hd95)},
            {"n", m.n_samples},
            {"undefined_hd95_count", m.undefined_hd95_count}};
}

SegMetrics metrics_from_json(const nlohmann::json& j) {
    SegMetrics m;
    m.dice = j.at("per_class_dice").get<std::vector<double>>();
    for (const auto& v : j.at("per_class_hd95")) {
        m.hd95.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                     : v.get<double>());
    }
    m.mean_dice = j.at("mean_dice").get<double>();
    m.mean_hd95 = j.at("mean_hd95").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                              : j.at("mean_hd95").get<double>();
    m.n_samples = j.at("n").get<int>();
    m.undefined_hd95_count = j.at("undefined_hd95_count").get<int>();
    return m;
}

SegMetrics evaluate(const SegBackbone& model, const std::vector<LabeledSample>& split) {
    if (split.empty()) throw ConfigError("evaluate: empty split");
    const int K = model.num_classes();
    SegMetrics m;
    m.n_samples = static_cast<int>(split.size());
    std::vector<double> dice_sum(static_cast<std::size_t>(K - 1), 0.0);
    std::vector<double> hd_sum(static_cast<std::size_t>(K - 1), 0.0);
    std::vector<int> hd_count(static_cast<std::size_t>(K - 1), 0);

    for (const auto& s : split) {
        Tensor probs = model.predict_probs(s.image);
        const Shape ps = probs.shape();
        GridU8 pred_labels(ps.h, ps.w, 0);
        const std::int64_t hw = std::int64_t(ps.h) * ps.w;
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
            pred_labels.v[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
        }
        for (int c = 1; c < K; ++c) {
            GridU8 pm(ps.h, ps.w, 0), gm(ps.h, ps.w, 0);
            for (std::size_t i = 0; i < pm.v.size(); ++i) {
                pm.v[i] = pred_labels.v[i] == c;
                gm.v[i] = s.label.v[i] == c;
            }
            dice_sum[std::size_t(c - 1)] += dice_score(pm, gm);
            if (auto h = hd95(pm, gm)) {
                hd_sum[std::size_t(c - 1)] += *h;
                hd_count[std::size_t(c - 1)] += 1;
            } else {
                ++m.undefined_hd95_count;
            }
        }
    }

    double dice_acc = 0.0, hd_acc = 0.0;
    int hd_classes = 0;
    for (int c = 0; c < K - 1; ++c) {
        m.dice.push_back(dice_sum[std::size_t(c)] / m.n_samples);
        dice_acc += m.dice.back();
        if (hd_count[std::size_t(c)] > 0) {
            m.hd95.push_back(hd_sum[std::size_t(c)] / hd_count[std::size_t(c)]);
            hd_acc += m.hd95.back();
            ++hd_classes;
        } else {
            m.hd95.push_back(std::numeric_limits<double>::quiet_NaN());
        }
    }
    m.mean_dice = dice_acc / (K - 1);
    m.mean_hd95 = hd_classes > 0 ? hd_acc / hd_classes : std::numeric_limits<double>::quiet_NaN();
    return m;
}

}  // namespace augpaint
