#include "augpaint/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "augpaint/checkpoint.hpp"
#include "augpaint/errors.hpp"

namespace augpaint {

using nn::NodePtr;

const char* to_string(AeVariant v) {
    return v == AeVariant::vq ? "vq" : "plain";
}

AeVariant ae_variant_from_string(const std::string& s) {
    if (s == "vq") return AeVariant::vq;
    if (s == "plain") return AeVariant::plain;
    throw ConfigError("unknown autoencoder variant: " + s);
}

void AutoencoderConfig::validate() const {
    if (factor < 2 || (factor & (factor - 1)) != 0) {
        throw ConfigError("autoencoder: factor must be a power of 2 and >= 2");
    }
    if (latent_channels < 1) throw ConfigError("autoencoder: latent_channels must be >= 1");
    if (base_width < 8 || base_width % 8 != 0) {
        throw ConfigError("autoencoder: base_width must be a positive multiple of 8");
    }
    if (variant == AeVariant::vq && codebook_size < 2) {
        throw ConfigError("autoencoder: codebook_size must be >= 2");
    }
}

Autoencoder::Res Autoencoder::make_res(const std::string& name, int cin, int cout, Rng& rng) {
    Res r;
    r.gn1 = nn::GroupNormLayer::create(params_, name + ".gn1", cin, 8);
    r.conv1 = nn::Conv2dLayer::create(params_, name + ".conv1", cin, cout, 3, 1, 1, rng);
    r.gn2 = nn::GroupNormLayer::create(params_, name + ".gn2", cout, 8);
    r.conv2 = nn::Conv2dLayer::create(params_, name + ".conv2", cout, cout, 3, 1, 1, rng, 0.0f);
    if (cin != cout) {
        r.skip = nn::Conv2dLayer::create(params_, name + ".skip", cin, cout, 1, 1, 0, rng);
        r.has_skip = true;
    }
    return r;
}

NodePtr Autoencoder::Res::apply(const NodePtr& x) const {
    NodePtr h = conv1(nn::silu(gn1(x)));
    h = conv2(nn::silu(gn2(h)));
    return nn::add(h, has_skip ? skip(x) : x);
}

Autoencoder::Autoencoder(const AutoencoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    const int levels = static_cast<int>(std::lround(std::log2(cfg_.factor)));
    std::vector<int> widths;
    for (int i = 0; i < levels; ++i) {
        widths.push_back(cfg_.base_width << std::min(i, 2));
    }
    // encoder: stem, per level [res, pool], two bottom residual blocks at the
    // compressed resolution (cheap there, most of the reconstruction quality),
    // then the head to latent channels
    enc_stem_ = nn::Conv2dLayer::create(params_, "enc.stem", 3, widths[0], 3, 1, 1, rng);
    int ch = widths[0];
    for (int i = 0; i < levels; ++i) {
        enc_res_.push_back(make_res("enc.res" + std::to_string(i), ch, widths[std::size_t(i)], rng));
        ch = widths[std::size_t(i)];
    }
    enc_mid_.push_back(make_res("enc.mid0", ch, ch, rng));
    enc_mid_.push_back(make_res("enc.mid1", ch, ch, rng));
    enc_gn_ = nn::GroupNormLayer::create(params_, "enc.gn", ch, 8);
    enc_out_ = nn::Conv2dLayer::create(params_, "enc.out", ch, cfg_.latent_channels, 3, 1, 1, rng);
    // decoder mirrors the encoder
    dec_stem_ = nn::Conv2dLayer::create(params_, "dec.stem", cfg_.latent_channels, ch, 3, 1, 1, rng);
    dec_mid_.push_back(make_res("dec.mid0", ch, ch, rng));
    dec_mid_.push_back(make_res("dec.mid1", ch, ch, rng));
    for (int i = levels - 1; i >= 0; --i) {
        const int cout = (i == 0) ? widths[0] : widths[std::size_t(i - 1)];
        dec_res_.push_back(make_res("dec.res" + std::to_string(i), ch, cout, rng));
        ch = cout;
    }
    dec_gn_ = nn::GroupNormLayer::create(params_, "dec.gn", ch, 8);
    dec_out_ = nn::Conv2dLayer::create(params_, "dec.out", ch, 3, 3, 1, 1, rng);
    if (cfg_.variant == AeVariant::vq) {
        Tensor cb(Shape{1, 1, cfg_.codebook_size, cfg_.latent_channels});
        for (std::int64_t i = 0; i < cb.size(); ++i) {
            cb[i] = static_cast<float>(rng.normal()) * 0.5f;
        }
        codebook_ = params_.add("vq.codebook", std::move(cb));
    }
}

NodePtr Autoencoder::encode_graph(const NodePtr& x) const {
    const Shape s = x->value.shape();
    if (s.c != 3) throw ShapeError("encode: expected 3-channel image, got " + s.str());
    if (s.h % cfg_.factor != 0 || s.w % cfg_.factor != 0) {
        throw ShapeError("encode: dims must be divisible by factor " +
                         std::to_string(cfg_.factor));
    }
    NodePtr h = enc_stem_(x);
    for (const auto& r : enc_res_) {
        h = nn::avg_pool2(r.apply(h));
    }
    for (const auto& r : enc_mid_) h = r.apply(h);
    return enc_out_(nn::silu(enc_gn_(h)));
}

NodePtr Autoencoder::decode_graph(const NodePtr& z) const {
    const Shape s = z->value.shape();
    if (s.c != cfg_.latent_channels) {
        throw ShapeError("decode: expected " + std::to_string(cfg_.latent_channels) +
                         " latent channels, got " + s.str());
    }
    NodePtr h = dec_stem_(z);
    for (const auto& r : dec_mid_) h = r.apply(h);
    for (const auto& r : dec_res_) {
        h = r.apply(nn::upsample_nearest2(h));
    }
    return dec_out_(nn::silu(dec_gn_(h)));
}

LatentGrid Autoencoder::encode(const Tensor& image, const std::string& source_id) const {
    LatentGrid z;
    z.values = encode_graph(nn::make_const(image))->value;
    z.source_id = source_id;
    z.factor = cfg_.factor;
    return z;
}

Tensor Autoencoder::decode(const LatentGrid& latent) const {
    Tensor out = decode_graph(nn::make_const(latent.values))->value;
    for (std::int64_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(out[i], 0.0f, 1.0f);
    }
    return out;
}

std::vector<int> Autoencoder::quantize_indices(const Tensor& z) const {
    if (cfg_.variant != AeVariant::vq) {
        throw ConfigError("quantize: not a VQ autoencoder");
    }
    const Shape s = z.shape();
    const int C = s.c, V = cfg_.codebook_size;
    const std::int64_t hw = std::int64_t(s.h) * s.w;
    const Tensor& cb = codebook_->value;
    std::vector<int> indices(static_cast<std::size_t>(s.n) * hw);
    for (int n = 0; n < s.n; ++n) {
        for (std::int64_t i = 0; i < hw; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int v = 0; v < V; ++v) {
                double d = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double diff = double(z[(std::int64_t(n) * C + c) * hw + i]) -
                                        cb[std::int64_t(v) * C + c];
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = v;
                }
            }
            indices[static_cast<std::size_t>(n) * hw + i] = best;
        }
    }
    return indices;
}

Tensor Autoencoder::quantize(const Tensor& z) const {
    const auto indices = quantize_indices(z);
    const Shape s = z.shape();
    const std::int64_t hw = std::int64_t(s.h) * s.w;
    const Tensor& cb = codebook_->value;
    Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        for (std::int64_t i = 0; i < hw; ++i) {
            const int v = indices[static_cast<std::size_t>(n) * hw + i];
            for (int c = 0; c < s.c; ++c) {
                out[(std::int64_t(n) * s.c + c) * hw + i] = cb[std::int64_t(v) * s.c + c];
            }
        }
    }
    return out;
}

void Autoencoder::save(const std::filesystem::path& path, const std::string& config_hash) const {
    Checkpoint ck;
    ck.meta = {{"model", "autoencoder"},
               {"factor", cfg_.factor},
               {"latent_channels", cfg_.latent_channels},
               {"base_width", cfg_.base_width},
               {"variant", to_string(cfg_.variant)},
               {"codebook_size", cfg_.codebook_size},
               {"commitment_beta", cfg_.commitment_beta},
               {"init_seed", cfg_.init_seed},
               {"config_hash", config_hash}};
    for (const auto& [name, node] : params_.entries()) {
        ck.arrays.emplace_back(name, node->value);
    }
    ck.save(path);
}

Autoencoder Autoencoder::load(const std::filesystem::path& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("model", "") != "autoencoder") {
        throw IoError("checkpoint is not an autoencoder: " + path.string());
    }
    AutoencoderConfig cfg;
    cfg.factor = ck.meta.at("factor").get<int>();
    cfg.latent_channels = ck.meta.at("latent_channels").get<int>();
    cfg.base_width = ck.meta.at("base_width").get<int>();
    cfg.variant = ae_variant_from_string(ck.meta.at("variant").get<std::string>());
    cfg.codebook_size = ck.meta.at("codebook_size").get<int>();
    cfg.commitment_beta = ck.meta.at("commitment_beta").get<float>();
    cfg.init_seed = ck.meta.at("init_seed").get<std::uint64_t>();
    Autoencoder ae(cfg);
    for (auto& [name, node] : ae.params_.entries()) {
        node->value = ck.array(name);
    }
    return ae;
}

Autoencoder train_autoencoder(const std::vector<LabeledSample>& dataset,
                              const AutoencoderConfig& model_cfg,
                              const AeTrainConfig& train_cfg, TrainStats* stats) {
    if (dataset.empty()) throw ConfigError("train_autoencoder: empty dataset");
    Autoencoder ae(model_cfg);

    nn::Adam opt(ae.params().nodes(), train_cfg.lr);
    Rng rng(train_cfg.seed);
    const int n = static_cast<int>(dataset.size());
    const int bs = std::min(train_cfg.batch_size, n);
    const Shape img_shape = dataset[0].image.shape();

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;

    TrainStats local;
    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        if (train_cfg.epochs > 1) {
            // linear decay to 10% of the base rate
            const float frac = static_cast<float>(epoch) / (train_cfg.epochs - 1);
            opt.set_lr(train_cfg.lr * std::max(0.1f, 1.0f - 0.9f * frac));
        }
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform_int(0, i));
            std::swap(order[std::size_t(i)], order[std::size_t(j)]);
        }
        for (int start = 0; start + bs <= n; start += bs) {
            Tensor batch(Shape{bs, 3, img_shape.h, img_shape.w});
            for (int b = 0; b < bs; ++b) {
                const Tensor& img = dataset[std::size_t(order[std::size_t(start + b)])].image;
                std::copy_n(img.data(), img.size(), batch.data() + std::int64_t(b) * img.size());
            }
            auto x = nn::make_const(batch);
            NodePtr loss;
            NodePtr z_e = ae.encode_graph(x);
            if (model_cfg.variant == AeVariant::vq) {
                const auto indices = ae.quantize_indices(z_e->value);
                NodePtr sel = nn::gather_codebook(ae.codebook(), indices, z_e->value.shape());
                NodePtr dec_in = nn::straight_through(z_e, sel->value);
                NodePtr recon = ae.decode_graph(dec_in);
                NodePtr recon_loss = nn::mse_loss(recon, batch);
                NodePtr codebook_loss = nn::mse_loss(sel, z_e->value);
                NodePtr commit_loss = nn::mse_loss(z_e, sel->value);
                loss = nn::add(recon_loss,
                               nn::add(codebook_loss,
                                       nn::scale(commit_loss, model_cfg.commitment_beta)));
            } else {
                NodePtr recon = ae.decode_graph(z_e);
                loss = nn::mse_loss(recon, batch);
            }
            const float lv = loss->value[0];
            if (!std::isfinite(lv)) {
                throw TrainingDiverged("autoencoder training diverged (non-finite loss) at epoch " +
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
    return ae;
}

}  // namespace augpaint
