#include "augpaint/config.hpp"

#include <cstdio>
#include <fstream>

#include "augpaint/errors.hpp"

namespace augpaint {

using json = nlohmann::json;

const char* to_string(Preset p) {
    return p == Preset::desk ? "desk" : "paper";
}

const char* to_string(Method m) {
    switch (m) {
        case Method::baseline: return "baseline";
        case Method::rand_aug: return "rand_aug";
        case Method::augpaint: return "augpaint";
        default: return "cond_augpaint";
    }
}

Preset preset_from_string(const std::string& s) {
    if (s == "desk") return Preset::desk;
    if (s == "paper") return Preset::paper;
    throw ConfigError("unknown preset: " + s);
}

Method method_from_string(const std::string& s) {
    if (s == "baseline") return Method::baseline;
    if (s == "rand_aug") return Method::rand_aug;
    if (s == "augpaint") return Method::augpaint;
    if (s == "cond_augpaint") return Method::cond_augpaint;
    throw ConfigError("unknown method: " + s);
}

void ExperimentConfig::validate() const {
    if (dataset_path.empty()) dataset.validate();
    if (labeled_cases < 1) throw ConfigError("config: labeled_cases must be >= 1");
    if (repeats < 1) throw ConfigError("config: repeats must be >= 1");
    if (static_cast<int>(seeds.size()) != repeats) {
        throw ConfigError("config: repeats must equal the number of seeds");
    }
    ae.validate();
    seg.validate();
    if (dataset.image_size % ae.factor != 0) {
        throw ConfigError("config: image_size must be divisible by the autoencoder factor");
    }
    inpaint.validate(T);
    if (T < 1 || !(beta_min > 0.0) || beta_min > beta_max || !(beta_max < 1.0)) {
        throw ConfigError("config: invalid schedule parameters");
    }
    if (output_dir.empty()) throw ConfigError("config: output_dir must be set");
}

ExperimentConfig default_config(Preset preset) {
    ExperimentConfig c;
    if (preset == Preset::desk) {
        c.dataset = PhantomConfig{};  // 10 cases x 20 slices, 64x64, K=3
        c.ae.base_width = 16;
        c.ae_train = AeTrainConfig{40, 4, 2e-3f, 1};
        c.diffusion.widths = {32, 48, 64, 96};
        c.diffusion.temb_dim = 64;
        c.ldm_train = LdmTrainConfig{240, 8, 3e-4f, 1, 0.1, 0.6};
        c.inpaint.steps = 50;
        c.inpaint.samples_per_pair = 5;
        c.seg.base_width = 16;
        c.seg.epochs = 30;
        c.seg.batch_size = 4;
        c.seg.lr = 1e-3f;
    } else {
        // paper-scale hyperparameters: 256x256 inputs, batch 4 / 1000 epochs
        // for AE and LDM, seg U-Net with initial width 64 trained 120 epochs
        // with Adam at 5e-4, 50 DDIM steps, 5 samples per labeled pair
        c.dataset.image_size = 256;
        c.dataset.radius_min = 16.0;
        c.dataset.radius_max = 40.0;
        c.ae.base_width = 128;
        c.ae_train = AeTrainConfig{1000, 4, 4.5e-6f * 4, 1};
        c.diffusion.widths = {128, 256, 384, 512};
        c.diffusion.temb_dim = 256;
        c.ldm_train = LdmTrainConfig{1000, 4, 1e-4f, 1, 0.1, 0.6};
        c.inpaint.steps = 50;
        c.inpaint.samples_per_pair = 5;
        c.seg.base_width = 64;
        c.seg.epochs = 120;
        c.seg.batch_size = 4;
        c.seg.lr = 5e-4f;
    }
    c.seg.num_classes = c.dataset.n_classes;
    return c;
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["dataset"] = {{"path", c.dataset_path},
                    {"n_cases", c.dataset.n_cases},
                    {"slices_per_case", c.dataset.slices_per_case},
                    {"image_size", c.dataset.image_size},
                    {"n_classes", c.dataset.n_classes},
                    {"ellipses_min", c.dataset.ellipses_min},
                    {"ellipses_max", c.dataset.ellipses_max},
                    {"radius_min", c.dataset.radius_min},
                    {"radius_max", c.dataset.radius_max},
                    {"class_presence_prob", c.dataset.class_presence_prob},
                    {"fg_jitter", c.dataset.fg_jitter},
                    {"bg_gradient", c.dataset.bg_gradient},
                    {"bg_noise_amp", c.dataset.bg_noise_amp},
                    {"bg_noise_scale_min", c.dataset.bg_noise_scale_min},
                    {"bg_noise_scale_max", c.dataset.bg_noise_scale_max},
                    {"distractors_min", c.dataset.distractors_min},
                    {"distractors_max", c.dataset.distractors_max},
                    {"seed", c.dataset.seed}};
    j["split"] = {{"ratios", c.split_ratios}};
    j["labeled_cases"] = c.labeled_cases;
    j["method"] = to_string(c.method);
    j["ae"] = {{"factor", c.ae.factor},
               {"latent_channels", c.ae.latent_channels},
               {"base_width", c.ae.base_width},
               {"variant", to_string(c.ae.variant)},
               {"codebook_size", c.ae.codebook_size},
               {"commitment_beta", c.ae.commitment_beta},
               {"epochs", c.ae_train.epochs},
               {"batch_size", c.ae_train.batch_size},
               {"lr", c.ae_train.lr}};
    j["diffusion"] = {{"T", c.T},
                      {"beta_min", c.beta_min},
                      {"beta_max", c.beta_max},
                      {"widths", c.diffusion.widths},
                      {"temb_dim", c.diffusion.temb_dim},
                      {"epochs", c.ldm_train.epochs},
                      {"batch_size", c.ldm_train.batch_size},
                      {"lr", c.ldm_train.lr},
                      {"mask_frac_min", c.ldm_train.mask_frac_min},
                      {"mask_frac_max", c.ldm_train.mask_frac_max}};
    j["inpaint"] = {{"steps", c.inpaint.steps},
                    {"eta", c.inpaint.eta},
                    {"samples_per_pair", c.inpaint.samples_per_pair},
                    {"flipping", c.inpaint.flipping_enabled},
                    {"mask_kind", to_string(c.inpaint.mask_kind)},
                    {"mask_padding", c.inpaint.mask_padding},
                    {"min_mask_area_frac", c.inpaint.min_mask_area_frac},
                    {"final_composite", c.inpaint.final_composite}};
    j["filter"] = {{"metric", to_string(c.filter_metric)}};
    j["seg"] = {{"base_width", c.seg.base_width},
                {"epochs", c.seg.epochs},
                {"batch_size", c.seg.batch_size},
                {"lr", c.seg.lr},
                {"ce_weight", c.seg.ce_weight},
                {"dice_weight", c.seg.dice_weight}};
    j["pipeline"] = {{"repeats", c.repeats}, {"seeds", c.seeds}, {"output_dir", c.output_dir}};
    return j;
}

namespace {

void merge_into(json& base, const json& overlay) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
            merge_into(base[it.key()], *it);
        } else {
            base[it.key()] = *it;
        }
    }
}

}  // namespace

ExperimentConfig config_from_json(const json& file_json, Preset base) {
    json j = to_json(default_config(base));
    merge_into(j, file_json);

    ExperimentConfig c;
    const json& d = j.at("dataset");
    c.dataset_path = d.value("path", "");
    c.dataset.n_cases = d.at("n_cases").get<int>();
    c.dataset.slices_per_case = d.at("slices_per_case").get<int>();
    c.dataset.image_size = d.at("image_size").get<int>();
    c.dataset.n_classes = d.at("n_classes").get<int>();
    c.dataset.ellipses_min = d.at("ellipses_min").get<int>();
    c.dataset.ellipses_max = d.at("ellipses_max").get<int>();
    c.dataset.radius_min = d.at("radius_min").get<double>();
    c.dataset.radius_max = d.at("radius_max").get<double>();
    c.dataset.class_presence_prob = d.at("class_presence_prob").get<double>();
    c.dataset.fg_jitter = d.at("fg_jitter").get<double>();
    c.dataset.bg_gradient = d.at("bg_gradient").get<double>();
    c.dataset.bg_noise_amp = d.at("bg_noise_amp").get<double>();
    c.dataset.bg_noise_scale_min = d.at("bg_noise_scale_min").get<int>();
    c.dataset.bg_noise_scale_max = d.at("bg_noise_scale_max").get<int>();
    c.dataset.distractors_min = d.at("distractors_min").get<int>();
    c.dataset.distractors_max = d.at("distractors_max").get<int>();
    c.dataset.seed = d.at("seed").get<std::uint64_t>();

    c.split_ratios = j.at("split").at("ratios").get<std::array<double, 3>>();
    c.labeled_cases = j.at("labeled_cases").get<int>();
    c.method = method_from_string(j.at("method").get<std::string>());

    const json& a = j.at("ae");
    c.ae.factor = a.at("factor").get<int>();
    c.ae.latent_channels = a.at("latent_channels").get<int>();
    c.ae.base_width = a.at("base_width").get<int>();
    c.ae.variant = ae_variant_from_string(a.at("variant").get<std::string>());
    c.ae.codebook_size = a.at("codebook_size").get<int>();
    c.ae.commitment_beta = a.at("commitment_beta").get<float>();
    c.ae_train.epochs = a.at("epochs").get<int>();
    c.ae_train.batch_size = a.at("batch_size").get<int>();
    c.ae_train.lr = a.at("lr").get<float>();

    const json& f = j.at("diffusion");
    c.T = f.at("T").get<int>();
    c.beta_min = f.at("beta_min").get<double>();
    c.beta_max = f.at("beta_max").get<double>();
    c.diffusion.widths = f.at("widths").get<std::array<int, 4>>();
    c.diffusion.temb_dim = f.at("temb_dim").get<int>();
    c.diffusion.latent_channels = c.ae.latent_channels;
    c.ldm_train.epochs = f.at("epochs").get<int>();
    c.ldm_train.batch_size = f.at("batch_size").get<int>();
    c.ldm_train.lr = f.at("lr").get<float>();
    c.ldm_train.mask_frac_min = f.at("mask_frac_min").get<double>();
    c.ldm_train.mask_frac_max = f.at("mask_frac_max").get<double>();

    const json& i = j.at("inpaint");
    c.inpaint.steps = i.at("steps").get<int>();
    c.inpaint.eta = i.at("eta").get<double>();
    c.inpaint.samples_per_pair = i.at("samples_per_pair").get<int>();
    c.inpaint.flipping_enabled = i.at("flipping").get<bool>();
    c.inpaint.mask_kind = mask_kind_from_string(i.at("mask_kind").get<std::string>());
    c.inpaint.mask_padding = i.at("mask_padding").get<int>();
    c.inpaint.min_mask_area_frac = i.at("min_mask_area_frac").get<double>();
    c.inpaint.final_composite = i.at("final_composite").get<bool>();

    c.filter_metric = filter_metric_from_string(j.at("filter").at("metric").get<std::string>());

    const json& s = j.at("seg");
    c.seg.num_classes = c.dataset.n_classes;
    c.seg.base_width = s.at("base_width").get<int>();
    c.seg.epochs = s.at("epochs").get<int>();
    c.seg.batch_size = s.at("batch_size").get<int>();
    c.seg.lr = s.at("lr").get<float>();
    c.seg.ce_weight = s.at("ce_weight").get<float>();
    c.seg.dice_weight = s.at("dice_weight").get<float>();

    const json& p = j.at("pipeline");
    c.repeats = p.at("repeats").get<int>();
    c.seeds = p.at("seeds").get<std::vector<std::uint64_t>>();
    c.output_dir = p.at("output_dir").get<std::string>();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& file, Preset base) {
    std::ifstream is(file);
    if (!is) throw IoError("config file not found: " + file.string());
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + file.string());
    return config_from_json(j, base);
}

std::string hash_json(const json& j) {
    return hash_strings({j.dump()});
}

std::string hash_strings(const std::vector<std::string>& parts) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : parts) {
        for (unsigned char ch : p) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
        h ^= 0xff;  // separator
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace augpaint
