#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "augpaint/config.hpp"
#include "augpaint/pipeline.hpp"

namespace {

using namespace augpaint;

struct GlobalOpts {
    std::string config_file;
    std::string preset = "desk";
    std::string out_dir;
    std::int64_t seed = -1;
};

ExperimentConfig make_config(const GlobalOpts& g) {
    const Preset preset = preset_from_string(g.preset);
    ExperimentConfig cfg = g.config_file.empty()
                               ? default_config(preset)
                               : load_experiment_config(g.config_file, preset);
    if (!g.out_dir.empty()) cfg.output_dir = g.out_dir;
    if (g.seed >= 0) {
        cfg.seeds = {static_cast<std::uint64_t>(g.seed)};
        cfg.repeats = 1;
    }
    return cfg;
}

void print_report(const RunReport& rep) {
    std::cout << rep.to_text();
}

int run_stage(const GlobalOpts& g, PipelineStage stage, const char* done_msg) {
    const ExperimentConfig cfg = make_config(g);
    const RunReport rep = run_pipeline(cfg, stage);
    int failures = 0;
    for (const auto& r : rep.repeats) {
        if (!r.completed && !r.partial) {
            std::cerr << "repeat with seed " << r.seed << " failed: " << r.error << "\n";
            ++failures;
        }
    }
    if (failures == 0) {
        std::cout << done_msg << " -> " << cfg.output_dir << "\n";
    }
    if (stage == PipelineStage::all) print_report(rep);
    return failures == 0 ? 0 : 1;
}

std::vector<int> parse_values(const std::string& csv) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        const std::size_t comma = csv.find(',', pos);
        const std::string tok = csv.substr(pos, comma == std::string::npos ? csv.size() - pos
                                                                           : comma - pos);
        if (!tok.empty()) out.push_back(std::stoi(tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"augpaint: diffusion-inpainting data augmentation for segmentation"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may appear after the subcommand

    GlobalOpts g;
    app.add_option("--config", g.config_file, "experiment config file (JSON)");
    app.add_option("--preset", g.preset, "base preset: desk|paper")->default_val("desk");
    app.add_option("--out", g.out_dir, "output directory (overrides config)");
    app.add_option("--seed", g.seed, "single-repeat seed override");

    // dataset synth
    auto* ds = app.add_subcommand("dataset", "dataset utilities")->require_subcommand(1);
    ds->fallthrough();
    auto* synth = ds->add_subcommand("synth", "synthesize the phantom dataset and save it");
    synth->fallthrough();

    auto* train_ae = app.add_subcommand("train-ae", "train the autoencoder stage");
    train_ae->fallthrough();
    auto* train_ldm = app.add_subcommand("train-ldm", "train the latent diffusion stage");
    train_ldm->fallthrough();
    auto* inpaint_cmd = app.add_subcommand("inpaint", "generate inpainting samples");
    inpaint_cmd->fallthrough();
    auto* filter_cmd = app.add_subcommand("filter", "confidence-filter generated samples");
    filter_cmd->fallthrough();
    auto* train_seg = app.add_subcommand("train-seg", "train the final segmenter");
    train_seg->fallthrough();
    auto* eval_cmd = app.add_subcommand("eval", "evaluate and print metrics");
    eval_cmd->fallthrough();
    auto* run_cmd = app.add_subcommand("run", "run the full experiment pipeline");
    run_cmd->fallthrough();

    auto* sweep = app.add_subcommand("sweep", "parameter sweeps")->require_subcommand(1);
    sweep->fallthrough();
    std::string sweep_values;
    auto* sweep_samples = sweep->add_subcommand("samples", "sweep samples per labeled pair");
    sweep_samples->fallthrough();
    sweep_samples->add_option("--values", sweep_values, "comma-separated counts")
        ->default_val("1,5,10,30");
    auto* sweep_cases = sweep->add_subcommand("cases", "sweep labeled case counts");
    sweep_cases->fallthrough();
    sweep_cases->add_option("--values", sweep_values, "comma-separated counts")
        ->default_val("1,2,5");

    auto* ablate = app.add_subcommand("ablate", "ablations")->require_subcommand(1);
    ablate->fallthrough();
    auto* ablate_mask = ablate->add_subcommand("mask", "box vs label-shape condition masks");
    ablate_mask->fallthrough();
    bool with_diversity_study = false;
    auto* ablate_cond = ablate->add_subcommand("cond", "conditional vs unconditional sampler");
    ablate_cond->fallthrough();
    ablate_cond->add_flag("--diversity-study", with_diversity_study,
                          "also run the large-mask diversity study");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            ExperimentConfig cfg = make_config(g);
            const auto samples = cfg.dataset_path.empty()
                                     ? synth_phantoms(cfg.dataset)
                                     : load_dataset(cfg.dataset_path, cfg.dataset.n_classes);
            const auto dir = std::filesystem::path(cfg.output_dir) / "dataset";
            save_dataset(samples, dir);
            std::cout << "wrote " << samples.size() << " samples -> " << dir.string() << "\n";
            return 0;
        }
        if (train_ae->parsed()) return run_stage(g, PipelineStage::ae, "autoencoder trained");
        if (train_ldm->parsed()) return run_stage(g, PipelineStage::ldm, "diffusion model trained");
        if (inpaint_cmd->parsed()) return run_stage(g, PipelineStage::generate, "samples generated");
        if (filter_cmd->parsed()) return run_stage(g, PipelineStage::filter, "samples filtered");
        if (train_seg->parsed()) return run_stage(g, PipelineStage::seg, "segmenter trained");
        if (eval_cmd->parsed() || run_cmd->parsed()) {
            return run_stage(g, PipelineStage::all, "pipeline complete");
        }
        if (sweep_samples->parsed()) {
            const auto curve = sweep_samples_per_pair(make_config(g), parse_values(sweep_values));
            for (const auto& p : curve) {
                std::printf("samples=%2.0f  dice %.2f +/- %.2f\n", p.value, p.mean_dice,
                            p.std_dice);
            }
            return 0;
        }
        if (sweep_cases->parsed()) {
            const auto curve = sweep_labeled_cases(make_config(g), parse_values(sweep_values));
            for (const auto& p : curve) {
                std::printf("cases=%d  baseline %.2f  augpaint %.2f  gap %+.2f\n",
                            p.labeled_cases, p.baseline_mean_dice, p.augpaint_mean_dice, p.gap);
            }
            return 0;
        }
        if (ablate_mask->parsed()) {
            const auto rep = ablate_mask_type(make_config(g));
            std::printf("box   dice %.2f +/- %.2f (coverage %.3f)\n", rep.box.mean_dice,
                        rep.box.std_dice, rep.box_coverage);
            std::printf("label dice %.2f +/- %.2f (coverage %.3f)\n", rep.label.mean_dice,
                        rep.label.std_dice, rep.label_coverage);
            return 0;
        }
        if (ablate_cond->parsed()) {
            const ExperimentConfig cfg = make_config(g);
            const auto rep = compare_cond_uncond(cfg);
            std::printf("AugPaint      dice %.2f +/- %.2f, diversity %.3f\n",
                        rep.uncond.mean_dice, rep.uncond.std_dice, rep.uncond_diversity);
            std::printf("cond AugPaint dice %.2f +/- %.2f, diversity %.3f\n",
                        rep.cond.mean_dice, rep.cond.std_dice, rep.cond_diversity);
            if (with_diversity_study) {
                const auto ds_res = diversity_study(cfg, DiversityStudyOptions{});
                std::printf("large-mask diversity: uncond %.3f vs cond %.3f over %d repeats\n",
                            ds_res.uncond_mean_l2, ds_res.cond_mean_l2, ds_res.repeats);
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
