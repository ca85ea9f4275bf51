#include "augpaint/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "augpaint/checkpoint.hpp"
#include "augpaint/errors.hpp"
#include "augpaint/plot.hpp"

namespace augpaint {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

json read_json_file(const fs::path& p) {
    std::ifstream is(p);
    if (!is) throw IoError("cannot read: " + p.string());
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw IoError("corrupt JSON: " + p.string());
    return j;
}

// Runs a named stage unless its marker matches `hash` and all declared
// outputs exist. The marker is written after the stage body completes.
class StageRunner {
public:
    explicit StageRunner(fs::path dir) : dir_(std::move(dir)) {
        fs::create_directories(dir_);
    }

    bool run(const std::string& name, const std::string& hash,
             const std::vector<fs::path>& outputs, const std::function<void()>& body,
             std::vector<std::pair<std::string, double>>* timing = nullptr) {
        const fs::path marker = dir_ / (name + ".done.json");
        if (fs::exists(marker)) {
            json m = read_json_file(marker);
            bool ok = m.value("hash", "") == hash;
            for (const auto& out : outputs) ok = ok && fs::exists(out);
            if (ok) {
                if (timing) timing->emplace_back(name, m.value("seconds", 0.0));
                return false;
            }
        }
        const double t0 = now_seconds();
        body();
        const double dt = now_seconds() - t0;
        write_text_atomic(marker, json{{"hash", hash}, {"seconds", dt}}.dump(2) + "\n");
        if (timing) timing->emplace_back(name, dt);
        return true;
    }

    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
};

struct RepeatData {
    std::vector<LabeledSample> labeled, unlabeled, val, test;
};

RepeatData materialize_split(const std::vector<LabeledSample>& all, const json& split_json) {
    auto in = [](const json& arr, const std::string& id) {
        return std::any_of(arr.begin(), arr.end(),
                           [&](const json& v) { return v.get<std::string>() == id; });
    };
    RepeatData rd;
    for (const auto& s : all) {
        LabeledSample copy = s;
        if (in(split_json.at("labeled_cases"), s.case_id)) {
            copy.split = Split::train;
            copy.label_hidden = false;
            rd.labeled.push_back(std::move(copy));
        } else if (in(split_json.at("train_cases"), s.case_id)) {
            copy.split = Split::train;
            copy.label_hidden = true;
            rd.unlabeled.push_back(std::move(copy));
        } else if (in(split_json.at("val_cases"), s.case_id)) {
            copy.split = Split::val;
            rd.val.push_back(std::move(copy));
        } else {
            copy.split = Split::test;
            rd.test.push_back(std::move(copy));
        }
    }
    return rd;
}

std::vector<json> case_id_json(const std::vector<LabeledSample>& samples) {
    std::vector<json> out;
    for (const auto& c : distinct_case_ids(samples)) out.push_back(c);
    return out;
}

double mask_coverage(const MaskSpec& m) {
    return static_cast<double>(m.pixel_mask.count_nonzero()) /
           static_cast<double>(std::int64_t(m.pixel_mask.h) * m.pixel_mask.w);
}

struct Stats {
    double mean = 0.0, stddev = 0.0;
};

Stats mean_std(const std::vector<double>& v) {
    Stats s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double acc = 0.0;
        for (double x : v) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
    }
    return s;
}

json diversity_to_json(const DiversityReport& d) {
    json sources = json::array();
    for (const auto& s : d.sources) {
        sources.push_back({{"source_id", s.source_id},
                           {"n_samples", s.n_samples},
                           {"mean_pairwise_l2", s.mean_pairwise_l2}});
    }
    return {{"sources", sources},
            {"mean_over_sources", d.mean_over_sources},
            {"skipped_sources", d.skipped_sources}};
}

DiversityReport diversity_from_json(const json& j) {
    DiversityReport d;
    for (const auto& s : j.at("sources")) {
        d.sources.push_back({s.at("source_id").get<std::string>(),
                             s.at("n_samples").get<int>(),
                             s.at("mean_pairwise_l2").get<double>()});
    }
    d.mean_over_sources = j.at("mean_over_sources").get<double>();
    d.skipped_sources = j.at("skipped_sources").get<int>();
    return d;
}

}  // namespace

json RunReport::to_json() const {
    json reps = json::array();
    for (const auto& r : repeats) {
        json jr{{"seed", r.seed},
                {"completed", r.completed},
                {"n_generated", r.n_generated},
                {"n_kept", r.n_kept}};
        if (!r.error.empty()) jr["error"] = r.error;
        if (r.completed) {
            jr["metrics"] = metrics_to_json(r.metrics, "test");
            jr["baseline_metrics"] = metrics_to_json(r.baseline_metrics, "test");
            jr["diversity"] = diversity_to_json(r.diversity);
        }
        json times = json::object();
        for (const auto& [name, sec] : r.stage_seconds) times[name] = sec;
        jr["stage_seconds"] = times;
        reps.push_back(std::move(jr));
    }
    return {{"method", method},
            {"config_hash", config_hash},
            {"repeats", reps},
            {"completed_repeats", completed_repeats},
            {"mean_dice", mean_dice},
            {"std_dice", std_dice},
            {"mean_hd95", mean_hd95},
            {"baseline_mean_dice", baseline_mean_dice},
            {"baseline_std_dice", baseline_std_dice}};
}

std::string RunReport::to_text() const {
    std::ostringstream os;
    char buf[256];
    os << "method: " << method << "  (config " << config_hash << ")\n";
    std::snprintf(buf, sizeof(buf),
                  "test Dice%%: %.2f +/- %.2f over %d repeats (baseline %.2f +/- %.2f)\n",
                  mean_dice, std_dice, completed_repeats, baseline_mean_dice,
                  baseline_std_dice);
    os << buf;
    for (std::size_t i = 0; i < repeats.size(); ++i) {
        const auto& r = repeats[i];
        if (r.completed) {
            std::snprintf(buf, sizeof(buf),
                          "  repeat %zu (seed %llu): dice %.2f, hd95 %.2f, kept %d/%d\n", i,
                          static_cast<unsigned long long>(r.seed), r.metrics.mean_dice,
                          r.metrics.mean_hd95, r.n_kept, r.n_generated);
        } else if (r.partial) {
            std::snprintf(buf, sizeof(buf), "  repeat %zu (seed %llu): partial run\n", i,
                          static_cast<unsigned long long>(r.seed));
        } else {
            std::snprintf(buf, sizeof(buf), "  repeat %zu (seed %llu): FAILED: %s\n", i,
                          static_cast<unsigned long long>(r.seed), r.error.c_str());
        }
        os << buf;
    }
    return os.str();
}

RunReport run_pipeline(const ExperimentConfig& cfg, PipelineStage stop_after) {
    cfg.validate();
    const fs::path out(cfg.output_dir);
    fs::create_directories(out);
    const json cfg_json = to_json(cfg);
    write_text_atomic(out / "effective_config.json", cfg_json.dump(2) + "\n");

    RunReport report;
    report.method = to_string(cfg.method);
    report.config_hash = hash_json(cfg_json);

    // dataset stage (shared across repeats)
    StageRunner top(out);
    const std::string h_data = hash_strings({cfg_json.at("dataset").dump()});
    top.run("dataset", h_data, {out / "dataset" / "manifest.jsonl"}, [&] {
        std::vector<LabeledSample> samples =
            cfg.dataset_path.empty()
                ? synth_phantoms(cfg.dataset)
                : load_dataset(cfg.dataset_path, cfg.dataset.n_classes);
        save_dataset(samples, out / "dataset");
    });
    const std::vector<LabeledSample> all =
        load_dataset(out / "dataset", cfg.dataset.n_classes);

    const NoiseSchedule sched = cfg.schedule();
    const bool uses_ldm =
        cfg.method == Method::augpaint || cfg.method == Method::cond_augpaint;

    for (int r = 0; r < cfg.repeats; ++r) {
        RepeatResult rr;
        rr.seed = cfg.seeds[std::size_t(r)];
        try {
            StageRunner sr(out / ("repeat_" + std::to_string(r)));
            const fs::path rdir = sr.dir();
            auto* times = &rr.stage_seconds;

            // --- split ---------------------------------------------------
            const std::string h_split = hash_strings(
                {h_data, std::to_string(rr.seed), json(cfg.split_ratios).dump(),
                 std::to_string(cfg.labeled_cases)});
            sr.run("split", h_split, {rdir / "split.json"}, [&] {
                DatasetSplit ds = split_dataset(all, cfg.split_ratios, rr.seed);
                auto [sl, su] = sample_labeled_subset(
                    ds.unlabeled, cfg.labeled_cases,
                    derive_stream_seed(rr.seed, "subset", 0));
                json sj{{"seed", rr.seed},
                        {"labeled_cases", case_id_json(sl)},
                        {"train_cases", case_id_json(ds.unlabeled)},
                        {"val_cases", case_id_json(ds.val)},
                        {"test_cases", case_id_json(ds.test)}};
                write_text_atomic(rdir / "split.json", sj.dump(2) + "\n");
            }, times);
            if (stop_after == PipelineStage::split) {
                rr.partial = true;
                report.repeats.push_back(std::move(rr));
                continue;
            }
            const RepeatData data = materialize_split(all, read_json_file(rdir / "split.json"));

            // --- AE + LDM (diffusion-based methods only) ------------------
            Autoencoder ae;
            DiffusionModel ldm;
            std::string h_ldm;
            if (uses_ldm) {
                const std::string h_ae = hash_strings({h_split, cfg_json.at("ae").dump()});
                sr.run("ae", h_ae, {rdir / "ae.apck"}, [&] {
                    std::vector<LabeledSample> pool = data.labeled;
                    pool.insert(pool.end(), data.unlabeled.begin(), data.unlabeled.end());
                    AutoencoderConfig acfg = cfg.ae;
                    acfg.init_seed = derive_stream_seed(rr.seed, "ae_init", 0);
                    AeTrainConfig atr = cfg.ae_train;
                    atr.seed = derive_stream_seed(rr.seed, "ae_train", 0);
                    Autoencoder trained = train_autoencoder(pool, acfg, atr);
                    trained.save(rdir / "ae.apck", h_ae);
                }, times);
                ae = Autoencoder::load(rdir / "ae.apck");
                if (stop_after == PipelineStage::ae) {
                    rr.partial = true;
                    report.repeats.push_back(std::move(rr));
                    continue;
                }

                const bool conditional = cfg.method == Method::cond_augpaint;
                h_ldm = hash_strings({h_ae, cfg_json.at("diffusion").dump(),
                                      conditional ? "cond" : "uncond"});
                sr.run("ldm", h_ldm, {rdir / "ldm.apck"}, [&] {
                    std::vector<LatentGrid> latents;
                    std::vector<Tensor> images;
                    for (const auto* set : {&data.labeled, &data.unlabeled}) {
                        for (const auto& s : *set) {
                            latents.push_back(ae.encode(s.image, s.id));
                            if (conditional) images.push_back(s.image);
                        }
                    }
                    DiffusionConfig dcfg = cfg.diffusion;
                    dcfg.conditional = conditional;
                    dcfg.latent_channels = cfg.ae.latent_channels;
                    dcfg.init_seed = derive_stream_seed(rr.seed, "ldm_init", 0);
                    LdmTrainConfig ltr = cfg.ldm_train;
                    ltr.seed = derive_stream_seed(rr.seed, "ldm_train", 0);
                    DiffusionModel trained =
                        train_ldm(latents, dcfg, sched, ltr,
                                  conditional ? &images : nullptr,
                                  conditional ? &ae : nullptr);
                    trained.save(rdir / "ldm.apck", h_ldm);
                }, times);
                ldm = DiffusionModel::load(rdir / "ldm.apck");
            }
            if (stop_after == PipelineStage::ae || stop_after == PipelineStage::ldm) {
                rr.partial = true;
                report.repeats.push_back(std::move(rr));
                continue;
            }

            // --- baseline segmenter (also the filter scorer) --------------
            const std::string h_base =
                hash_strings({h_split, cfg_json.at("seg").dump(), "baseline"});
            sr.run("baseline_seg", h_base,
                   {rdir / "baseline_seg.apck", rdir / "baseline_metrics.json"}, [&] {
                SegConfig scfg = cfg.seg;
                scfg.num_classes = cfg.dataset.n_classes;
                scfg.seed = derive_stream_seed(rr.seed, "seg_base", 0);
                scfg.init_seed = derive_stream_seed(rr.seed, "seg_base_init", 0);
                SegModel model = train_seg(to_train_pairs(data.labeled), scfg);
                model.save(rdir / "baseline_seg.apck", h_base);
                const SegMetrics m = evaluate(model, data.test);
                write_text_atomic(rdir / "baseline_metrics.json",
                                  metrics_to_json(m, "test").dump(2) + "\n");
            }, times);
            rr.baseline_metrics = metrics_from_json(read_json_file(rdir / "baseline_metrics.json"));
            if (stop_after == PipelineStage::baseline_seg) {
                rr.partial = true;
                report.repeats.push_back(std::move(rr));
                continue;
            }

            if (cfg.method == Method::baseline) {
                rr.metrics = rr.baseline_metrics;
                write_text_atomic(rdir / "metrics.json",
                                  metrics_to_json(rr.metrics, "test").dump(2) + "\n");
                write_text_atomic(rdir / "metrics.txt", rr.metrics.to_table());
                rr.completed = true;
                report.repeats.push_back(std::move(rr));
                continue;
            }

            // --- generation ------------------------------------------------
            InpaintConfig icfg = cfg.inpaint;
            icfg.seed = derive_stream_seed(rr.seed, "gen", 0);
            std::string h_gen;
            if (cfg.method == Method::rand_aug) {
                h_gen = hash_strings({h_split, "rand_aug",
                                      std::to_string(cfg.inpaint.samples_per_pair)});
            } else {
                h_gen = hash_strings({h_ldm, cfg_json.at("inpaint").dump()});
            }
            sr.run("generate", h_gen,
                   {rdir / "generated" / "provenance.jsonl", rdir / "diversity.json"}, [&] {
                std::vector<GeneratedPair> pairs;
                if (cfg.method == Method::rand_aug) {
                    pairs = rand_aug(data.labeled, cfg.inpaint.samples_per_pair, icfg.seed);
                } else {
                    pairs = generate_batch(data.labeled, ae, ldm, sched, icfg);
                }
                save_generated(pairs, rdir / "generated", icfg);
                write_text_atomic(rdir / "diversity.json",
                                  diversity_to_json(diversity_report(pairs)).dump(2) + "\n");
            }, times);
            rr.diversity = diversity_from_json(read_json_file(rdir / "diversity.json"));
            if (stop_after == PipelineStage::generate) {
                rr.partial = true;
                report.repeats.push_back(std::move(rr));
                continue;
            }

            // --- filtering -------------------------------------------------
            const std::string h_filter =
                hash_strings({h_gen, h_base, to_string(cfg.filter_metric)});
            sr.run("filter", h_filter, {rdir / "filter_report.json"}, [&] {
                std::vector<GeneratedPair> pairs = load_generated(rdir / "generated");
                SegModel scorer = SegModel::load(rdir / "baseline_seg.apck");
                FilterConfig fc;
                fc.metric = cfg.filter_metric;
                FilterReport frep;
                filter_pipeline(data.labeled, std::move(pairs), fc, &scorer, &frep);
                frep.write_json(rdir / "filter_report.json");
            }, times);
            const json frep = read_json_file(rdir / "filter_report.json");
            rr.n_kept = frep.at("n_kept").get<int>();
            rr.n_generated = rr.n_kept + frep.at("n_discarded").get<int>();
            if (stop_after == PipelineStage::filter) {
                rr.partial = true;
                report.repeats.push_back(std::move(rr));
                continue;
            }

            // --- final segmenter on S^l ∪ kept pairs -----------------------
            const std::string h_seg =
                hash_strings({h_filter, cfg_json.at("seg").dump(), "final"});
            sr.run("seg", h_seg, {rdir / "seg.apck", rdir / "metrics.json"}, [&] {
                std::vector<GeneratedPair> pairs = load_generated(rdir / "generated");
                std::vector<TrainPair> trainset = to_train_pairs(data.labeled);
                for (const auto& kept : frep.at("kept")) {
                    const std::string id = kept.at("id").get<std::string>();
                    const auto it = std::find_if(pairs.begin(), pairs.end(),
                                                 [&](const GeneratedPair& p) { return p.id == id; });
                    if (it == pairs.end()) throw IoError("kept pair missing: " + id);
                    trainset.push_back(TrainPair{it->image, it->label});
                }
                SegConfig scfg = cfg.seg;
                scfg.num_classes = cfg.dataset.n_classes;
                scfg.seed = derive_stream_seed(rr.seed, "seg_final", 0);
                scfg.init_seed = derive_stream_seed(rr.seed, "seg_final_init", 0);
                SegModel model = train_seg(trainset, scfg);
                model.save(rdir / "seg.apck", h_seg);
                const SegMetrics m = evaluate(model, data.test);
                write_text_atomic(rdir / "metrics.json",
                                  metrics_to_json(m, "test").dump(2) + "\n");
                write_text_atomic(rdir / "metrics.txt", m.to_table());
            }, times);
            rr.metrics = metrics_from_json(read_json_file(rdir / "metrics.json"));
            rr.completed = true;
        } catch (const std::exception& e) {
            rr.completed = false;
            rr.error = e.what();
        }
        report.repeats.push_back(std::move(rr));
    }

    std::vector<double> dices, hd95s, base_dices;
    for (const auto& r : report.repeats) {
        if (!r.completed) continue;
        ++report.completed_repeats;
        dices.push_back(r.metrics.mean_dice);
        if (!std::isnan(r.metrics.mean_hd95)) hd95s.push_back(r.metrics.mean_hd95);
        base_dices.push_back(r.baseline_metrics.mean_dice);
    }
    const Stats sd = mean_std(dices);
    report.mean_dice = sd.mean;
    report.std_dice = sd.stddev;
    report.mean_hd95 = mean_std(hd95s).mean;
    const Stats sb = mean_std(base_dices);
    report.baseline_mean_dice = sb.mean;
    report.baseline_std_dice = sb.stddev;

    if (stop_after == PipelineStage::all) {
        write_text_atomic(out / "report.json", report.to_json().dump(2) + "\n");
        write_text_atomic(out / "report.txt", report.to_text());
    }
    return report;
}

void seed_stage_cache(const fs::path& from, const fs::path& to) {
    if (!fs::exists(from)) return;
    fs::create_directories(to);
    auto copy_if_missing = [](const fs::path& src, const fs::path& dst) {
        if (!fs::exists(src) || fs::exists(dst)) return;
        fs::create_directories(dst.parent_path());
        if (fs::is_directory(src)) {
            fs::copy(src, dst, fs::copy_options::recursive);
        } else {
            fs::copy_file(src, dst);
        }
    };
    copy_if_missing(from / "dataset", to / "dataset");
    copy_if_missing(from / "dataset.done.json", to / "dataset.done.json");
    for (const auto& entry : fs::directory_iterator(from)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("repeat_", 0) != 0) continue;
        for (const char* artifact :
             {"split.json", "split.done.json", "ae.apck", "ae.done.json", "ldm.apck",
              "ldm.done.json", "baseline_seg.apck", "baseline_seg.done.json",
              "baseline_metrics.json"}) {
            copy_if_missing(entry.path() / artifact, to / name / artifact);
        }
    }
}

std::vector<SweepPoint> sweep_samples_per_pair(const ExperimentConfig& cfg,
                                               const std::vector<int>& values) {
    if (values.empty()) throw ConfigError("sweep: no values");
    const fs::path out(cfg.output_dir);
    std::vector<SweepPoint> curve;
    fs::path prev_dir;
    for (int v : values) {
        ExperimentConfig sub = cfg;
        sub.inpaint.samples_per_pair = v;
        sub.output_dir = (out / ("sweep_samples_" + std::to_string(v))).string();
        if (!prev_dir.empty()) seed_stage_cache(prev_dir, sub.output_dir);
        const RunReport rep = run_pipeline(sub);
        curve.push_back(SweepPoint{static_cast<double>(v), rep.mean_dice, rep.std_dice});
        prev_dir = sub.output_dir;
    }
    json j = json::array();
    std::ostringstream txt;
    txt << "samples_per_pair | mean Dice% | std\n";
    PlotSeries series{"mean_dice", {}, {}};
    for (const auto& p : curve) {
        j.push_back({{"samples_per_pair", p.value},
                     {"mean_dice", p.mean_dice},
                     {"std_dice", p.std_dice}});
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%16.0f | %10.2f | %.2f\n", p.value, p.mean_dice,
                      p.std_dice);
        txt << buf;
        series.x.push_back(p.value);
        series.y.push_back(p.mean_dice);
    }
    write_text_atomic(out / "sweep_samples.json", j.dump(2) + "\n");
    write_text_atomic(out / "sweep_samples.txt", txt.str());
    write_line_plot(out / "sweep_samples.png", "samples per pair", "samples", "dice",
                    {series});
    return curve;
}

std::vector<CaseSweepPoint> sweep_labeled_cases(const ExperimentConfig& cfg,
                                                const std::vector<int>& values) {
    if (values.empty()) throw ConfigError("sweep: no values");
    const fs::path out(cfg.output_dir);
    std::vector<CaseSweepPoint> curve;
    for (int v : values) {
        CaseSweepPoint pt;
        pt.labeled_cases = v;

        ExperimentConfig base = cfg;
        base.method = Method::baseline;
        base.labeled_cases = v;
        base.output_dir = (out / ("cases_" + std::to_string(v) + "_baseline")).string();
        const RunReport base_rep = run_pipeline(base);
        pt.baseline_mean_dice = base_rep.mean_dice;

        ExperimentConfig aug = cfg;
        aug.method = Method::augpaint;
        aug.labeled_cases = v;
        aug.output_dir = (out / ("cases_" + std::to_string(v) + "_augpaint")).string();
        seed_stage_cache(base.output_dir, aug.output_dir);
        const RunReport aug_rep = run_pipeline(aug);
        pt.augpaint_mean_dice = aug_rep.mean_dice;
        pt.gap = pt.augpaint_mean_dice - pt.baseline_mean_dice;
        curve.push_back(pt);
    }
    json j = json::array();
    std::ostringstream txt;
    txt << "labeled_cases | baseline | augpaint | gap\n";
    PlotSeries sb{"baseline", {}, {}}, sa{"augpaint", {}, {}};
    for (const auto& p : curve) {
        j.push_back({{"labeled_cases", p.labeled_cases},
                     {"baseline_mean_dice", p.baseline_mean_dice},
                     {"augpaint_mean_dice", p.augpaint_mean_dice},
                     {"gap", p.gap}});
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%13d | %8.2f | %8.2f | %+.2f\n", p.labeled_cases,
                      p.baseline_mean_dice, p.augpaint_mean_dice, p.gap);
        txt << buf;
        sb.x.push_back(p.labeled_cases);
        sb.y.push_back(p.baseline_mean_dice);
        sa.x.push_back(p.labeled_cases);
        sa.y.push_back(p.augpaint_mean_dice);
    }
    write_text_atomic(out / "sweep_cases.json", j.dump(2) + "\n");
    write_text_atomic(out / "sweep_cases.txt", txt.str());
    write_line_plot(out / "sweep_cases.png", "labeled cases", "cases", "dice", {sb, sa});
    return curve;
}

MaskAblationReport ablate_mask_type(const ExperimentConfig& cfg) {
    const fs::path out(cfg.output_dir);
    MaskAblationReport rep;

    ExperimentConfig box = cfg;
    box.method = Method::augpaint;
    box.inpaint.mask_kind = MaskKind::box;
    box.output_dir = (out / "mask_box").string();
    rep.box = run_pipeline(box);

    ExperimentConfig label = cfg;
    label.method = Method::augpaint;
    label.inpaint.mask_kind = MaskKind::label_shape;
    label.output_dir = (out / "mask_label").string();
    seed_stage_cache(box.output_dir, label.output_dir);
    rep.label = run_pipeline(label);

    // coverage stats over the first repeat's labeled slices
    const auto all = load_dataset(fs::path(box.output_dir) / "dataset", cfg.dataset.n_classes);
    const json split_json =
        read_json_file(fs::path(box.output_dir) / "repeat_0" / "split.json");
    double box_cov = 0.0, label_cov = 0.0;
    int count = 0;
    for (const auto& s : all) {
        const bool is_labeled = std::any_of(
            split_json.at("labeled_cases").begin(), split_json.at("labeled_cases").end(),
            [&](const json& v) { return v.get<std::string>() == s.case_id; });
        if (!is_labeled || s.label.count_nonzero() == 0) continue;
        box_cov += mask_coverage(get_box_mask(s.label, cfg.inpaint.mask_padding));
        label_cov += mask_coverage(get_label_mask(s.label));
        ++count;
    }
    if (count > 0) {
        rep.box_coverage = box_cov / count;
        rep.label_coverage = label_cov / count;
    }

    json j{{"box", rep.box.to_json()},
           {"label", rep.label.to_json()},
           {"box_mean_coverage", rep.box_coverage},
           {"label_mean_coverage", rep.label_coverage}};
    std::ostringstream txt;
    char buf[160];
    txt << "mask type | mean Dice% | std  | mean coverage\n";
    std::snprintf(buf, sizeof(buf), "box       | %10.2f | %4.2f | %.3f\n", rep.box.mean_dice,
                  rep.box.std_dice, rep.box_coverage);
    txt << buf;
    std::snprintf(buf, sizeof(buf), "label     | %10.2f | %4.2f | %.3f\n",
                  rep.label.mean_dice, rep.label.std_dice, rep.label_coverage);
    txt << buf;
    write_text_atomic(out / "ablate_mask.json", j.dump(2) + "\n");
    write_text_atomic(out / "ablate_mask.txt", txt.str());
    return rep;
}

CondCompareReport compare_cond_uncond(const ExperimentConfig& cfg) {
    const fs::path out(cfg.output_dir);
    CondCompareReport rep;

    ExperimentConfig uncond = cfg;
    uncond.method = Method::augpaint;
    uncond.output_dir = (out / "uncond").string();
    rep.uncond = run_pipeline(uncond);

    ExperimentConfig cond = cfg;
    cond.method = Method::cond_augpaint;
    cond.output_dir = (out / "cond").string();
    seed_stage_cache(uncond.output_dir, cond.output_dir);
    rep.cond = run_pipeline(cond);

    std::vector<double> ud, cd;
    for (const auto& r : rep.uncond.repeats) {
        if (r.completed) ud.push_back(r.diversity.mean_over_sources);
    }
    for (const auto& r : rep.cond.repeats) {
        if (r.completed) cd.push_back(r.diversity.mean_over_sources);
    }
    rep.uncond_diversity = mean_std(ud).mean;
    rep.cond_diversity = mean_std(cd).mean;

    json j{{"uncond", rep.uncond.to_json()},
           {"cond", rep.cond.to_json()},
           {"uncond_diversity", rep.uncond_diversity},
           {"cond_diversity", rep.cond_diversity},
           {"dice_delta", rep.uncond.mean_dice - rep.cond.mean_dice}};
    std::ostringstream txt;
    char buf[160];
    txt << "variant        | mean Dice% | std  | diversity(L2)\n";
    std::snprintf(buf, sizeof(buf), "AugPaint       | %10.2f | %4.2f | %.3f\n",
                  rep.uncond.mean_dice, rep.uncond.std_dice, rep.uncond_diversity);
    txt << buf;
    std::snprintf(buf, sizeof(buf), "cond AugPaint  | %10.2f | %4.2f | %.3f\n",
                  rep.cond.mean_dice, rep.cond.std_dice, rep.cond_diversity);
    txt << buf;
    write_text_atomic(out / "ablate_cond.json", j.dump(2) + "\n");
    write_text_atomic(out / "ablate_cond.txt", txt.str());
    return rep;
}

DiversityStudyResult diversity_study(const ExperimentConfig& cfg,
                                     const DiversityStudyOptions& opts) {
    ExperimentConfig base = cfg;
    base.validate();
    const fs::path out = fs::path(cfg.output_dir) / "diversity_study";
    fs::create_directories(out);
    const json cfg_json = to_json(cfg);
    const std::string h_data = hash_strings({cfg_json.at("dataset").dump()});

    StageRunner top(out);
    top.run("dataset", h_data, {out / "dataset" / "manifest.jsonl"}, [&] {
        std::vector<LabeledSample> samples =
            cfg.dataset_path.empty()
                ? synth_phantoms(cfg.dataset)
                : load_dataset(cfg.dataset_path, cfg.dataset.n_classes);
        save_dataset(samples, out / "dataset");
    });
    const auto all = load_dataset(out / "dataset", cfg.dataset.n_classes);
    const NoiseSchedule sched = cfg.schedule();

    DiversityStudyResult result;
    for (int r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t seed = cfg.seeds[std::size_t(r)];
        StageRunner sr(out / ("repeat_" + std::to_string(r)));
        const fs::path rdir = sr.dir();

        const std::string h_split = hash_strings(
            {h_data, std::to_string(seed), json(cfg.split_ratios).dump(),
             std::to_string(cfg.labeled_cases)});
        sr.run("split", h_split, {rdir / "split.json"}, [&] {
            DatasetSplit ds = split_dataset(all, cfg.split_ratios, seed);
            auto [sl, su] = sample_labeled_subset(ds.unlabeled, cfg.labeled_cases,
                                                  derive_stream_seed(seed, "subset", 0));
            json sj{{"seed", seed},
                    {"labeled_cases", case_id_json(sl)},
                    {"train_cases", case_id_json(ds.unlabeled)},
                    {"val_cases", case_id_json(ds.val)},
                    {"test_cases", case_id_json(ds.test)}};
            write_text_atomic(rdir / "split.json", sj.dump(2) + "\n");
        });
        const RepeatData data = materialize_split(all, read_json_file(rdir / "split.json"));

        const std::string h_ae = hash_strings({h_split, cfg_json.at("ae").dump()});
        sr.run("ae", h_ae, {rdir / "ae.apck"}, [&] {
            std::vector<LabeledSample> pool = data.labeled;
            pool.insert(pool.end(), data.unlabeled.begin(), data.unlabeled.end());
            AutoencoderConfig acfg = cfg.ae;
            acfg.init_seed = derive_stream_seed(seed, "ae_init", 0);
            AeTrainConfig atr = cfg.ae_train;
            atr.seed = derive_stream_seed(seed, "ae_train", 0);
            train_autoencoder(pool, acfg, atr).save(rdir / "ae.apck", h_ae);
        });
        const Autoencoder ae = Autoencoder::load(rdir / "ae.apck");

        LdmTrainConfig ltr = cfg.ldm_train;
        if (opts.ldm_epochs > 0) ltr.epochs = opts.ldm_epochs;
        // overfit regime: labeled latents only
        std::vector<LatentGrid> latents;
        std::vector<Tensor> images;
        for (const auto& s : data.labeled) {
            latents.push_back(ae.encode(s.image, s.id));
            images.push_back(s.image);
        }

        const std::string h_study = hash_strings(
            {h_ae, cfg_json.at("diffusion").dump(), std::to_string(ltr.epochs),
             std::to_string(opts.min_mask_area_frac), std::to_string(opts.n_sources),
             std::to_string(opts.samples_per_source)});
        sr.run("diversity", h_study, {rdir / "diversity_study.json"}, [&] {
            DiffusionConfig ucfg = cfg.diffusion;
            ucfg.conditional = false;
            ucfg.latent_channels = cfg.ae.latent_channels;
            ucfg.init_seed = derive_stream_seed(seed, "ldm_u_init", 0);
            LdmTrainConfig utr = ltr;
            utr.seed = derive_stream_seed(seed, "ldm_u_train", 0);
            DiffusionModel uncond = train_ldm(latents, ucfg, sched, utr);

            DiffusionConfig ccfg = ucfg;
            ccfg.conditional = true;
            ccfg.init_seed = derive_stream_seed(seed, "ldm_c_init", 0);
            LdmTrainConfig ctr = ltr;
            ctr.seed = derive_stream_seed(seed, "ldm_c_train", 0);
            DiffusionModel cond = train_ldm(latents, ccfg, sched, ctr, &images, &ae);

            std::vector<LabeledSample> sources;
            for (const auto& s : data.labeled) {
                if (s.label.count_nonzero() == 0) continue;
                sources.push_back(s);
                if (static_cast<int>(sources.size()) >= opts.n_sources) break;
            }
            InpaintConfig icfg = cfg.inpaint;
            icfg.samples_per_pair = opts.samples_per_source;
            icfg.min_mask_area_frac = opts.min_mask_area_frac;
            icfg.seed = derive_stream_seed(seed, "diversity_gen", 0);

            const auto upairs = generate_batch(sources, ae, uncond, sched, icfg);
            const auto cpairs = generate_batch(sources, ae, cond, sched, icfg);
            const double u = diversity_report(upairs).mean_over_sources;
            const double c = diversity_report(cpairs).mean_over_sources;
            write_text_atomic(rdir / "diversity_study.json",
                              json{{"uncond_mean_l2", u}, {"cond_mean_l2", c}}.dump(2) + "\n");
        });
        const json dj = read_json_file(rdir / "diversity_study.json");
        result.per_repeat.emplace_back(dj.at("uncond_mean_l2").get<double>(),
                                       dj.at("cond_mean_l2").get<double>());
    }
    result.repeats = static_cast<int>(result.per_repeat.size());
    for (const auto& [u, c] : result.per_repeat) {
        result.uncond_mean_l2 += u;
        result.cond_mean_l2 += c;
    }
    if (result.repeats > 0) {
        result.uncond_mean_l2 /= result.repeats;
        result.cond_mean_l2 /= result.repeats;
    }
    write_text_atomic(out / "diversity_study.json",
                      json{{"repeats", result.repeats},
                           {"uncond_mean_l2", result.uncond_mean_l2},
                           {"cond_mean_l2", result.cond_mean_l2}}
                              .dump(2) +
                          "\n");
    return result;
}

}  // namespace augpaint
