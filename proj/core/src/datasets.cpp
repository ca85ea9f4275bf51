#include "augpaint/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "augpaint/checkpoint.hpp"
#include "augpaint/errors.hpp"
#include "augpaint/png_io.hpp"
#include "augpaint/rng.hpp"

namespace augpaint {

namespace {

using json = nlohmann::json;

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

std::array<double, 3> class_color(int c) {
    static const std::array<std::array<double, 3>, 3> fixed = {{
        {0.84, 0.36, 0.34},
        {0.32, 0.44, 0.88},
        {0.36, 0.80, 0.44},
    }};
    if (c >= 1 && c <= 3) return fixed[static_cast<std::size_t>(c - 1)];
    return hsv_to_rgb(std::fmod(0.618033988 * c, 1.0), 0.6, 0.8);
}

void box_blur(std::vector<double>& g, int h, int w, int radius) {
    if (radius <= 0) return;
    std::vector<double> tmp(g.size());
    const double inv = 1.0 / (2 * radius + 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d) {
                acc += g[std::size_t(y) * w + std::clamp(x + d, 0, w - 1)];
            }
            tmp[std::size_t(y) * w + x] = acc * inv;
        }
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d) {
                acc += tmp[std::size_t(std::clamp(y + d, 0, h - 1)) * w + x];
            }
            g[std::size_t(y) * w + x] = acc * inv;
        }
    }
}

struct Ellipse {
    double cy, cx, ry, rx, phi;

    bool contains(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double u = (dx * std::cos(phi) + dy * std::sin(phi)) / rx;
        const double v = (-dx * std::sin(phi) + dy * std::cos(phi)) / ry;
        return u * u + v * v <= 1.0;
    }
};

void paint_ellipse(Tensor& img, GridU8* label, const Ellipse& e,
                   const std::array<double, 3>& color, double alpha, int class_id,
                   Rng& rng, double pixel_noise) {
    const int size = img.shape().h;
    const double rmax = std::max(e.rx, e.ry);
    const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - rmax)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(e.cy + rmax)));
    const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - rmax)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(e.cx + rmax)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            if (!e.contains(y, x)) continue;
            const double n = pixel_noise > 0 ? pixel_noise * rng.normal() : 0.0;
            for (int ch = 0; ch < 3; ++ch) {
                const double cur = img.at(0, ch, y, x);
                const double v = (1.0 - alpha) * cur + alpha * (color[std::size_t(ch)] + n);
                img.at(0, ch, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
            if (label) label->at(y, x) = static_cast<std::uint8_t>(class_id);
        }
    }
}

struct CaseStyle {
    std::array<double, 3> base;
    double grad_amp = 0.0;
    double grad_theta = 0.0;
    double noise_amp = 0.0;
    int noise_radius = 2;
    double distractor_mix = 0.5;
    std::vector<std::array<double, 2>> organ_center;  // fraction coords per fg class
};

CaseStyle draw_case_style(const PhantomConfig& cfg, Rng& rng) {
    CaseStyle st;
    for (auto& b : st.base) b = rng.uniform(0.20, 0.62);
    st.grad_amp = cfg.bg_gradient * rng.uniform(0.4, 1.0);
    st.grad_theta = rng.uniform(0.0, 6.283185307179586);
    st.noise_amp = cfg.bg_noise_amp * rng.uniform(0.5, 1.0);
    st.noise_radius =
        static_cast<int>(rng.uniform_int(cfg.bg_noise_scale_min, cfg.bg_noise_scale_max));
    st.distractor_mix = rng.uniform(0.35, 0.65);
    const int fg = cfg.n_classes - 1;
    const double jitter = rng.uniform(-0.3, 0.3);
    for (int c = 0; c < fg; ++c) {
        const double a = 6.283185307179586 * c / fg + jitter;
        st.organ_center.push_back({0.5 + 0.22 * std::sin(a), 0.5 + 0.22 * std::cos(a)});
    }
    return st;
}

LabeledSample synth_slice(const PhantomConfig& cfg, const CaseStyle& st,
                          const std::string& case_id, int slice_index) {
    const int size = cfg.image_size;
    std::ostringstream id;
    id << case_id << "_s" << (slice_index < 10 ? "0" : "") << slice_index;

    Rng rng(derive_stream_seed(cfg.seed, case_id + "/slice",
                               static_cast<std::uint64_t>(slice_index)));

    LabeledSample s;
    s.id = id.str();
    s.case_id = case_id;
    s.image = Tensor(Shape{1, 3, size, size});
    s.label = GridU8(size, size, 0);

    // background: base + directional gradient
    const double ct = std::cos(st.grad_theta), snt = std::sin(st.grad_theta);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double u = (double(x) / size - 0.5) * ct + (double(y) / size - 0.5) * snt;
            for (int ch = 0; ch < 3; ++ch) {
                s.image.at(0, ch, y, x) =
                    static_cast<float>(std::clamp(st.base[std::size_t(ch)] + st.grad_amp * u, 0.0, 1.0));
            }
        }
    }

    // band-limited noise: blurred white minus a wider blur, unit-normalized
    {
        std::vector<double> white(std::size_t(size) * size);
        for (auto& v : white) v = rng.normal();
        std::vector<double> low = white;
        box_blur(low, size, size, st.noise_radius);
        std::vector<double> lower = low;
        box_blur(lower, size, size, 2 * st.noise_radius);
        double sq = 0.0;
        for (std::size_t i = 0; i < low.size(); ++i) {
            low[i] -= lower[i];
            sq += low[i] * low[i];
        }
        const double stddev = std::sqrt(sq / low.size());
        if (stddev > 1e-12) {
            const double k = st.noise_amp / stddev;
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const double n = k * low[std::size_t(y) * size + x];
                    for (int ch = 0; ch < 3; ++ch) {
                        s.image.at(0, ch, y, x) = static_cast<float>(
                            std::clamp(double(s.image.at(0, ch, y, x)) + n, 0.0, 1.0));
                    }
                }
            }
        }
    }

    // distractor blobs: unlabeled background structures whose colors sit
    // between the case palette and the class colors
    const int n_distract =
        static_cast<int>(rng.uniform_int(cfg.distractors_min, cfg.distractors_max));
    for (int d = 0; d < n_distract; ++d) {
        Ellipse e;
        e.cy = rng.uniform(0.08, 0.92) * size;
        e.cx = rng.uniform(0.08, 0.92) * size;
        e.ry = rng.uniform(2.0, 0.8 * cfg.radius_max);
        e.rx = rng.uniform(2.0, 0.8 * cfg.radius_max);
        e.phi = rng.uniform(0.0, 3.141592653589793);
        const int target = static_cast<int>(rng.uniform_int(1, cfg.n_classes - 1));
        const auto cc = class_color(target);
        std::array<double, 3> color;
        for (int ch = 0; ch < 3; ++ch) {
            color[std::size_t(ch)] = st.distractor_mix * st.base[std::size_t(ch)] +
                                     (1.0 - st.distractor_mix) * cc[std::size_t(ch)];
        }
        paint_ellipse(s.image, nullptr, e, color, 0.85, 0, rng, 0.01);
    }

    // foreground classes, painted last so labels stay pixel-exact
    for (int c = 1; c < cfg.n_classes; ++c) {
        if (!rng.bernoulli(cfg.class_presence_prob)) continue;
        const auto& oc = st.organ_center[std::size_t(c - 1)];
        std::array<double, 3> color = class_color(c);
        for (auto& v : color) {
            v = std::clamp(v + rng.uniform(-cfg.fg_jitter, cfg.fg_jitter), 0.0, 1.0);
        }
        const int n_ell = static_cast<int>(rng.uniform_int(cfg.ellipses_min, cfg.ellipses_max));
        double cy0 = oc[0] * size + rng.uniform(-0.06, 0.06) * size;
        double cx0 = oc[1] * size + rng.uniform(-0.06, 0.06) * size;
        cy0 = std::clamp(cy0, 3.0, size - 4.0);
        cx0 = std::clamp(cx0, 3.0, size - 4.0);
        for (int eidx = 0; eidx < n_ell; ++eidx) {
            Ellipse e;
            e.ry = rng.uniform(cfg.radius_min, cfg.radius_max);
            e.rx = rng.uniform(cfg.radius_min, cfg.radius_max);
            e.phi = rng.uniform(0.0, 3.141592653589793);
            if (eidx == 0) {
                e.cy = cy0;
                e.cx = cx0;
            } else {
                e.cy = std::clamp(cy0 + rng.uniform(-0.8, 0.8) * e.ry, 2.0, size - 3.0);
                e.cx = std::clamp(cx0 + rng.uniform(-0.8, 0.8) * e.rx, 2.0, size - 3.0);
            }
            paint_ellipse(s.image, &s.label, e, color, 1.0, c, rng, 0.015);
        }
    }
    return s;
}

}  // namespace

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split: " + s);
}

void PhantomConfig::validate() const {
    if (n_cases < 1) throw ConfigError("phantom: n_cases must be >= 1");
    if (slices_per_case < 1) throw ConfigError("phantom: slices_per_case must be >= 1");
    if (image_size < 8) throw ConfigError("phantom: image_size must be >= 8");
    if (n_classes < 2) throw ConfigError("phantom: n_classes must be >= 2");
    if (radius_min < 1.0) {
        throw ConfigError("phantom: radius_min < 1 would allow zero-area shapes");
    }
    if (radius_max < radius_min) throw ConfigError("phantom: radius range inverted");
    if (radius_max >= image_size / 2.0) {
        throw ConfigError("phantom: radius_max too large for image_size");
    }
    if (ellipses_min < 1 || ellipses_max < ellipses_min) {
        throw ConfigError("phantom: invalid ellipse count range");
    }
    if (class_presence_prob < 0.0 || class_presence_prob > 1.0) {
        throw ConfigError("phantom: class_presence_prob outside [0,1]");
    }
    if (bg_noise_scale_min < 1 || bg_noise_scale_max < bg_noise_scale_min) {
        throw ConfigError("phantom: invalid noise scale range");
    }
    if (distractors_min < 0 || distractors_max < distractors_min) {
        throw ConfigError("phantom: invalid distractor count range");
    }
}

std::vector<LabeledSample> synth_phantoms(const PhantomConfig& cfg) {
    cfg.validate();
    std::vector<LabeledSample> out;
    out.reserve(static_cast<std::size_t>(cfg.n_cases) * cfg.slices_per_case);
    for (int k = 0; k < cfg.n_cases; ++k) {
        std::ostringstream cid;
        cid << "case_" << (k < 100 ? "0" : "") << (k < 10 ? "0" : "") << k;
        Rng case_rng(derive_stream_seed(cfg.seed, "case", static_cast<std::uint64_t>(k)));
        const CaseStyle st = draw_case_style(cfg, case_rng);
        for (int s = 0; s < cfg.slices_per_case; ++s) {
            out.push_back(synth_slice(cfg, st, cid.str(), s));
        }
    }
    return out;
}

std::vector<std::string> distinct_case_ids(const std::vector<LabeledSample>& samples) {
    std::vector<std::string> ids;
    for (const auto& s : samples) {
        if (std::find(ids.begin(), ids.end(), s.case_id) == ids.end()) {
            ids.push_back(s.case_id);
        }
    }
    return ids;
}

DatasetSplit split_dataset(const std::vector<LabeledSample>& samples,
                           std::array<double, 3> ratios, std::uint64_t seed) {
    double sum = 0.0;
    for (double r : ratios) {
        if (r < 0.0) throw ConfigError("split: ratios must be non-negative");
        sum += r;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");

    std::vector<std::string> cases = distinct_case_ids(samples);
    const int n = static_cast<int>(cases.size());
    if (n < 3) throw ConfigError("split: need at least 3 distinct cases");

    // largest-remainder seat counts; ties go to the earlier split
    std::array<int, 3> counts{};
    std::array<double, 3> rem{};
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = ratios[std::size_t(i)] * n;
        counts[std::size_t(i)] = static_cast<int>(std::floor(exact + 1e-12));
        rem[std::size_t(i)] = exact - counts[std::size_t(i)];
        assigned += counts[std::size_t(i)];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return rem[std::size_t(a)] > rem[std::size_t(b)]; });
    for (int seat = 0; seat < n - assigned; ++seat) {
        counts[std::size_t(order[std::size_t(seat % 3)])] += 1;
    }

    // deterministic case shuffle
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(cases[std::size_t(i)], cases[std::size_t(j)]);
    }

    auto split_of = [&](const std::string& cid) -> Split {
        int idx = 0;
        for (int i = 0; i < n; ++i) {
            if (cases[std::size_t(i)] == cid) {
                idx = i;
                break;
            }
        }
        if (idx < counts[0]) return Split::train;
        if (idx < counts[0] + counts[1]) return Split::val;
        return Split::test;
    };

    DatasetSplit out;
    for (const auto& s : samples) {
        LabeledSample copy = s;
        copy.split = split_of(s.case_id);
        switch (copy.split) {
            case Split::train: out.unlabeled.push_back(std::move(copy)); break;
            case Split::val: out.val.push_back(std::move(copy)); break;
            case Split::test: out.test.push_back(std::move(copy)); break;
        }
    }
    return out;
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>>
sample_labeled_subset(const std::vector<LabeledSample>& train_pool, int n_cases,
                      std::uint64_t seed) {
    if (n_cases < 1) throw ConfigError("labeled subset: a labeled set is mandatory");
    std::vector<std::string> cases = distinct_case_ids(train_pool);
    if (n_cases > static_cast<int>(cases.size())) {
        throw ConfigError("labeled subset: requested more cases than the pool has");
    }
    Rng rng(seed);
    for (int i = static_cast<int>(cases.size()) - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(cases[std::size_t(i)], cases[std::size_t(j)]);
    }
    std::vector<std::string> chosen(cases.begin(), cases.begin() + n_cases);

    std::vector<LabeledSample> labeled, unlabeled;
    for (const auto& s : train_pool) {
        LabeledSample copy = s;
        copy.split = Split::train;
        const bool is_labeled =
            std::find(chosen.begin(), chosen.end(), s.case_id) != chosen.end();
        copy.label_hidden = !is_labeled;
        (is_labeled ? labeled : unlabeled).push_back(std::move(copy));
    }
    return {std::move(labeled), std::move(unlabeled)};
}

LabeledSample resize_canonical(const LabeledSample& sample, int size) {
    if (size <= 0) throw ConfigError("resize_canonical: size must be positive");
    LabeledSample out = sample;
    out.image = resize_bilinear(sample.image, size, size);
    out.label = resize_nearest(sample.label, size, size);
    return out;
}

std::vector<GeneratedPair> rand_aug(const std::vector<LabeledSample>& labeled, int factor,
                                    std::uint64_t seed, const RandAugOptions& opts) {
    if (factor < 1) throw ConfigError("rand_aug: factor must be >= 1");
    std::vector<GeneratedPair> out;
    out.reserve(labeled.size() * static_cast<std::size_t>(factor));
    for (const auto& src : labeled) {
        for (int k = 0; k < factor; ++k) {
            Rng rng(derive_stream_seed(seed, src.id + "/randaug",
                                       static_cast<std::uint64_t>(k)));
            GeneratedPair p;
            p.id = src.id + "_ra" + std::to_string(k);
            p.source_id = src.id;
            p.seed = derive_stream_seed(seed, src.id + "/randaug",
                                        static_cast<std::uint64_t>(k));
            Tensor img = src.image;
            GridU8 lab = src.label;
            if (opts.rot90) {
                const int kq = static_cast<int>(rng.uniform_int(0, 3));
                img = rot90_image(img, kq);
                lab = rot90_grid(lab, kq);
            }
            if (opts.flips) {
                const bool fh = rng.bernoulli(0.5);
                const bool fv = rng.bernoulli(0.5);
                img = flip_image(img, fh, fv);
                lab = flip_grid(lab, fh, fv);
            }
            if (opts.max_translate_frac > 0.0) {
                const int m = static_cast<int>(
                    std::lround(opts.max_translate_frac * img.shape().h));
                if (m > 0) {
                    const int dy = static_cast<int>(rng.uniform_int(-m, m));
                    const int dx = static_cast<int>(rng.uniform_int(-m, m));
                    img = translate_image(img, dy, dx);
                    lab = translate_grid(lab, dy, dx);
                }
            }
            if (opts.brightness_delta > 0.0) {
                const float f = static_cast<float>(
                    rng.uniform(1.0 - opts.brightness_delta, 1.0 + opts.brightness_delta));
                img = scale_brightness(img, f);
            }
            p.image = std::move(img);
            p.label = std::move(lab);
            out.push_back(std::move(p));
        }
    }
    return out;
}

void save_dataset(const std::vector<LabeledSample>& samples,
                  const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "labels");
    std::ostringstream manifest;
    for (const auto& s : samples) {
        write_png_rgb(dir / "images" / (s.id + ".png"), s.image);
        write_png_gray(dir / "labels" / (s.id + ".png"), s.label);
        json rec{{"id", s.id}, {"case_id", s.case_id}, {"split", to_string(s.split)}};
        if (s.label_hidden) rec["label_hidden"] = true;
        manifest << rec.dump() << "\n";
    }
    write_text_atomic(dir / "manifest.jsonl", manifest.str());
}

std::vector<LabeledSample> load_dataset(const std::filesystem::path& dir,
                                        int expected_classes) {
    const auto manifest_path = dir / "manifest.jsonl";
    std::ifstream is(manifest_path);
    if (!is) throw IoError("manifest not found: " + manifest_path.string());

    std::vector<LabeledSample> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.contains("id") || !rec.contains("case_id") ||
            !rec.contains("split")) {
            throw IoError("bad manifest record at " + manifest_path.string() + ":" +
                          std::to_string(lineno));
        }
        LabeledSample s;
        s.id = rec["id"].get<std::string>();
        s.case_id = rec["case_id"].get<std::string>();
        s.split = split_from_string(rec["split"].get<std::string>());
        s.label_hidden = rec.value("label_hidden", false);

        const auto img_path = dir / "images" / (s.id + ".png");
        const auto lab_path = dir / "labels" / (s.id + ".png");
        if (!std::filesystem::exists(img_path)) {
            throw IoError("sample '" + s.id + "': missing file " + img_path.string());
        }
        if (!std::filesystem::exists(lab_path)) {
            throw IoError("sample '" + s.id + "': missing file " + lab_path.string());
        }
        s.image = read_png_rgb(img_path);
        s.label = read_png_gray(lab_path);
        if (s.image.shape().h != s.label.h || s.image.shape().w != s.label.w) {
            throw IoError("sample '" + s.id + "': image/label shape mismatch");
        }
        if (expected_classes > 0 && s.label.max_value() >= expected_classes) {
            throw IoError("sample '" + s.id + "': unknown class id " +
                          std::to_string(int(s.label.max_value())));
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace augpaint
