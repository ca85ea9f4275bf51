#include "augpaint/masking.hpp"

#include <algorithm>

#include "augpaint/errors.hpp"

namespace augpaint {

const char* to_string(MaskKind k) {
    switch (k) {
        case MaskKind::box: return "box";
        case MaskKind::label_shape: return "label_shape";
        default: return "none";
    }
}

MaskKind mask_kind_from_string(const std::string& s) {
    if (s == "box") return MaskKind::box;
    if (s == "label_shape" || s == "label") return MaskKind::label_shape;
    if (s == "none") return MaskKind::none;
    throw ConfigError("unknown mask kind: " + s);
}

MaskSpec get_box_mask(const GridU8& label, int padding) {
    if (padding < 0) throw ConfigError("get_box_mask: padding must be >= 0");
    const int K = static_cast<int>(label.max_value());
    if (K == 0) throw NoForegroundError("get_box_mask: label has no foreground");

    MaskSpec spec;
    spec.kind = MaskKind::box;
    spec.padding = padding;
    spec.pixel_mask = GridU8(label.h, label.w, 0);
    for (int c = 1; c <= K; ++c) {
        int rmin = label.h, rmax = -1, cmin = label.w, cmax = -1;
        for (int r = 0; r < label.h; ++r) {
            for (int col = 0; col < label.w; ++col) {
                if (label.at(r, col) == c) {
                    rmin = std::min(rmin, r);
                    rmax = std::max(rmax, r);
                    cmin = std::min(cmin, col);
                    cmax = std::max(cmax, col);
                }
            }
        }
        if (rmax < 0) continue;  // class absent
        rmin = std::max(0, rmin - padding);
        rmax = std::min(label.h - 1, rmax + padding);
        cmin = std::max(0, cmin - padding);
        cmax = std::min(label.w - 1, cmax + padding);
        for (int r = rmin; r <= rmax; ++r) {
            for (int col = cmin; col <= cmax; ++col) {
                spec.pixel_mask.at(r, col) = 1;
            }
        }
    }
    return spec;
}

MaskSpec get_label_mask(const GridU8& label) {
    if (label.count_nonzero() == 0) {
        throw NoForegroundError("get_label_mask: label has no foreground");
    }
    MaskSpec spec;
    spec.kind = MaskKind::label_shape;
    spec.pixel_mask = GridU8(label.h, label.w, 0);
    for (std::size_t i = 0; i < label.v.size(); ++i) {
        spec.pixel_mask.v[i] = label.v[i] > 0 ? 1 : 0;
    }
    return spec;
}

GridU8 resize_mask_to_latent(const MaskSpec& mask, int factor) {
    if (factor <= 0) throw ConfigError("resize_mask_to_latent: factor must be positive");
    const GridU8& m = mask.pixel_mask;
    if (m.h % factor != 0 || m.w % factor != 0) {
        throw ShapeError("resize_mask_to_latent: mask dims not divisible by factor");
    }
    const int h = m.h / factor, w = m.w / factor;
    GridU8 out(h, w, 0);
    const int block = factor * factor;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            int count = 0;
            for (int dy = 0; dy < factor; ++dy) {
                for (int dx = 0; dx < factor; ++dx) {
                    count += m.at(i * factor + dy, j * factor + dx) != 0;
                }
            }
            out.at(i, j) = (2 * count >= block) ? 1 : 0;  // block mean >= 0.5
        }
    }
    return out;
}

MaskSpec grow_mask_to_area(const MaskSpec& mask, double min_area_frac) {
    if (min_area_frac <= 0.0) return mask;
    const std::int64_t total = std::int64_t(mask.pixel_mask.h) * mask.pixel_mask.w;
    MaskSpec cur = mask;
    // dilate with a growing square structuring element until coverage is met
    for (int pad = 1; pad <= std::max(mask.pixel_mask.h, mask.pixel_mask.w); ++pad) {
        if (static_cast<double>(cur.pixel_mask.count_nonzero()) / total >= min_area_frac) {
            break;
        }
        const GridU8& src = mask.pixel_mask;
        GridU8 grown(src.h, src.w, 0);
        for (int r = 0; r < src.h; ++r) {
            for (int c = 0; c < src.w; ++c) {
                if (!src.at(r, c)) continue;
                const int r0 = std::max(0, r - pad), r1 = std::min(src.h - 1, r + pad);
                const int c0 = std::max(0, c - pad), c1 = std::min(src.w - 1, c + pad);
                for (int rr = r0; rr <= r1; ++rr) {
                    for (int cc = c0; cc <= c1; ++cc) grown.at(rr, cc) = 1;
                }
            }
        }
        cur.pixel_mask = std::move(grown);
        cur.padding = mask.padding + pad;
    }
    return cur;
}

FlippedSample flip_foreground(const Tensor& image, const GridU8& label,
                              const MaskSpec& mask, FlipPair flips) {
    if (label.h != mask.pixel_mask.h || label.w != mask.pixel_mask.w) {
        throw ShapeError("flip_foreground: mask dims do not match label");
    }
    FlippedSample out;
    out.image = flip_image(image, flips.horizontal, flips.vertical);
    out.label = flip_grid(label, flips.horizontal, flips.vertical);
    out.mask = mask;
    out.mask.pixel_mask = flip_grid(mask.pixel_mask, flips.horizontal, flips.vertical);
    out.mask.flip_horizontal = mask.flip_horizontal ^ flips.horizontal;
    out.mask.flip_vertical = mask.flip_vertical ^ flips.vertical;
    return out;
}

}  // namespace augpaint
