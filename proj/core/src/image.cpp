#include "augpaint/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace augpaint {

namespace {

void check_image(const Tensor& img, const char* what) {
    const Shape& s = img.shape();
    if (s.n != 1) {
        throw ShapeError(std::string(what) + ": expected single image, got " + s.str());
    }
}

}  // namespace

std::int64_t GridU8::count_nonzero() const {
    std::int64_t n = 0;
    for (auto x : v) n += (x != 0);
    return n;
}

std::uint8_t GridU8::max_value() const {
    std::uint8_t m = 0;
    for (auto x : v) m = std::max(m, x);
    return m;
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
    check_image(img, "resize_bilinear");
    if (out_h <= 0 || out_w <= 0) throw ConfigError("resize: size must be positive");
    const Shape& s = img.shape();
    if (out_h == s.h && out_w == s.w) return img;

    Tensor out(Shape{1, s.c, out_h, out_w});
    const double sy = static_cast<double>(s.h) / out_h;
    const double sx = static_cast<double>(s.w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        // half-pixel centers
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(s.h - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, s.h - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(s.w - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, s.w - 1);
            const double wx = fx - x0;
            for (int c = 0; c < s.c; ++c) {
                const double v00 = img.at(0, c, y0, x0);
                const double v01 = img.at(0, c, y0, x1);
                const double v10 = img.at(0, c, y1, x0);
                const double v11 = img.at(0, c, y1, x1);
                const double top = v00 + (v01 - v00) * wx;
                const double bot = v10 + (v11 - v10) * wx;
                out.at(0, c, oy, ox) = static_cast<float>(top + (bot - top) * wy);
            }
        }
    }
    return out;
}

GridU8 resize_nearest(const GridU8& g, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw ConfigError("resize: size must be positive");
    if (out_h == g.h && out_w == g.w) return g;
    GridU8 out(out_h, out_w);
    const double sy = static_cast<double>(g.h) / out_h;
    const double sx = static_cast<double>(g.w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        int y = static_cast<int>(std::llround((oy + 0.5) * sy - 0.5));
        y = std::clamp(y, 0, g.h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            int x = static_cast<int>(std::llround((ox + 0.5) * sx - 0.5));
            x = std::clamp(x, 0, g.w - 1);
            out.at(oy, ox) = g.at(y, x);
        }
    }
    return out;
}

Tensor flip_image(const Tensor& img, bool horizontal, bool vertical) {
    check_image(img, "flip_image");
    if (!horizontal && !vertical) return img;
    const Shape& s = img.shape();
    Tensor out(s);
    for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y) {
            const int sy = vertical ? s.h - 1 - y : y;
            for (int x = 0; x < s.w; ++x) {
                const int sx = horizontal ? s.w - 1 - x : x;
                out.at(0, c, y, x) = img.at(0, c, sy, sx);
            }
        }
    }
    return out;
}

GridU8 flip_grid(const GridU8& g, bool horizontal, bool vertical) {
    if (!horizontal && !vertical) return g;
    GridU8 out(g.h, g.w);
    for (int y = 0; y < g.h; ++y) {
        const int sy = vertical ? g.h - 1 - y : y;
        for (int x = 0; x < g.w; ++x) {
            const int sx = horizontal ? g.w - 1 - x : x;
            out.at(y, x) = g.at(sy, sx);
        }
    }
    return out;
}

Tensor rot90_image(const Tensor& img, int k) {
    check_image(img, "rot90_image");
    k = ((k % 4) + 4) % 4;
    if (k == 0) return img;
    const Shape& s = img.shape();
    const bool swap = (k % 2) == 1;
    Tensor out(Shape{1, s.c, swap ? s.w : s.h, swap ? s.h : s.w});
    for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x) {
                int oy = 0, ox = 0;
                switch (k) {
                    case 1: oy = s.w - 1 - x; ox = y; break;           // CCW
                    case 2: oy = s.h - 1 - y; ox = s.w - 1 - x; break;
                    default: oy = x; ox = s.h - 1 - y; break;          // k == 3
                }
                out.at(0, c, oy, ox) = img.at(0, c, y, x);
            }
        }
    }
    return out;
}

GridU8 rot90_grid(const GridU8& g, int k) {
    k = ((k % 4) + 4) % 4;
    if (k == 0) return g;
    const bool swap = (k % 2) == 1;
    GridU8 out(swap ? g.w : g.h, swap ? g.h : g.w);
    for (int y = 0; y < g.h; ++y) {
        for (int x = 0; x < g.w; ++x) {
            int oy = 0, ox = 0;
            switch (k) {
                case 1: oy = g.w - 1 - x; ox = y; break;
                case 2: oy = g.h - 1 - y; ox = g.w - 1 - x; break;
                default: oy = x; ox = g.h - 1 - y; break;
            }
            out.at(oy, ox) = g.at(y, x);
        }
    }
    return out;
}

Tensor translate_image(const Tensor& img, int dy, int dx) {
    check_image(img, "translate_image");
    if (dy == 0 && dx == 0) return img;
    const Shape& s = img.shape();
    Tensor out(s);
    for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y) {
            const int sy = y - dy;
            if (sy < 0 || sy >= s.h) continue;
            for (int x = 0; x < s.w; ++x) {
                const int sx = x - dx;
                if (sx < 0 || sx >= s.w) continue;
                out.at(0, c, y, x) = img.at(0, c, sy, sx);
            }
        }
    }
    return out;
}

GridU8 translate_grid(const GridU8& g, int dy, int dx) {
    if (dy == 0 && dx == 0) return g;
    GridU8 out(g.h, g.w);
    for (int y = 0; y < g.h; ++y) {
        const int sy = y - dy;
        if (sy < 0 || sy >= g.h) continue;
        for (int x = 0; x < g.w; ++x) {
            const int sx = x - dx;
            if (sx < 0 || sx >= g.w) continue;
            out.at(y, x) = g.at(sy, sx);
        }
    }
    return out;
}

Tensor scale_brightness(const Tensor& img, float factor) {
    check_image(img, "scale_brightness");
    Tensor out = img;
    for (std::int64_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(out[i] * factor, 0.0f, 1.0f);
    }
    return out;
}

Tensor apply_mask(const Tensor& img, const GridU8& mask) {
    check_image(img, "apply_mask");
    const Shape& s = img.shape();
    if (mask.h != s.h || mask.w != s.w) {
        throw ShapeError("apply_mask: mask dims do not match image");
    }
    Tensor out = img;
    for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x) {
                if (mask.at(y, x) == 0) out.at(0, c, y, x) = 0.0f;
            }
        }
    }
    return out;
}

double mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double psnr(const Tensor& a, const Tensor& b) {
    const double m = mse(a, b);
    if (m <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

std::uint8_t quantize_u8(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

float dequantize_u8(std::uint8_t v) {
    return static_cast<float>(v) / 255.0f;
}

}  // namespace augpaint
