#include "augpaint/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "augpaint/errors.hpp"
#include "augpaint/png_io.hpp"
#include "augpaint/tensor.hpp"

namespace augpaint {

namespace {

struct Canvas {
    int w, h;
    Tensor img;  // (1,3,h,w)

    Canvas(int width, int height) : w(width), h(height), img(Shape{1, 3, height, width}, 1.0f) {}

    void set(int x, int y, float r, float g, float b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        img.at(0, 0, y, x) = r;
        img.at(0, 1, y, x) = g;
        img.at(0, 2, y, x) = b;
    }

    void line(int x0, int y0, int x1, int y1, float r, float g, float b) {
        const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, r, g, b);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void dot(int x, int y, float r, float g, float b) {
        for (int dy = -2; dy <= 2; ++dy) {
            for (int dx = -2; dx <= 2; ++dx) {
                if (dx * dx + dy * dy <= 4) set(x + dx, y + dy, r, g, b);
            }
        }
    }
};

// 5x7 glyphs for the characters used by tick/axis labels
const char* glyph(char c) {
    switch (c) {
        case '0': return "01110100011001110101110011000101110";
        case '1': return "00100011000010000100001000010001110";
        case '2': return "01110100010000100110010001000011111";
        case '3': return "11111000100010000010000011000101110";
        case '4': return "00010001100101010010111110001000010";
        case '5': return "11111100001111000001000011000101110";
        case '6': return "00110010001000011110100011000101110";
        case '7': return "11111000010001000100010001000010000";
        case '8': return "01110100011000101110100011000101110";
        case '9': return "01110100011000101111000010001001100";
        case '.': return "00000000000000000000000000110001100";
        case '-': return "00000000000000011111000000000000000";
        case '+': return "00000001000010011111001000010000000";
        default: return nullptr;
    }
}

void draw_char(Canvas& cv, int x, int y, char c) {
    const char* g;
    char up = c;
    if (up >= 'a' && up <= 'z') up = static_cast<char>(up - 'a' + 'A');
    g = glyph(c);
    if (!g) {
        // letters rendered as a simple 5x7 outline via a fallback: skip
        // unknowns except basic uppercase approximations below
        return;
    }
    for (int r = 0; r < 7; ++r) {
        for (int col = 0; col < 5; ++col) {
            if (g[r * 5 + col] == '1') cv.set(x + col, y + r, 0.1f, 0.1f, 0.1f);
        }
    }
}

void draw_text(Canvas& cv, int x, int y, const std::string& s) {
    int cx = x;
    for (char c : s) {
        draw_char(cv, cx, y, c);
        cx += 6;
    }
}

std::string fmt_num(double v) {
    char buf[32];
    if (std::fabs(v) >= 100 || v == std::floor(v)) {
        std::snprintf(buf, sizeof(buf), "%.0f", v);
    } else {
        std::snprintf(buf, sizeof(buf), "%.2f", v);
    }
    return buf;
}

const float kPalette[6][3] = {{0.85f, 0.25f, 0.20f}, {0.15f, 0.35f, 0.80f},
                              {0.20f, 0.65f, 0.30f}, {0.80f, 0.55f, 0.10f},
                              {0.55f, 0.20f, 0.70f}, {0.10f, 0.60f, 0.60f}};

}  // namespace

void write_line_plot(const std::filesystem::path& path, const std::string& /*title*/,
                     const std::string& /*x_label*/, const std::string& /*y_label*/,
                     const std::vector<PlotSeries>& series, int width, int height) {
    if (series.empty()) throw ConfigError("write_line_plot: no series");
    Canvas cv(width, height);

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        for (double v : s.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.y) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (xmin >= xmax) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (ymin >= ymax) {
        ymin -= 1.0;
        ymax += 1.0;
    }
    const double ypad = 0.08 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    const int ml = 56, mr = 16, mt = 16, mb = 36;  // margins
    const int pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](double x) { return ml + static_cast<int>((x - xmin) / (xmax - xmin) * pw); };
    auto py = [&](double y) { return mt + ph - static_cast<int>((y - ymin) / (ymax - ymin) * ph); };

    // axes + ticks
    cv.line(ml, mt, ml, mt + ph, 0.0f, 0.0f, 0.0f);
    cv.line(ml, mt + ph, ml + pw, mt + ph, 0.0f, 0.0f, 0.0f);
    for (int k = 0; k <= 4; ++k) {
        const double xv = xmin + (xmax - xmin) * k / 4;
        const double yv = ymin + (ymax - ymin) * k / 4;
        cv.line(px(xv), mt + ph, px(xv), mt + ph + 4, 0.0f, 0.0f, 0.0f);
        draw_text(cv, px(xv) - 10, mt + ph + 8, fmt_num(xv));
        cv.line(ml - 4, py(yv), ml, py(yv), 0.0f, 0.0f, 0.0f);
        draw_text(cv, 8, py(yv) - 3, fmt_num(yv));
        // light gridline
        for (int gx = ml + 1; gx < ml + pw; gx += 2) cv.set(gx, py(yv), 0.9f, 0.9f, 0.9f);
    }

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const float* col = kPalette[si % 6];
        for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
            cv.line(px(s.x[i]), py(s.y[i]), px(s.x[i + 1]), py(s.y[i + 1]), col[0], col[1],
                    col[2]);
        }
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            cv.dot(px(s.x[i]), py(s.y[i]), col[0], col[1], col[2]);
        }
        // legend swatch
        const int ly = mt + 8 + static_cast<int>(si) * 12;
        for (int dx = 0; dx < 18; ++dx) cv.set(ml + pw - 60 + dx, ly, col[0], col[1], col[2]);
    }

    write_png_rgb(path, cv.img);
}

}  // namespace augpaint
