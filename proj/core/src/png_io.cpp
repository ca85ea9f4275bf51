#include "augpaint/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "augpaint/errors.hpp"

namespace augpaint {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const char* what) {
    throw IoError(std::string(what) + ": " + path.string());
}

void write_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
               int h, int w, int channels) {
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "libpng write error");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, w, h, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) {
        rows[y] = const_cast<png_bytep>(&pixels[static_cast<std::size_t>(y) * w * channels]);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, int expect_channels,
                                   int* out_h, int* out_w) {
    FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) fail(path, "cannot open for reading");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "libpng read error");
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (expect_channels == 3) {
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
            png_set_gray_to_rgb(png);
        }
        png_set_strip_alpha(png);
    } else {
        if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);

    const int h = static_cast<int>(png_get_image_height(png, info));
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int ch = static_cast<int>(png_get_channels(png, info));
    if (ch != expect_channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "unexpected channel count");
    }
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h) * w * ch);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) {
        rows[y] = &pixels[static_cast<std::size_t>(y) * w * ch];
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    *out_h = h;
    *out_w = w;
    return pixels;
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, const Tensor& img) {
    const Shape& s = img.shape();
    if (s.n != 1 || s.c != 3) throw ShapeError("write_png_rgb: expected (1,3,H,W)");
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(s.h) * s.w * 3);
    for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                pixels[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] =
                    quantize_u8(img.at(0, c, y, x));
            }
        }
    }
    write_png(path, pixels, s.h, s.w, 3);
}

Tensor read_png_rgb(const std::filesystem::path& path) {
    int h = 0, w = 0;
    const auto pixels = read_png(path, 3, &h, &w);
    Tensor img(Shape{1, 3, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(0, c, y, x) =
                    dequantize_u8(pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
            }
        }
    }
    return img;
}

void write_png_gray(const std::filesystem::path& path, const GridU8& g) {
    write_png(path, g.v, g.h, g.w, 1);
}

GridU8 read_png_gray(const std::filesystem::path& path) {
    int h = 0, w = 0;
    auto pixels = read_png(path, 1, &h, &w);
    GridU8 g(h, w);
    g.v = std::move(pixels);
    return g;
}

}  // namespace augpaint
