#pragma once

#include <cstdint>
#include <vector>

#include "augpaint/tensor.hpp"

namespace augpaint {

// Small 2D byte grid used for label maps and binary masks.
struct GridU8 {
    int h = 0, w = 0;
    std::vector<std::uint8_t> v;

    GridU8() = default;
    GridU8(int h_, int w_, std::uint8_t fill = 0)
        : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

    std::uint8_t& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
    std::uint8_t at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }

    std::int64_t count_nonzero() const;
    std::uint8_t max_value() const;

    bool operator==(const GridU8&) const = default;
};

// Images are Tensors of shape (1, 3, H, W) with values in [0, 1].

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);
GridU8 resize_nearest(const GridU8& g, int out_h, int out_w);

Tensor flip_image(const Tensor& img, bool horizontal, bool vertical);
GridU8 flip_grid(const GridU8& g, bool horizontal, bool vertical);

// k quarter-turns counter-clockwise; output dims swap for odd k.
Tensor rot90_image(const Tensor& img, int k);
GridU8 rot90_grid(const GridU8& g, int k);

// Shift by (dy, dx); vacated pixels get 0 (background).
Tensor translate_image(const Tensor& img, int dy, int dx);
GridU8 translate_grid(const GridU8& g, int dy, int dx);

Tensor scale_brightness(const Tensor& img, float factor);  // clips to [0,1]

// Zeroes image pixels where mask == 0 (mask broadcast over channels).
Tensor apply_mask(const Tensor& img, const GridU8& mask);

double mse(const Tensor& a, const Tensor& b);
double psnr(const Tensor& a, const Tensor& b);  // peak = 1.0

// 8-bit quantization round trip used by the on-disk format.
std::uint8_t quantize_u8(float v);
float dequantize_u8(std::uint8_t v);

}  // namespace augpaint
