#pragma once

#include <filesystem>

#include "augpaint/image.hpp"
#include "augpaint/tensor.hpp"

namespace augpaint {

// 8-bit RGB; input shape (1, 3, H, W) with values in [0, 1].
void write_png_rgb(const std::filesystem::path& path, const Tensor& img);
Tensor read_png_rgb(const std::filesystem::path& path);

// 8-bit single channel; pixel value = raw byte (class id / mask bit).
void write_png_gray(const std::filesystem::path& path, const GridU8& g);
GridU8 read_png_gray(const std::filesystem::path& path);

}  // namespace augpaint
