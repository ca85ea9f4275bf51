#pragma once

#include <string>

#include "augpaint/tensor.hpp"

namespace augpaint {

// Encoded image in latent space, shape (1, C, h, w) with h = H/f, w = W/f.
struct LatentGrid {
    Tensor values;
    std::string source_id;
    int factor = 1;
};

}  // namespace augpaint
