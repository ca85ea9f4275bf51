#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "augpaint/masking.hpp"
#include "augpaint/tensor.hpp"

namespace augpaint {

// A synthetic image paired with its (possibly flipped) label and provenance.
struct GeneratedPair {
    std::string id;
    Tensor image;  // (1,3,H,W) in [0,1]
    GridU8 label;
    std::string source_id;
    std::uint64_t seed = 0;
    float confidence = std::numeric_limits<float>::quiet_NaN();
    MaskSpec mask_spec;

    bool scored() const { return !std::isnan(confidence); }
};

}  // namespace augpaint
