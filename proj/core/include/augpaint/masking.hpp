#pragma once

#include <string>

#include "augpaint/image.hpp"

namespace augpaint {

enum class MaskKind { none, box, label_shape };

const char* to_string(MaskKind k);
MaskKind mask_kind_from_string(const std::string& s);

// Condition mask derived from a label map. pixel_mask entries: 1 = known /
// kept region (foreground context preserved during inpainting), 0 = region
// to be generated.
struct MaskSpec {
    MaskKind kind = MaskKind::none;
    GridU8 pixel_mask;
    bool flip_horizontal = false;
    bool flip_vertical = false;
    int padding = 0;
    std::string source_label_id;

    bool empty() const { return pixel_mask.v.empty(); }
};

// Union of per-class axis-aligned bounding rectangles over all foreground
// classes, each expanded by `padding` and clipped to the image.
// Throws NoForegroundError when the label has no foreground pixel.
MaskSpec get_box_mask(const GridU8& label, int padding = 0);

// pixel_mask[p] = 1 iff label[p] > 0.
MaskSpec get_label_mask(const GridU8& label);

// Area rule: latent cell (i,j) is known iff the mean of its f x f pixel
// block is >= 0.5. Dims must be divisible by f.
GridU8 resize_mask_to_latent(const MaskSpec& mask, int factor);

// Grows the mask by padding every set pixel's bounding boxes until coverage
// reaches at least `min_area_frac` of the image (used for the large-mask
// diversity study). Box masks stay rectangles; label masks are dilated.
MaskSpec grow_mask_to_area(const MaskSpec& mask, double min_area_frac);

struct FlipPair {
    bool horizontal = false;
    bool vertical = false;
};

struct FlippedSample {
    Tensor image;
    GridU8 label;
    MaskSpec mask;
};

// Flips the kept image region, the label and the mask by the same transform.
// Background pixels of the returned image are irrelevant downstream (they
// get inpainted). The whole grids are flipped, which realizes exactly that.
FlippedSample flip_foreground(const Tensor& image, const GridU8& label,
                              const MaskSpec& mask, FlipPair flips);

}  // namespace augpaint
