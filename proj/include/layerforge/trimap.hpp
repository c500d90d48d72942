#pragma once

#include "layerforge/image.hpp"

namespace layerforge {

// Square structuring element of side 2r+1. Windows are clipped at the image
// border, so out-of-image pixels never affect the result.
BinaryMask erode(const BinaryMask& mask, int radius);
BinaryMask dilate(const BinaryMask& mask, int radius);

struct TrimapRadii {
  int erode = 5;
  int dilate = 5;
  double fg_threshold = 0.5;
};

/// 1 inside the eroded binarized mask, 0 outside the dilated mask, 0.5 between.
Trimap make_trimap(const AlphaMask& mask, int erode_radius, int dilate_radius,
                   double fg_threshold = 0.5);

/// Marks known-foreground pixels that fall in transparent regions as unknown.
/// `transparent` must be {0,1}-valued.
Trimap refine_trimap_transparency(const Trimap& trimap, const AlphaMask& transparent);
Trimap refine_trimap_transparency(const Trimap& trimap, const BinaryMask& transparent);

}  // namespace layerforge
