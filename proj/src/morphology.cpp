#include "layerforge/trimap.hpp"

#include <algorithm>

#include "layerforge/errors.hpp"

namespace layerforge {
namespace {

// Square windows are separable: a row pass followed by a column pass.
// `keep_if_any` selects dilation (true) or erosion (false).
BinaryMask square_filter(const BinaryMask& mask, int radius, bool keep_if_any) {
  if (radius < 0) throw ValueError("morphology radius must be >= 0");
  if (radius == 0) return mask;
  const int h = mask.height();
  const int w = mask.width();
  BinaryMask rows(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool v = !keep_if_any;
      for (int k = std::max(0, x - radius); k <= std::min(w - 1, x + radius); ++k) {
        if (mask.at(y, k) == keep_if_any) {
          v = keep_if_any;
          break;
        }
      }
      rows.set(y, x, v);
    }
  }
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool v = !keep_if_any;
      for (int k = std::max(0, y - radius); k <= std::min(h - 1, y + radius); ++k) {
        if (rows.at(k, x) == keep_if_any) {
          v = keep_if_any;
          break;
        }
      }
      out.set(y, x, v);
    }
  }
  return out;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int radius) { return square_filter(mask, radius, false); }

BinaryMask dilate(const BinaryMask& mask, int radius) { return square_filter(mask, radius, true); }

Trimap make_trimap(const AlphaMask& mask, int erode_radius, int dilate_radius,
                   double fg_threshold) {
  if (erode_radius < 0 || dilate_radius < 0) throw ValueError("trimap radii must be >= 0");
  if (!(fg_threshold > 0.0 && fg_threshold < 1.0)) {
    throw ValueError("trimap fg_threshold must lie in (0,1)");
  }
  const BinaryMask binary = to_binary(mask, fg_threshold);
  const BinaryMask core = erode(binary, erode_radius);
  const BinaryMask extent = dilate(binary, dilate_radius);
  Trimap out(mask.height(), mask.width());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (core.at(y, x)) {
        out.set(y, x, Trimap::kForeground);
      } else if (extent.at(y, x)) {
        out.set(y, x, Trimap::kUnknown);
      }
    }
  }
  return out;
}

Trimap refine_trimap_transparency(const Trimap& trimap, const BinaryMask& transparent) {
  require_same_size(trimap, transparent, "refine_trimap_transparency");
  Trimap out = trimap;
  for (int y = 0; y < trimap.height(); ++y)
    for (int x = 0; x < trimap.width(); ++x)
      if (trimap.at(y, x) == Trimap::kForeground && transparent.at(y, x))
        out.set(y, x, Trimap::kUnknown);
  return out;
}

Trimap refine_trimap_transparency(const Trimap& trimap, const AlphaMask& transparent) {
  require_same_size(trimap, transparent, "refine_trimap_transparency");
  for (double v : transparent.values()) {
    if (v != 0.0 && v != 1.0) throw ValueError("transparency map must be binary");
  }
  return refine_trimap_transparency(trimap, to_binary(transparent, 0.5));
}

}  // namespace layerforge
