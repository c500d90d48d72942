#pragma once

#include "layerforge/image.hpp"

namespace layerforge {

/// Visibility tolerance for the "completely visible" copy rule, one 8-bit step.
inline constexpr double kVisibleEpsilon = 1.0 / 255.0;

/// Foreground, background, alpha and their composite; all share H x W.
struct LayeredImage {
  Image foreground;
  Image background;
  AlphaMask alpha;
  Image composite;
};

/// C = alpha * F + (1 - alpha) * B, per pixel and channel.
Image composite(const Image& foreground, const Image& background, const AlphaMask& alpha);

/// Bundles the layers with their recomposed composite.
LayeredImage make_layered(Image foreground, Image background, AlphaMask alpha);

/// Mean absolute difference between `c` and the recomposition of `layers`.
double reconstruction_error(const Image& c, const LayeredImage& layers);

enum class LayerTarget { Foreground, Background };

/// Copies `source` into `layer` where the target layer is completely visible:
/// alpha >= 1 - eps for the foreground, alpha <= eps for the background.
Image region_copy(const Image& layer, const Image& source, const AlphaMask& alpha,
                  LayerTarget target, double eps = kVisibleEpsilon);

/// Space-to-depth rearranged alpha: (H/r) x (W/r) sites, r*r channels each.
/// Channel k of a site holds block element (k / r, k % r), row-major inside the block.
class UnshuffledMask {
 public:
  UnshuffledMask() = default;
  UnshuffledMask(int factor, Raster data);

  int factor() const { return factor_; }
  int height() const { return data_.height(); }
  int width() const { return data_.width(); }
  int channels() const { return data_.channels(); }
  const Raster& data() const { return data_; }

  friend bool operator==(const UnshuffledMask&, const UnshuffledMask&) = default;

 private:
  int factor_ = 1;
  Raster data_;
};

UnshuffledMask pixel_unshuffle(const AlphaMask& alpha, int factor);
AlphaMask pixel_shuffle(const UnshuffledMask& packed);

}  // namespace layerforge
