#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "layerforge/image.hpp"

namespace layerforge::dataset {

/// RGBA foreground with straight (non-premultiplied) alpha in channel 4.
struct ForegroundAsset {
  Image rgba;
  std::string source_id;
};

struct BackgroundAsset {
  Image rgb;
  std::string source_id;
};

struct DatasetSample {
  Image composite;
  AlphaMask alpha;
  Image foreground;
  Image background;
  std::optional<Trimap> trimap;
  std::uint64_t seed = 0;
};

/// Keys cubic (a = -0.5) with pixel-centre alignment and clamped borders.
Image resize_bicubic(const Image& img, int height, int width);

/// Resize so the short side equals `short_side`, then take the centred crop x crop window.
Image standardize(const Image& img, int short_side, int crop);

struct ForegroundStyle {
  int resolution = 64;
  double min_scale = 0.2;  // object diameter as a fraction of the resolution
  double max_scale = 0.8;
  bool centered = false;   // false: centre drawn uniformly over the canvas (clipping allowed)
  double semi_transparent_probability = 0.5;
  double feather_min = 1.0;  // edge softness in pixels at 64 px, scaled with resolution
  double feather_max = 3.0;

  /// Near-full-frame, centred objects: the regime of object-centric RGBA corpora.
  static ForegroundStyle object_centric(int resolution);
};

struct BackgroundStyle {
  int resolution = 64;
};

ForegroundAsset procedural_foreground(std::uint64_t seed, const ForegroundStyle& style = {});
BackgroundAsset procedural_background(std::uint64_t seed, const BackgroundStyle& style = {});

struct MattingTrimapConfig {
  int min_radius = 1;  // radii at 64 px; scaled with min(H, W) / 64, floored at 1
  int max_radius = 5;
  double threshold = 0.5;
};

/// Binarize, then erode and dilate with independently drawn radii to form the unknown band.
Trimap matting_trimap(const AlphaMask& alpha, std::uint64_t seed,
                      const MattingTrimapConfig& cfg = {});

/// Composites the pair with the standard model. Assets must already share H x W.
DatasetSample synthesize_sample(const ForegroundAsset& fg, const BackgroundAsset& bg,
                                std::uint64_t seed, bool with_trimap = true,
                                const MattingTrimapConfig& trimap_cfg = {});

/// Max |C - composite(F, B, alpha)| of a sample.
double recomposition_error(const DatasetSample& sample);

}  // namespace layerforge::dataset
