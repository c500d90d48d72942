#pragma once

#include <filesystem>
#include <vector>

#include "layerforge/image.hpp"

namespace layerforge::haar {

enum class Direction { Horizontal, Vertical, Diagonal };
inline constexpr Direction kDirections[] = {Direction::Horizontal, Direction::Vertical,
                                            Direction::Diagonal};

// For a 2x2 block [[p, q], [r, s]] the orthonormal analysis is
//   approximation = (p + q + r + s) / 2
//   horizontal    = (p - q + r - s) / 2
//   vertical      = (p + q - r - s) / 2
//   diagonal      = (p - q - r + s) / 2
struct DetailBands {
  Raster horizontal;
  Raster vertical;
  Raster diagonal;

  const Raster& band(Direction d) const;
  Raster& band(Direction d);
};

/// Scale 0 is the finest level. Bands at scale s are (H / 2^(s+1)) x (W / 2^(s+1)).
struct HaarPyramid {
  std::vector<DetailBands> scales;
  Raster approximation;  // coarsest scale only

  int levels() const { return int(scales.size()); }
};

struct HFConfig {
  std::vector<int> scales{0, 1, 2};

  int max_scale() const;
  void validate() const;
};

HaarPyramid haar_decompose(const Raster& x, int levels);
HaarPyramid haar_decompose(const Image& x, int levels);
Raster haar_reconstruct(const HaarPyramid& pyramid);

/// Sum over selected scales and the three directions of
/// (1/N_s) * ||H_{s,k}(a) - H_{s,k}(b)||^2, where N_s is the subband pixel count.
/// Channels are summed. The approximation band never contributes.
double high_frequency_loss(const Raster& a, const Raster& b, const HFConfig& cfg = {});
double high_frequency_loss(const Image& a, const Image& b, const HFConfig& cfg = {});

/// Same loss with the per-scale terms kept apart, in the order of `cfg.scales`.
std::vector<double> high_frequency_loss_per_scale(const Raster& a, const Raster& b,
                                                  const HFConfig& cfg = {});

/// Gradient of high_frequency_loss(a, b) with respect to `a`.
Raster high_frequency_loss_gradient(const Raster& a, const Raster& b, const HFConfig& cfg = {});

/// Debug view: subbands tiled into one gray PNG, each band min-max normalised.
void write_pyramid_png(const std::filesystem::path& path, const HaarPyramid& pyramid,
                       int channel = 0);

}  // namespace layerforge::haar
