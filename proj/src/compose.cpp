#include "layerforge/compose.hpp"

#include <algorithm>
#include <cmath>

#include "layerforge/errors.hpp"

namespace layerforge {

Image composite(const Image& foreground, const Image& background, const AlphaMask& alpha) {
  if (!foreground.same_shape(background)) {
    throw ShapeError("composite: foreground and background shapes differ");
  }
  require_same_size(foreground, alpha, "composite");
  const int channels = foreground.channels();
  Raster out(foreground.height(), foreground.width(), channels);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const double a = alpha.at(y, x);
      for (int c = 0; c < channels; ++c) {
        const double v = a * foreground.at(y, x, c) + (1.0 - a) * background.at(y, x, c);
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return Image(std::move(out));
}

LayeredImage make_layered(Image foreground, Image background, AlphaMask alpha) {
  Image c = composite(foreground, background, alpha);
  return {std::move(foreground), std::move(background), std::move(alpha), std::move(c)};
}

double reconstruction_error(const Image& c, const LayeredImage& layers) {
  const Image recomposed = composite(layers.foreground, layers.background, layers.alpha);
  if (!c.same_shape(recomposed)) {
    throw ShapeError("reconstruction_error: composite shape differs from layers");
  }
  double sum = 0.0;
  const auto a = c.values();
  const auto b = recomposed.values();
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / double(a.size());
}

Image region_copy(const Image& layer, const Image& source, const AlphaMask& alpha,
                  LayerTarget target, double eps) {
  if (!layer.same_shape(source)) throw ShapeError("region_copy: layer and source shapes differ");
  require_same_size(layer, alpha, "region_copy");
  Image out = layer;
  for (int y = 0; y < layer.height(); ++y) {
    for (int x = 0; x < layer.width(); ++x) {
      const double a = alpha.at(y, x);
      const bool visible =
          target == LayerTarget::Foreground ? a >= 1.0 - eps : a <= eps;
      if (!visible) continue;
      for (int c = 0; c < layer.channels(); ++c) out.at(y, x, c) = source.at(y, x, c);
    }
  }
  return out;
}

UnshuffledMask::UnshuffledMask(int factor, Raster data) : factor_(factor), data_(std::move(data)) {
  if (factor_ < 1) throw ShapeError("unshuffle factor must be >= 1");
  if (data_.channels() != factor_ * factor_) {
    throw ShapeError("unshuffled mask needs factor^2 = " + std::to_string(factor_ * factor_) +
                     " channels, got " + std::to_string(data_.channels()));
  }
  for (double v : data_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValueError("unshuffled mask value outside [0,1]");
  }
}

UnshuffledMask pixel_unshuffle(const AlphaMask& alpha, int factor) {
  if (factor < 1) throw ShapeError("pixel_unshuffle: factor must be >= 1");
  if (alpha.height() % factor != 0 || alpha.width() % factor != 0) {
    throw ShapeError("pixel_unshuffle: " + std::to_string(alpha.height()) + "x" +
                     std::to_string(alpha.width()) + " not divisible by " +
                     std::to_string(factor));
  }
  const int h = alpha.height() / factor;
  const int w = alpha.width() / factor;
  Raster out(h, w, factor * factor);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          out.at(y, x, dy * factor + dx) = alpha.at(y * factor + dy, x * factor + dx);
  return UnshuffledMask(factor, std::move(out));
}

AlphaMask pixel_shuffle(const UnshuffledMask& packed) {
  const int r = packed.factor();
  const Raster& in = packed.data();
  AlphaMask out(in.height() * r, in.width() * r);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx)
          out.at(y * r + dy, x * r + dx) = in.at(y, x, dy * r + dx);
  return out;
}

}  // namespace layerforge
