#include "layerforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "layerforge/errors.hpp"

namespace layerforge {
namespace {

void check_dims(int height, int width, int channels) {
  if (height < 1 || width < 1 || channels < 1) {
    std::ostringstream os;
    os << "raster dimensions must be positive, got " << height << "x" << width << "x" << channels;
    throw ShapeError(os.str());
  }
}

void check_unit_range(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      std::ostringstream os;
      os << what << " value " << v << " outside [0,1]";
      throw ValueError(os.str());
    }
  }
}

}  // namespace

Raster::Raster(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  data_.assign(std::size_t(height) * width * channels, fill);
}

Raster::Raster(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  if (data_.size() != std::size_t(height) * width * channels) {
    throw ShapeError("raster data length does not match its dimensions");
  }
}

Image::Image(int height, int width, int channels, double fill)
    : Image(Raster(height, width, channels, fill)) {}

Image::Image(Raster raster) : raster_(std::move(raster)) {
  const int c = raster_.channels();
  if (c != 1 && c != 3 && c != 4) {
    throw ShapeError("image channels must be 1, 3 or 4, got " + std::to_string(c));
  }
  check_unit_range(raster_.values(), "image");
}

Image Image::clamped(Raster raster) {
  for (double& v : raster.values()) {
    v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
  }
  return Image(std::move(raster));
}

Image Image::channel_range(int first, int count) const {
  if (first < 0 || count < 1 || first + count > channels()) {
    throw ShapeError("channel range out of bounds");
  }
  Raster out(height(), width(), count);
  for (int y = 0; y < height(); ++y)
    for (int x = 0; x < width(); ++x)
      for (int c = 0; c < count; ++c) out.at(y, x, c) = at(y, x, first + c);
  return Image(std::move(out));
}

AlphaMask::AlphaMask(int height, int width, double fill)
    : AlphaMask(height, width, std::vector<double>(std::size_t(std::max(height, 0)) *
                                                       std::size_t(std::max(width, 0)),
                                                   fill)) {}

AlphaMask::AlphaMask(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  check_dims(height, width, 1);
  if (data_.size() != std::size_t(height) * width) {
    throw ShapeError("alpha data length does not match its dimensions");
  }
  check_unit_range(data_, "alpha");
}

Trimap::Trimap(int height, int width, double fill)
    : Trimap(height, width, std::vector<double>(std::size_t(std::max(height, 0)) *
                                                    std::size_t(std::max(width, 0)),
                                                fill)) {}

Trimap::Trimap(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  check_dims(height, width, 1);
  if (data_.size() != std::size_t(height) * width) {
    throw ShapeError("trimap data length does not match its dimensions");
  }
  for (double v : data_) {
    if (v != kBackground && v != kUnknown && v != kForeground) {
      throw ValueError("trimap level must be 0, 0.5 or 1, got " + std::to_string(v));
    }
  }
}

void Trimap::set(int y, int x, double level) {
  if (level != kBackground && level != kUnknown && level != kForeground) {
    throw ValueError("trimap level must be 0, 0.5 or 1");
  }
  data_[std::size_t(y) * width_ + x] = level;
}

BinaryMask::BinaryMask(int height, int width, bool fill) : height_(height), width_(width) {
  check_dims(height, width, 1);
  data_.assign(std::size_t(height) * width, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const {
  return std::size_t(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

void require_same_size(int h0, int w0, int h1, int w1, const std::string& what) {
  if (h0 != h1 || w0 != w1) {
    std::ostringstream os;
    os << what << ": size mismatch " << h0 << "x" << w0 << " vs " << h1 << "x" << w1;
    throw ShapeError(os.str());
  }
}

std::uint8_t quantize8(double v) {
  return std::uint8_t(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

std::uint16_t quantize16(double v) {
  return std::uint16_t(std::floor(std::clamp(v, 0.0, 1.0) * 65535.0 + 0.5));
}

AlphaMask binarize(const AlphaMask& alpha, double threshold) {
  AlphaMask out(alpha.height(), alpha.width());
  std::transform(alpha.values().begin(), alpha.values().end(), out.values().begin(),
                 [threshold](double a) { return a > threshold ? 1.0 : 0.0; });
  return out;
}

BinaryMask to_binary(const AlphaMask& alpha, double threshold) {
  BinaryMask out(alpha.height(), alpha.width());
  for (int y = 0; y < alpha.height(); ++y)
    for (int x = 0; x < alpha.width(); ++x) out.set(y, x, alpha.at(y, x) > threshold);
  return out;
}

AlphaMask to_alpha(const BinaryMask& mask) {
  AlphaMask out(mask.height(), mask.width());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) out.at(y, x) = mask.at(y, x) ? 1.0 : 0.0;
  return out;
}

}  // namespace layerforge
