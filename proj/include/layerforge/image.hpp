#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace layerforge {

/// Unconstrained real-valued H x W x C field, channel-interleaved row-major.
/// Used for wavelet subbands, residuals and network outputs.
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, int channels, double fill = 0.0);
  Raster(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return std::size_t(height_) * std::size_t(width_); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Raster& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (std::size_t(y) * std::size_t(width_) + std::size_t(x)) * std::size_t(channels_) +
           std::size_t(c);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Pixel raster with 1, 3 or 4 channels and every value in [0,1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);
  /// Validates channel count and value range; throws ShapeError / ValueError.
  explicit Image(Raster raster);

  /// Clamps every value into [0,1] instead of rejecting out-of-range input.
  static Image clamped(Raster raster);

  int height() const { return raster_.height(); }
  int width() const { return raster_.width(); }
  int channels() const { return raster_.channels(); }
  std::size_t pixel_count() const { return raster_.pixel_count(); }
  std::size_t size() const { return raster_.size(); }

  double& at(int y, int x, int c = 0) { return raster_.at(y, x, c); }
  double at(int y, int x, int c = 0) const { return raster_.at(y, x, c); }
  std::span<double> values() { return raster_.values(); }
  std::span<const double> values() const { return raster_.values(); }

  const Raster& raster() const { return raster_; }
  bool same_shape(const Image& other) const { return raster_.same_shape(other.raster_); }

  /// Copies `count` channels starting at `first`.
  Image channel_range(int first, int count) const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  Raster raster_;
};

/// Per-pixel foreground opacity in [0,1].
class AlphaMask {
 public:
  AlphaMask() = default;
  AlphaMask(int height, int width, double fill = 0.0);
  AlphaMask(int height, int width, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  double& at(int y, int x) { return data_[std::size_t(y) * width_ + x]; }
  double at(int y, int x) const { return data_[std::size_t(y) * width_ + x]; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  friend bool operator==(const AlphaMask&, const AlphaMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Matting trimap; every element is exactly 0 (background), 0.5 (unknown) or 1 (foreground).
class Trimap {
 public:
  static constexpr double kBackground = 0.0;
  static constexpr double kUnknown = 0.5;
  static constexpr double kForeground = 1.0;

  Trimap() = default;
  Trimap(int height, int width, double fill = kBackground);
  Trimap(int height, int width, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  double at(int y, int x) const { return data_[std::size_t(y) * width_ + x]; }
  void set(int y, int x, double level);
  std::span<const double> values() const { return data_; }

  friend bool operator==(const Trimap&, const Trimap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// {0,1} map: occlusion masks, segmenter output, transparency regions.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, bool fill = false);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  std::size_t count() const;

  bool at(int y, int x) const { return data_[std::size_t(y) * width_ + x] != 0; }
  void set(int y, int x, bool v) { data_[std::size_t(y) * width_ + x] = v ? 1 : 0; }
  std::span<const std::uint8_t> values() const { return data_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Throws ShapeError naming `what` unless the spatial dims agree.
void require_same_size(int h0, int w0, int h1, int w1, const std::string& what);

template <class A, class B>
void require_same_size(const A& a, const B& b, const std::string& what) {
  require_same_size(a.height(), a.width(), b.height(), b.width(), what);
}

/// 8-bit quantization with round-half-up; the boundary conversion for all 8-bit I/O.
std::uint8_t quantize8(double v);
std::uint16_t quantize16(double v);

AlphaMask binarize(const AlphaMask& alpha, double threshold);
BinaryMask to_binary(const AlphaMask& alpha, double threshold);
AlphaMask to_alpha(const BinaryMask& mask);

}  // namespace layerforge
