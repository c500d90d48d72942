#include "layerforge/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "layerforge/errors.hpp"

namespace layerforge {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

struct Decoded {
  int height = 0;
  int width = 0;
  int channels = 0;
  int depth = 8;
  std::vector<std::uint16_t> samples;  // raw stored levels
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

Decoded decode(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  std::string error;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  Decoded out;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // host-order little endian samples
  png_read_update_info(png, info);
  out.width = int(png_get_image_width(png, info));
  out.height = int(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = std::size_t(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      out.samples[i] = std::uint16_t(buffer[2 * i] | (buffer[2 * i + 1] << 8));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
  }
  return out;
}

void encode(const std::filesystem::path& path, int height, int width, int channels,
            BitDepth depth, const std::vector<double>& values) {
  FilePtr file = open_file(path, "wb");
  std::string error;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  const int bytes = depth == BitDepth::Sixteen ? 2 : 1;
  std::vector<std::uint8_t> buffer(std::size_t(height) * width * channels * bytes);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (depth == BitDepth::Sixteen) {
      const std::uint16_t q = quantize16(values[i]);
      buffer[2 * i] = std::uint8_t(q >> 8);  // PNG is big endian
      buffer[2 * i + 1] = std::uint8_t(q & 0xff);
    } else {
      buffer[i] = quantize8(values[i]);
    }
  }
  std::vector<png_bytep> rows(height);
  const std::size_t rowbytes = std::size_t(width) * channels * bytes;
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode " + path.string() + ": " + error);
  }
  int color = PNG_COLOR_TYPE_GRAY;
  if (channels == 2) color = PNG_COLOR_TYPE_GRAY_ALPHA;
  if (channels == 3) color = PNG_COLOR_TYPE_RGB;
  if (channels == 4) color = PNG_COLOR_TYPE_RGBA;
  png_init_io(png, file.get());
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), int(depth), color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw IoError("failed to flush " + path.string());
}

double level(const Decoded& d, std::size_t i) {
  return d.depth == 16 ? d.samples[i] / 65535.0 : d.samples[i] / 255.0;
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  Decoded d = decode(path);
  const int channels = d.channels == 2 ? 4 : d.channels;
  Raster r(d.height, d.width, channels);
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const std::size_t base = (std::size_t(y) * d.width + x) * d.channels;
      if (d.channels == 2) {
        const double g = level(d, base);
        r.at(y, x, 0) = r.at(y, x, 1) = r.at(y, x, 2) = g;
        r.at(y, x, 3) = level(d, base + 1);
      } else {
        for (int c = 0; c < channels; ++c) r.at(y, x, c) = level(d, base + c);
      }
    }
  }
  return Image(std::move(r));
}

void write_png(const std::filesystem::path& path, const Image& image, BitDepth depth) {
  encode(path, image.height(), image.width(), image.channels(), depth,
         std::vector<double>(image.values().begin(), image.values().end()));
}

AlphaMask read_alpha_png(const std::filesystem::path& path) {
  Image img = read_png(path);
  if (img.channels() == 4) return split_rgba(img).second;
  if (img.channels() != 1) throw ShapeError(path.string() + ": alpha PNG must be gray or RGBA");
  return image_as_alpha(img);
}

void write_alpha_png(const std::filesystem::path& path, const AlphaMask& alpha, BitDepth depth) {
  encode(path, alpha.height(), alpha.width(), 1, depth,
         std::vector<double>(alpha.values().begin(), alpha.values().end()));
}

Trimap read_trimap_png(const std::filesystem::path& path) {
  Decoded d = decode(path);
  if (d.channels != 1 || d.depth != 8) {
    throw ShapeError(path.string() + ": trimap PNG must be 8-bit single channel");
  }
  std::vector<double> levels(d.samples.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    switch (d.samples[i]) {
      case 0: levels[i] = Trimap::kBackground; break;
      case 128: levels[i] = Trimap::kUnknown; break;
      case 255: levels[i] = Trimap::kForeground; break;
      default:
        throw ValueError(path.string() + ": trimap level " + std::to_string(d.samples[i]) +
                         " is not 0, 128 or 255");
    }
  }
  return Trimap(d.height, d.width, std::move(levels));
}

void write_trimap_png(const std::filesystem::path& path, const Trimap& trimap) {
  encode(path, trimap.height(), trimap.width(), 1, BitDepth::Eight,
         std::vector<double>(trimap.values().begin(), trimap.values().end()));
}

std::pair<Image, AlphaMask> split_rgba(const Image& rgba) {
  if (rgba.channels() != 4) throw ShapeError("split_rgba: expected 4 channels");
  AlphaMask alpha(rgba.height(), rgba.width());
  for (int y = 0; y < rgba.height(); ++y)
    for (int x = 0; x < rgba.width(); ++x) alpha.at(y, x) = rgba.at(y, x, 3);
  return {rgba.channel_range(0, 3), std::move(alpha)};
}

Image merge_rgba(const Image& rgb, const AlphaMask& alpha) {
  if (rgb.channels() != 3) throw ShapeError("merge_rgba: expected 3 colour channels");
  require_same_size(rgb, alpha, "merge_rgba");
  Raster out(rgb.height(), rgb.width(), 4);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = rgb.at(y, x, c);
      out.at(y, x, 3) = alpha.at(y, x);
    }
  }
  return Image(std::move(out));
}

Image alpha_as_image(const AlphaMask& alpha) {
  return Image(Raster(alpha.height(), alpha.width(), 1,
                      std::vector<double>(alpha.values().begin(), alpha.values().end())));
}

AlphaMask image_as_alpha(const Image& gray) {
  if (gray.channels() != 1) throw ShapeError("image_as_alpha: expected 1 channel");
  return AlphaMask(gray.height(), gray.width(),
                   std::vector<double>(gray.values().begin(), gray.values().end()));
}

}  // namespace layerforge
