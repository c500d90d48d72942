#include "layerforge/haar.hpp"

#include <algorithm>

#include "layerforge/errors.hpp"
#include "layerforge/png_io.hpp"

namespace layerforge::haar {

const Raster& DetailBands::band(Direction d) const {
  switch (d) {
    case Direction::Horizontal: return horizontal;
    case Direction::Vertical: return vertical;
    case Direction::Diagonal: return diagonal;
  }
  return diagonal;
}

Raster& DetailBands::band(Direction d) {
  return const_cast<Raster&>(static_cast<const DetailBands&>(*this).band(d));
}

int HFConfig::max_scale() const {
  validate();
  return *std::max_element(scales.begin(), scales.end());
}

void HFConfig::validate() const {
  if (scales.empty()) throw ValueError("HFConfig: scales must be non-empty");
  for (int s : scales) {
    if (s < 0) throw ValueError("HFConfig: scales must be non-negative");
  }
}

namespace {

void analyse(const Raster& x, Raster& approx, DetailBands& bands) {
  const int h = x.height() / 2;
  const int w = x.width() / 2;
  const int ch = x.channels();
  approx = Raster(h, w, ch);
  bands.horizontal = Raster(h, w, ch);
  bands.vertical = Raster(h, w, ch);
  bands.diagonal = Raster(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      for (int c = 0; c < ch; ++c) {
        const double p = x.at(2 * y, 2 * xx, c);
        const double q = x.at(2 * y, 2 * xx + 1, c);
        const double r = x.at(2 * y + 1, 2 * xx, c);
        const double s = x.at(2 * y + 1, 2 * xx + 1, c);
        approx.at(y, xx, c) = 0.5 * (p + q + r + s);
        bands.horizontal.at(y, xx, c) = 0.5 * (p - q + r - s);
        bands.vertical.at(y, xx, c) = 0.5 * (p + q - r - s);
        bands.diagonal.at(y, xx, c) = 0.5 * (p - q - r + s);
      }
    }
  }
}

Raster synthesise(const Raster& approx, const DetailBands& bands) {
  const int h = approx.height();
  const int w = approx.width();
  const int ch = approx.channels();
  for (Direction d : kDirections) {
    if (!bands.band(d).same_shape(approx)) {
      throw ShapeError("haar_reconstruct: subband shape differs from approximation");
    }
  }
  Raster out(2 * h, 2 * w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        const double a = approx.at(y, x, c);
        const double hz = bands.horizontal.at(y, x, c);
        const double v = bands.vertical.at(y, x, c);
        const double d = bands.diagonal.at(y, x, c);
        out.at(2 * y, 2 * x, c) = 0.5 * (a + hz + v + d);
        out.at(2 * y, 2 * x + 1, c) = 0.5 * (a - hz + v - d);
        out.at(2 * y + 1, 2 * x, c) = 0.5 * (a + hz - v - d);
        out.at(2 * y + 1, 2 * x + 1, c) = 0.5 * (a - hz - v + d);
      }
    }
  }
  return out;
}

Raster difference(const Raster& a, const Raster& b) {
  if (!a.same_shape(b)) throw ShapeError("high_frequency_loss: input shapes differ");
  Raster d(a.height(), a.width(), a.channels());
  auto dv = d.values();
  for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = a.values()[i] - b.values()[i];
  return d;
}

double subband_pixels(const Raster& band) { return double(band.pixel_count()); }

}  // namespace

HaarPyramid haar_decompose(const Raster& x, int levels) {
  if (levels < 1) throw ValueError("haar_decompose: levels must be >= 1");
  const int block = 1 << levels;
  if (x.height() % block != 0 || x.width() % block != 0) {
    throw ShapeError("haar_decompose: " + std::to_string(x.height()) + "x" +
                     std::to_string(x.width()) + " not divisible by 2^" +
                     std::to_string(levels));
  }
  HaarPyramid p;
  p.scales.resize(levels);
  Raster current = x;
  for (int s = 0; s < levels; ++s) {
    Raster approx;
    analyse(current, approx, p.scales[s]);
    current = std::move(approx);
  }
  p.approximation = std::move(current);
  return p;
}

HaarPyramid haar_decompose(const Image& x, int levels) { return haar_decompose(x.raster(), levels); }

Raster haar_reconstruct(const HaarPyramid& pyramid) {
  if (pyramid.scales.empty()) throw ShapeError("haar_reconstruct: empty pyramid");
  Raster current = pyramid.approximation;
  for (int s = pyramid.levels() - 1; s >= 0; --s) {
    current = synthesise(current, pyramid.scales[s]);
  }
  return current;
}

std::vector<double> high_frequency_loss_per_scale(const Raster& a, const Raster& b,
                                                  const HFConfig& cfg) {
  const int levels = cfg.max_scale() + 1;
  const HaarPyramid p = haar_decompose(difference(a, b), levels);
  std::vector<double> terms;
  terms.reserve(cfg.scales.size());
  for (int s : cfg.scales) {
    double term = 0.0;
    for (Direction d : kDirections) {
      const Raster& band = p.scales[s].band(d);
      double sq = 0.0;
      for (double v : band.values()) sq += v * v;
      term += sq / subband_pixels(band);
    }
    terms.push_back(term);
  }
  return terms;
}

double high_frequency_loss(const Raster& a, const Raster& b, const HFConfig& cfg) {
  double total = 0.0;
  for (double t : high_frequency_loss_per_scale(a, b, cfg)) total += t;
  return total;
}

double high_frequency_loss(const Image& a, const Image& b, const HFConfig& cfg) {
  return high_frequency_loss(a.raster(), b.raster(), cfg);
}

Raster high_frequency_loss_gradient(const Raster& a, const Raster& b, const HFConfig& cfg) {
  // The pyramid is orthonormal, so the adjoint of analysis is synthesis.
  const int levels = cfg.max_scale() + 1;
  HaarPyramid p = haar_decompose(difference(a, b), levels);
  for (int s = 0; s < levels; ++s) {
    for (Direction d : kDirections) {
      Raster& band = p.scales[s].band(d);
      // Repeated scales in cfg count once per occurrence.
      const double weight =
          2.0 * double(std::count(cfg.scales.begin(), cfg.scales.end(), s)) /
          subband_pixels(band);
      for (double& v : band.values()) v *= weight;
    }
  }
  for (double& v : p.approximation.values()) v = 0.0;
  return haar_reconstruct(p);
}

void write_pyramid_png(const std::filesystem::path& path, const HaarPyramid& pyramid,
                       int channel) {
  if (pyramid.scales.empty()) throw ShapeError("write_pyramid_png: empty pyramid");
  const Raster& fine = pyramid.scales[0].horizontal;
  const int h = fine.height() * 2;
  const int w = fine.width() * 2;
  Raster canvas(h, w, 1, 0.0);
  auto paste = [&](const Raster& band, int oy, int ox) {
    double lo = 1e300, hi = -1e300;
    for (int y = 0; y < band.height(); ++y)
      for (int x = 0; x < band.width(); ++x) {
        lo = std::min(lo, band.at(y, x, channel));
        hi = std::max(hi, band.at(y, x, channel));
      }
    const double span = hi > lo ? hi - lo : 1.0;
    for (int y = 0; y < band.height(); ++y)
      for (int x = 0; x < band.width(); ++x)
        canvas.at(oy + y, ox + x, 0) = (band.at(y, x, channel) - lo) / span;
  };
  // Standard layout: approximation top-left, details fill each quadrant ring.
  int size_h = h;
  int size_w = w;
  for (int s = 0; s < pyramid.levels(); ++s) {
    size_h /= 2;
    size_w /= 2;
    paste(pyramid.scales[s].horizontal, 0, size_w);
    paste(pyramid.scales[s].vertical, size_h, 0);
    paste(pyramid.scales[s].diagonal, size_h, size_w);
  }
  paste(pyramid.approximation, 0, 0);
  write_png(path, Image(std::move(canvas)));
}

}  // namespace layerforge::haar
