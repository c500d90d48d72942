#include "layerforge/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "layerforge/compose.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/trimap.hpp"
#include "layerforge/util.hpp"

namespace layerforge::dataset {
namespace {

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

// Resamples one axis. `axis` 0 resizes rows (height), 1 resizes columns (width).
Raster resize_axis(const Raster& in, int target, int axis) {
  const int src = axis == 0 ? in.height() : in.width();
  if (src == target) return in;
  const int h = axis == 0 ? target : in.height();
  const int w = axis == 0 ? in.width() : target;
  const int ch = in.channels();
  Raster out(h, w, ch);
  const double scale = double(src) / double(target);
  for (int i = 0; i < target; ++i) {
    const double pos = (i + 0.5) * scale - 0.5;
    const int base = int(std::floor(pos));
    std::array<double, 4> wts{};
    std::array<int, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      const int j = base - 1 + k;
      wts[k] = cubic_weight(pos - j);
      idx[k] = std::clamp(j, 0, src - 1);
    }
    const int other = axis == 0 ? w : h;
    for (int o = 0; o < other; ++o) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          acc += wts[k] * (axis == 0 ? in.at(idx[k], o, c) : in.at(o, idx[k], c));
        }
        if (axis == 0) {
          out.at(i, o, c) = acc;
        } else {
          out.at(o, i, c) = acc;
        }
      }
    }
  }
  return out;
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Smooth lattice noise in [0,1] with cell size `cell` pixels.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int extent, double cell) : cell_(cell) {
    cells_ = int(std::ceil(extent / cell)) + 2;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    lattice_.resize(std::size_t(cells_) * cells_);
    for (double& v : lattice_) v = u(rng);
  }

  double operator()(double y, double x) const {
    const double gy = y / cell_;
    const double gx = x / cell_;
    const int iy = int(std::floor(gy));
    const int ix = int(std::floor(gx));
    const double ty = smoothstep(0.0, 1.0, gy - iy);
    const double tx = smoothstep(0.0, 1.0, gx - ix);
    auto l = [&](int yy, int xx) {
      yy = std::clamp(yy, 0, cells_ - 1);
      xx = std::clamp(xx, 0, cells_ - 1);
      return lattice_[std::size_t(yy) * cells_ + xx];
    };
    const double top = l(iy, ix) * (1 - tx) + l(iy, ix + 1) * tx;
    const double bottom = l(iy + 1, ix) * (1 - tx) + l(iy + 1, ix + 1) * tx;
    return top * (1 - ty) + bottom * ty;
  }

 private:
  double cell_;
  int cells_ = 0;
  std::vector<double> lattice_;
};

using Color = std::array<double, 3>;

Color random_color(Rng& rng, double lo = 0.1, double hi = 0.9) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

// Two-colour field: linear gradient, low-frequency stripes and value noise.
Raster texture_field(Rng& rng, int res, double stripe_strength) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Color c0 = random_color(rng);
  Color c1 = random_color(rng);
  double dist = 0.0;
  for (int c = 0; c < 3; ++c) dist += std::abs(c1[c] - c0[c]);
  if (dist < 0.45) {
    for (int c = 0; c < 3; ++c) c1[c] = 1.0 - c0[c];
  }
  const Color tint = random_color(rng, -0.15, 0.15);
  const double angle = u(rng) * 2.0 * std::numbers::pi;
  const double gx = std::cos(angle), gy = std::sin(angle);
  const double stripe_angle = u(rng) * std::numbers::pi;
  const double period = res * (0.2 + 0.3 * u(rng));
  const double phase = u(rng) * 2.0 * std::numbers::pi;
  const double sx = std::cos(stripe_angle), sy = std::sin(stripe_angle);
  const ValueNoise coarse(rng, res, res / 4.0);
  const ValueNoise fine(rng, res, res / 8.0);
  Raster out(res, res, 3);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double ny = double(y) / res - 0.5;
      const double nx = double(x) / res - 0.5;
      const double g = std::clamp(0.5 + gx * nx + gy * ny, 0.0, 1.0);
      const double stripe =
          stripe_strength * std::sin(2.0 * std::numbers::pi * (sx * x + sy * y) / period + phase);
      const double n = 0.6 * coarse(y, x) + 0.4 * fine(y, x) - 0.5;
      for (int c = 0; c < 3; ++c) {
        const double v = c0[c] * (1 - g) + c1[c] * g + 0.18 * n + stripe + tint[c] * n;
        out.at(y, x, c) = std::clamp(v, 0.02, 0.98);
      }
    }
  }
  return out;
}

enum class ShapeKind { Ellipse, Polygon, Ring };

}  // namespace

Image resize_bicubic(const Image& img, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("resize_bicubic: target must be positive");
  Raster r = resize_axis(img.raster(), height, 0);
  r = resize_axis(r, width, 1);
  return Image::clamped(std::move(r));
}

Image standardize(const Image& img, int short_side, int crop) {
  if (short_side < 1 || crop < 1) throw ValueError("standardize: sizes must be positive");
  if (crop > short_side) throw ValueError("standardize: crop larger than short side");
  const int h = img.height();
  const int w = img.width();
  int nh, nw;
  if (h <= w) {
    nh = short_side;
    nw = int(std::lround(double(w) * short_side / h));
  } else {
    nw = short_side;
    nh = int(std::lround(double(h) * short_side / w));
  }
  const Image resized = (nh == h && nw == w) ? img : resize_bicubic(img, nh, nw);
  if (crop > nh || crop > nw) throw ShapeError("standardize: crop larger than resized image");
  const int oy = (nh - crop) / 2;
  const int ox = (nw - crop) / 2;
  Raster out(crop, crop, img.channels());
  for (int y = 0; y < crop; ++y)
    for (int x = 0; x < crop; ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = resized.at(oy + y, ox + x, c);
  return Image(std::move(out));
}

ForegroundStyle ForegroundStyle::object_centric(int resolution) {
  ForegroundStyle s;
  s.resolution = resolution;
  s.min_scale = 0.9;
  s.max_scale = 1.0;
  s.centered = true;
  return s;
}

ForegroundAsset procedural_foreground(std::uint64_t seed, const ForegroundStyle& style) {
  const int res = style.resolution;
  if (res < 8) throw ValueError("procedural_foreground: resolution must be >= 8");
  Rng rng(mix_seed(seed, 0xf0));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double px = res / 64.0;
  const double feather = px * (style.feather_min + (style.feather_max - style.feather_min) * u(rng));
  const auto kind = ShapeKind(std::uniform_int_distribution<int>(0, 2)(rng));
  const double scale = style.min_scale + (style.max_scale - style.min_scale) * u(rng);
  // Keep an opaque core at least a few pixels wide after feathering.
  const double radius = std::max(0.5 * scale * res, feather + 3.0 * px);
  double cy, cx;
  if (style.centered) {
    cy = res * (0.5 + 0.04 * (u(rng) - 0.5));
    cx = res * (0.5 + 0.04 * (u(rng) - 0.5));
  } else {
    cy = res * u(rng);
    cx = res * u(rng);
  }
  const double rotation = u(rng) * std::numbers::pi;
  const double aspect = 0.55 + 0.45 * u(rng);
  const double minor = std::max(radius * aspect, feather + 3.0 * px);
  const double cr = std::cos(rotation), sr = std::sin(rotation);

  std::vector<std::array<double, 2>> normals;  // polygon edge normals
  double apothem = 0.0;
  if (kind == ShapeKind::Polygon) {
    const int sides = std::uniform_int_distribution<int>(3, 8)(rng);
    for (int k = 0; k < sides; ++k) {
      const double a = rotation + 2.0 * std::numbers::pi * (k + 0.3 * (u(rng) - 0.5)) / sides;
      normals.push_back({std::cos(a), std::sin(a)});
    }
    apothem = radius * std::cos(std::numbers::pi / sides) * 0.95;
  }
  const double ring_thickness = std::max(0.45 * radius, 2.0 * feather + 3.0 * px);

  // Semi-transparent region: a half-plane on one side of the object, away from its centre.
  const bool translucent = u(rng) < style.semi_transparent_probability;
  const double opacity = 0.3 + 0.5 * u(rng);
  const double cut_angle = u(rng) * 2.0 * std::numbers::pi;
  const double cut_offset = 0.3 * radius;
  const double cut_nx = std::cos(cut_angle), cut_ny = std::sin(cut_angle);

  Rng texture_rng(mix_seed(seed, 0xf1));
  const Raster fill = texture_field(texture_rng, res, 0.08);

  Raster rgba(res, res, 4);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double dy = y + 0.5 - cy;
      const double dx = x + 0.5 - cx;
      const double ux = cr * dx + sr * dy;
      const double uy = -sr * dx + cr * dy;
      double sd = 0.0;
      switch (kind) {
        case ShapeKind::Ellipse: {
          const double rho = std::sqrt((ux / radius) * (ux / radius) + (uy / minor) * (uy / minor));
          sd = (rho - 1.0) * minor;
          break;
        }
        case ShapeKind::Polygon: {
          sd = -1e300;
          for (const auto& n : normals) sd = std::max(sd, n[0] * dx + n[1] * dy - apothem);
          break;
        }
        case ShapeKind::Ring: {
          const double rho = std::sqrt(ux * ux + uy * uy);
          sd = std::abs(rho - (radius - 0.5 * ring_thickness)) - 0.5 * ring_thickness;
          break;
        }
      }
      double a = 1.0 - smoothstep(-0.5 * feather, 0.5 * feather, sd);
      if (translucent) {
        const double along = cut_nx * dx + cut_ny * dy - cut_offset;
        const double m = smoothstep(-feather, feather, along);
        a *= 1.0 - (1.0 - opacity) * m;
      }
      for (int c = 0; c < 3; ++c) rgba.at(y, x, c) = fill.at(y, x, c);
      rgba.at(y, x, 3) = std::clamp(a, 0.0, 1.0);
    }
  }
  return {Image(std::move(rgba)), "procedural-fg-" + std::to_string(seed)};
}

BackgroundAsset procedural_background(std::uint64_t seed, const BackgroundStyle& style) {
  const int res = style.resolution;
  if (res < 8) throw ValueError("procedural_background: resolution must be >= 8");
  Rng rng(mix_seed(seed, 0xb0));
  return {Image(texture_field(rng, res, 0.12)), "procedural-bg-" + std::to_string(seed)};
}

Trimap matting_trimap(const AlphaMask& alpha, std::uint64_t seed, const MattingTrimapConfig& cfg) {
  if (cfg.min_radius > cfg.max_radius) throw ValueError("matting_trimap: min_radius > max_radius");
  Rng rng(mix_seed(seed, 0x7a));
  std::uniform_int_distribution<int> pick(std::max(cfg.min_radius, 0), std::max(cfg.max_radius, 0));
  const double scale = std::min(alpha.height(), alpha.width()) / 64.0;
  auto draw = [&] { return std::max(1, int(std::lround(pick(rng) * scale))); };
  const int erode_r = draw();
  const int dilate_r = draw();
  return make_trimap(alpha, erode_r, dilate_r, cfg.threshold);
}

DatasetSample synthesize_sample(const ForegroundAsset& fg, const BackgroundAsset& bg,
                                std::uint64_t seed, bool with_trimap,
                                const MattingTrimapConfig& trimap_cfg) {
  if (fg.rgba.channels() != 4) throw ShapeError("synthesize_sample: foreground must be RGBA");
  if (bg.rgb.channels() != 3) throw ShapeError("synthesize_sample: background must be RGB");
  require_same_size(fg.rgba, bg.rgb, "synthesize_sample");
  DatasetSample s;
  s.foreground = fg.rgba.channel_range(0, 3);
  s.alpha = AlphaMask(fg.rgba.height(), fg.rgba.width());
  for (int y = 0; y < fg.rgba.height(); ++y)
    for (int x = 0; x < fg.rgba.width(); ++x) s.alpha.at(y, x) = fg.rgba.at(y, x, 3);
  s.background = bg.rgb;
  s.composite = composite(s.foreground, s.background, s.alpha);
  if (with_trimap) s.trimap = matting_trimap(s.alpha, seed, trimap_cfg);
  s.seed = seed;
  return s;
}

double recomposition_error(const DatasetSample& sample) {
  const Image c = composite(sample.foreground, sample.background, sample.alpha);
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    worst = std::max(worst, std::abs(c.values()[i] - sample.composite.values()[i]));
  }
  return worst;
}

}  // namespace layerforge::dataset
