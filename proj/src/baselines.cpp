#include "layerforge/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "layerforge/errors.hpp"

namespace layerforge::baselines {

namespace {

struct Level {
  Raster c;
  AlphaMask alpha;
};

Level downsample(const Level& in) {
  const int h = in.c.height() / 2, w = in.c.width() / 2, ch = in.c.channels();
  Level out{Raster(h, w, ch), AlphaMask(h, w)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double a = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) a += in.alpha.at(2 * y + dy, 2 * x + dx);
      out.alpha.at(y, x) = a / 4;
      for (int c = 0; c < ch; ++c) {
        double s = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) s += in.c.at(2 * y + dy, 2 * x + dx, c);
        out.c.at(y, x, c) = s / 4;
      }
    }
  return out;
}

// Nearest-neighbour upsampling to (h, w); odd sizes repeat the last row/column.
Raster upsample(const Raster& r, int h, int w) {
  Raster out(h, w, r.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < r.channels(); ++c)
        out.at(y, x, c) = r.at(std::min(y / 2, r.height() - 1), std::min(x / 2, r.width() - 1), c);
  return out;
}

double mean_residual(const Raster& c, const AlphaMask& alpha, const Raster& f, const Raster& b) {
  double s = 0;
  for (int y = 0; y < c.height(); ++y)
    for (int x = 0; x < c.width(); ++x) {
      const double a = alpha.at(y, x);
      for (int k = 0; k < c.channels(); ++k)
        s += std::abs(a * f.at(y, x, k) + (1 - a) * b.at(y, x, k) - c.at(y, x, k));
    }
  return s / double(c.size());
}

double edge_weight(const AlphaMask& alpha, int y0, int x0, int y1, int x1, const SolverConfig& cfg) {
  return cfg.regularization + cfg.smoothness * std::abs(alpha.at(y0, x0) - alpha.at(y1, x1));
}

// One SOR sweep in raster order over every pixel and channel; returns the largest update.
double sweep(const Level& lv, Raster& f, Raster& b, const SolverConfig& cfg) {
  const int h = lv.c.height(), w = lv.c.width();
  const double anchor = cfg.anchor, omega = cfg.relaxation;
  double largest = 0;
  constexpr int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double a = lv.alpha.at(y, x);
      double wn[4] = {0, 0, 0, 0}, wsum = 0;
      for (int d = 0; d < 4; ++d) {
        const int qy = y + dy[d], qx = x + dx[d];
        if (qy < 0 || qy >= h || qx < 0 || qx >= w) continue;
        wn[d] = edge_weight(lv.alpha, y, x, qy, qx, cfg);
        wsum += wn[d];
      }
      const double m11 = a * a + wsum + anchor;
      const double m12 = a * (1 - a);
      const double m22 = (1 - a) * (1 - a) + wsum + anchor;
      const double det = m11 * m22 - m12 * m12;
      for (int k = 0; k < lv.c.channels(); ++k) {
        double sf = 0, sb = 0;
        for (int d = 0; d < 4; ++d) {
          if (wn[d] == 0) continue;
          sf += wn[d] * f.at(y + dy[d], x + dx[d], k);
          sb += wn[d] * b.at(y + dy[d], x + dx[d], k);
        }
        const double cv = lv.c.at(y, x, k);
        const double r1 = a * cv + sf + anchor * cv;
        const double r2 = (1 - a) * cv + sb + anchor * cv;
        const double fs = (m22 * r1 - m12 * r2) / det;
        const double bs = (m11 * r2 - m12 * r1) / det;
        const double uf = omega * (fs - f.at(y, x, k)), ub = omega * (bs - b.at(y, x, k));
        f.at(y, x, k) += uf;
        b.at(y, x, k) += ub;
        largest = std::max({largest, std::abs(uf), std::abs(ub)});
      }
    }
  return largest;
}

}  // namespace

int SolverConfig::resolved_levels(int height, int width) const {
  if (levels > 0) return levels;
  const int m = std::min(height, width);
  return std::max(1, int(std::floor(std::log2(double(m)))) - 2);
}

double layer_energy(const Raster& c, const AlphaMask& alpha, const Raster& f, const Raster& b,
                    const SolverConfig& cfg) {
  const int h = c.height(), w = c.width();
  double data = 0, smooth = 0, reg = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double a = alpha.at(y, x);
      const double wx = x + 1 < w ? edge_weight(alpha, y, x, y, x + 1, cfg) : 0.0;
      const double wy = y + 1 < h ? edge_weight(alpha, y, x, y + 1, x, cfg) : 0.0;
      for (int k = 0; k < c.channels(); ++k) {
        const double fv = f.at(y, x, k), bv = b.at(y, x, k), cv = c.at(y, x, k);
        const double r = a * fv + (1 - a) * bv - cv;
        data += r * r;
        reg += (fv - cv) * (fv - cv) + (bv - cv) * (bv - cv);
        if (x + 1 < w) {
          const double df = f.at(y, x + 1, k) - fv, db = b.at(y, x + 1, k) - bv;
          smooth += wx * (df * df + db * db);
        }
        if (y + 1 < h) {
          const double df = f.at(y + 1, x, k) - fv, db = b.at(y + 1, x, k) - bv;
          smooth += wy * (df * df + db * db);
        }
      }
    }
  return data + smooth + cfg.anchor * reg;
}

SolverResult smooth_color_estimate(const Image& composite, const AlphaMask& alpha,
                                   const SolverConfig& cfg) {
  require_same_size(composite, alpha, "smooth_color_estimate");
  if (cfg.smoothness < 0 || cfg.regularization <= 0 || cfg.anchor <= 0 || cfg.tolerance <= 0 || cfg.iterations < 1 ||
      !(cfg.relaxation > 0 && cfg.relaxation < 2)) {
    throw ValueError("smooth_color_estimate: invalid solver configuration");
  }
  const int levels = cfg.resolved_levels(composite.height(), composite.width());
  std::vector<Level> pyramid{{composite.raster(), alpha}};
  for (int l = 1; l < levels; ++l) {
    if (pyramid.back().c.height() < 2 || pyramid.back().c.width() < 2) break;
    pyramid.push_back(downsample(pyramid.back()));
  }

  SolverResult result;
  const Level& full = pyramid.front();
  Raster f, b;
  for (int l = int(pyramid.size()) - 1; l >= 0; --l) {
    const Level& lv = pyramid[l];
    if (f.empty()) {
      f = lv.c;
      b = lv.c;
    } else {
      f = upsample(f, lv.c.height(), lv.c.width());
      b = upsample(b, lv.c.height(), lv.c.width());
    }
    std::vector<double> energy{layer_energy(lv.c, lv.alpha, f, b, cfg)};
    bool done = false;
    for (int it = 0; it < cfg.iterations && !done; ++it) {
      const double largest = sweep(lv, f, b, cfg);
      energy.push_back(layer_energy(lv.c, lv.alpha, f, b, cfg));
      done = largest <= cfg.tolerance;
    }
    if (!done) result.converged = false;
    result.energies.push_back(std::move(energy));
    Raster fu = f, bu = b;
    for (int i = l; i > 0; --i) {
      fu = upsample(fu, pyramid[i - 1].c.height(), pyramid[i - 1].c.width());
      bu = upsample(bu, pyramid[i - 1].c.height(), pyramid[i - 1].c.width());
    }
    result.level_residuals.push_back(mean_residual(full.c, full.alpha, fu, bu));
  }
  result.foreground = Image::clamped(std::move(f));
  result.background = Image::clamped(std::move(b));
  return result;
}

BinaryMask occlusion_mask(const AlphaMask& alpha, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValueError("occlusion_mask: threshold must be in (0,1)");
  return to_binary(alpha, threshold);
}

Image diffusion_inpaint(const Image& img, const BinaryMask& mask, int max_sweeps, double tolerance) {
  require_same_size(img, mask, "diffusion_inpaint");
  const int h = img.height(), w = img.width(), ch = img.channels();
  Raster out = img.raster();
  const std::size_t known = mask.size() - mask.count();
  for (int k = 0; k < ch; ++k) {
    double mean = 0.5;
    if (known > 0) {
      mean = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (!mask.at(y, x)) mean += img.at(y, x, k);
      mean /= double(known);
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (mask.at(y, x)) out.at(y, x, k) = mean;
  }
  if (known == 0 || mask.count() == 0) return Image::clamped(std::move(out));

  for (int s = 0; s < max_sweeps; ++s) {
    double change = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!mask.at(y, x)) continue;
        const int n = (y > 0) + (y + 1 < h) + (x > 0) + (x + 1 < w);
        for (int k = 0; k < ch; ++k) {
          double acc = 0;
          if (y > 0) acc += out.at(y - 1, x, k);
          if (y + 1 < h) acc += out.at(y + 1, x, k);
          if (x > 0) acc += out.at(y, x - 1, k);
          if (x + 1 < w) acc += out.at(y, x + 1, k);
          const double v = acc / n;
          change = std::max(change, std::abs(v - out.at(y, x, k)));
          out.at(y, x, k) = v;
        }
      }
    if (change < tolerance) break;
  }
  return Image::clamped(std::move(out));
}

Inpainter diffusion_inpainter() {
  return {"builtin.diffusion", [](const Image& img, const BinaryMask& m) { return diffusion_inpaint(img, m); }};
}

Image inpaint_occluded(const Image& background, const BinaryMask& mask, const Inpainter& inpainter) {
  require_same_size(background, mask, "inpaint_occluded");
  if (mask.count() == 0) return background;
  auto stats = [&] {
    char buf[96];
    std::snprintf(buf, sizeof buf, "mask %zu/%zu pixels (%.1f%%)", mask.count(), mask.size(),
                  100.0 * double(mask.count()) / double(mask.size()));
    return std::string(buf);
  };
  Image filled;
  try {
    filled = inpainter.run(background, mask);
  } catch (const std::exception& e) {
    throw AdapterError("inpainter '" + inpainter.name + "' failed on " + stats() + ": " + e.what());
  }
  if (!filled.same_shape(background)) {
    throw AdapterError("inpainter '" + inpainter.name + "' returned a differently shaped image for " + stats());
  }
  Image out = background;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (mask.at(y, x))
        for (int k = 0; k < out.channels(); ++k) out.at(y, x, k) = filled.at(y, x, k);
  return out;
}

}  // namespace layerforge::baselines
