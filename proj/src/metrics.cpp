#include "layerforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "layerforge/errors.hpp"
#include "layerforge/haar.hpp"

namespace layerforge::metrics {

LayerErrors layer_errors(const Image& pred, const Image& gt, const PerceptualFn& perceptual) {
  if (!pred.same_shape(gt)) throw ShapeError("layer_errors: prediction and ground truth differ in shape");
  LayerErrors e;
  e.elements = pred.size();
  double abs_sum = 0, sq_sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values()[i] - gt.values()[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  e.sad = abs_sum;
  e.mad = abs_sum / double(e.elements);
  e.mse = sq_sum / double(e.elements);
  if (perceptual) e.perceptual = perceptual(pred, gt);
  return e;
}

double psnr(const Image& a, const Image& b) {
  const double mse = layer_errors(a, b).mse;
  return mse == 0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
}

std::optional<FGStats> fg_stats(const AlphaMask& alpha, double threshold) {
  const int h = alpha.height(), w = alpha.width();
  int y0 = h, y1 = -1, x0 = w, x1 = -1;
  std::size_t count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (alpha.at(y, x) > threshold) {
        ++count;
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
  if (count == 0) return std::nullopt;
  FGStats s;
  s.occupancy_ratio = 100.0 * double(count) / double(alpha.size());
  s.longest_span = 100.0 * std::max(double(y1 - y0 + 1) / h, double(x1 - x0 + 1) / w);
  s.vertical_center = 100.0 * (double(y0 + y1 + 1) / 2.0) / h;
  s.horizontal_center = 100.0 * (double(x0 + x1 + 1) / 2.0) / w;
  return s;
}

MIoU fg_miou(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "fg_miou");
  std::size_t inter_fg = 0, union_fg = 0, inter_bg = 0, union_bg = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const bool p = a.at(y, x), q = b.at(y, x);
      inter_fg += p && q;
      union_fg += p || q;
      inter_bg += !p && !q;
      union_bg += !p || !q;
    }
  auto iou = [](std::size_t i, std::size_t u) { return u == 0 ? 1.0 : double(i) / double(u); };
  MIoU m;
  m.foreground_iou = iou(inter_fg, union_fg);
  m.miou = 0.5 * (m.foreground_iou + iou(inter_bg, union_bg));
  return m;
}

Raster gradient_magnitude(const Image& img) {
  const int h = img.height(), w = img.width();
  Raster g(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int c = 0; c < img.channels(); ++c) {
        const double gx = (img.at(y, std::min(x + 1, w - 1), c) - img.at(y, std::max(x - 1, 0), c)) / 2;
        const double gy = (img.at(std::min(y + 1, h - 1), x, c) - img.at(std::max(y - 1, 0), x, c)) / 2;
        s += gx * gx + gy * gy;
      }
      g.at(y, x) = std::sqrt(s);
    }
  return g;
}

namespace {

// Chessboard distance from each pixel to the nearest pixel of the other class.
std::vector<int> distance_to_opposite(const BinaryMask& region) {
  const int h = region.height(), w = region.width();
  std::vector<int> dist(std::size_t(h) * w, -1);
  std::deque<std::pair<int, int>> queue;
  // Seed: pixels with an 8-neighbour of the other class are at distance 1.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy)
        for (int dx = -1; dx <= 1 && !edge; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          edge = region.at(yy, xx) != region.at(y, x);
        }
      if (edge) {
        dist[std::size_t(y) * w + x] = 1;
        queue.emplace_back(y, x);
      }
    }
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    const int d = dist[std::size_t(y) * w + x];
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        if (region.at(yy, xx) != region.at(y, x)) continue;
        int& t = dist[std::size_t(yy) * w + xx];
        if (t < 0) {
          t = d + 1;
          queue.emplace_back(yy, xx);
        }
      }
  }
  return dist;
}

}  // namespace

std::optional<double> seam_metric(const Image& background, const AlphaMask& alpha, const SeamConfig& cfg) {
  require_same_size(background, alpha, "seam_metric");
  if (cfg.control_distance < 1) throw ValueError("seam_metric: control_distance must be >= 1");
  const int h = alpha.height(), w = alpha.width();
  BinaryMask occluded(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) occluded.set(y, x, alpha.at(y, x) >= 1.0 - cfg.eps);
  if (occluded.count() == 0 || occluded.count() == occluded.size()) return std::nullopt;

  const std::vector<int> dist = distance_to_opposite(occluded);
  const Raster grad = gradient_magnitude(background);
  const int control = 1 + cfg.control_distance;
  double on = 0, in = 0, out = 0;
  std::size_t n_on = 0, n_in = 0, n_out = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int d = dist[std::size_t(y) * w + x];
      const double g = grad.at(y, x);
      if (occluded.at(y, x)) {
        if (d == 1) on += g, ++n_on;
        if (d == control) in += g, ++n_in;
      } else if (d == control) {
        out += g, ++n_out;
      }
    }
  if (n_on == 0 || n_in == 0 || n_out == 0) return std::nullopt;
  return on / double(n_on) - (in + out) / double(n_in + n_out);
}

std::vector<double> handcrafted_embedding(const Image& img) {
  std::vector<double> f;
  const int h = img.height(), w = img.width(), ch = img.channels();
  for (int c = 0; c < ch; ++c) {
    double m = 0, v = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m += img.at(y, x, c);
    m /= double(img.pixel_count());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) v += (img.at(y, x, c) - m) * (img.at(y, x, c) - m);
    f.push_back(m);
    f.push_back(std::sqrt(v / double(img.pixel_count())));
  }
  for (int gy = 0; gy < 4; ++gy)
    for (int gx = 0; gx < 4; ++gx)
      for (int c = 0; c < ch; ++c) {
        double s = 0;
        int n = 0;
        for (int y = gy * h / 4; y < (gy + 1) * h / 4; ++y)
          for (int x = gx * w / 4; x < (gx + 1) * w / 4; ++x) s += img.at(y, x, c), ++n;
        f.push_back(n ? s / n : 0.0);
      }
  int levels = 0;
  while (levels < 3 && h % (2 << levels) == 0 && w % (2 << levels) == 0) ++levels;
  if (levels > 0) {
    const haar::HaarPyramid p = haar::haar_decompose(img.raster(), levels);
    for (const auto& scale : p.scales)
      for (haar::Direction d : haar::kDirections) {
        double e = 0;
        for (double v : scale.band(d).values()) e += v * v;
        f.push_back(e / double(scale.band(d).size()));
      }
  }
  return f;
}

namespace {

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean) {
  const Eigen::MatrixXd c = x.rowwise() - mean;
  return (c.transpose() * c) / double(x.rows() - 1);
}

}  // namespace

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double eps) {
  if (a.rows() < 2 || b.rows() < 2) throw ValueError("frechet_distance: need >= 2 samples per set");
  if (a.cols() != b.cols()) throw ShapeError("frechet_distance: embedding sizes differ");
  const Eigen::RowVectorXd ma = a.colwise().mean(), mb = b.colwise().mean();
  const Eigen::Index d = a.cols();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd sa = covariance(a, ma) + eps * I, sb = covariance(b, mb) + eps * I;
  const Eigen::MatrixXd ra = sym_sqrt(sa);
  const Eigen::MatrixXd cross = sym_sqrt(ra * sb * ra);
  const double fid = (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * cross.trace();
  return std::max(fid, 0.0);
}

double kernel_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index m = a.rows(), n = b.rows();
  if (m < 2 || n < 2) throw ValueError("kernel_distance: need >= 2 samples per set");
  if (a.cols() != b.cols()) throw ShapeError("kernel_distance: embedding sizes differ");
  const double d = double(a.cols());
  auto k = [d](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    return ((x * y.transpose()).array() / d + 1.0).cube().matrix().eval();
  };
  const Eigen::MatrixXd kaa = k(a, a), kbb = k(b, b), kab = k(a, b);
  const double saa = (kaa.sum() - kaa.trace()) / double(m * (m - 1));
  const double sbb = (kbb.sum() - kbb.trace()) / double(n * (n - 1));
  return saa + sbb - 2.0 * kab.sum() / double(m * n);
}

DistributionDistance distribution_distance(std::span<const Image> pred, std::span<const Image> ref,
                                           const Embedder& embedder) {
  if (pred.size() < 2 || ref.size() < 2) throw ValueError("distribution_distance: need >= 2 images per set");
  auto embed = [&](std::span<const Image> set) {
    Eigen::MatrixXd m;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const std::vector<double> e = embedder(set[i]);
      if (i == 0) m.resize(Eigen::Index(set.size()), Eigen::Index(e.size()));
      if (Eigen::Index(e.size()) != m.cols()) throw ShapeError("embedder returned varying sizes");
      for (std::size_t j = 0; j < e.size(); ++j) m(Eigen::Index(i), Eigen::Index(j)) = e[j];
    }
    return m;
  };
  const Eigen::MatrixXd a = embed(pred), b = embed(ref);
  return {frechet_distance(a, b), kernel_distance(a, b)};
}

}  // namespace layerforge::metrics
