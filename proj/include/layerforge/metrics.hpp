#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layerforge/compose.hpp"
#include "layerforge/image.hpp"

namespace layerforge::metrics {

using PerceptualFn = std::function<double(const Image&, const Image&)>;

/// Raw values; display scaling lives in the report emitter.
struct LayerErrors {
  double mad = 0.0;
  double mse = 0.0;
  double sad = 0.0;
  std::optional<double> perceptual;
  std::size_t elements = 0;  // pixels * channels
};

/// Multipliers applied when tables are printed.
struct DisplayScale {
  static constexpr double mad = 1e3;
  static constexpr double mse = 1e3;
  static constexpr double perceptual = 1e2;
  static constexpr double sad = 1e-3;
};

LayerErrors layer_errors(const Image& pred, const Image& gt, const PerceptualFn& perceptual = {});
double psnr(const Image& a, const Image& b);

/// All four values on a 0..100 scale.
struct FGStats {
  double occupancy_ratio = 0.0;
  double longest_span = 0.0;
  double vertical_center = 0.0;
  double horizontal_center = 0.0;
};

/// Foreground = alpha > threshold; the bounding box is the union over all components.
/// Returns nullopt when no pixel is foreground.
std::optional<FGStats> fg_stats(const AlphaMask& alpha, double threshold = 0.5);

struct MIoU {
  double miou = 1.0;            // mean of foreground- and background-class IoU
  double foreground_iou = 1.0;  // an empty class pair counts as IoU 1
};

MIoU fg_miou(const BinaryMask& layer_mask, const BinaryMask& semantic_mask);

struct SeamConfig {
  int control_distance = 3;  // chessboard offset of the control contours from the boundary
  double eps = kVisibleEpsilon;
};

/// Mean gradient magnitude of B on the inner boundary of the occluded region
/// (alpha >= 1 - eps) minus the mean over contours `control_distance` pixels inside and
/// outside it. nullopt when the region or either control contour is empty.
std::optional<double> seam_metric(const Image& background, const AlphaMask& alpha,
                                  const SeamConfig& cfg = {});

/// Per-pixel central-difference gradient magnitude, channels pooled.
Raster gradient_magnitude(const Image& img);

using Embedder = std::function<std::vector<double>(const Image&)>;

/// Colour moments, a 4x4 grid of channel means, and Haar detail energies per scale.
std::vector<double> handcrafted_embedding(const Image& img);

/// Rows are samples. The covariance square root uses `eps`-regularised eigendecompositions.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double eps = 1e-6);
/// Unbiased MMD^2 with the cubic polynomial kernel (x.y / d + 1)^3.
double kernel_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct DistributionDistance {
  double fid = 0.0;
  double kid = 0.0;
};

/// Desk-scale indicator only: the embedder is not an Inception network.
DistributionDistance distribution_distance(std::span<const Image> pred, std::span<const Image> ref,
                                           const Embedder& embedder = handcrafted_embedding);

}  // namespace layerforge::metrics
