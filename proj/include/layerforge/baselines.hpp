#pragma once

#include <functional>
#include <string>
#include <vector>

#include "layerforge/image.hpp"

namespace layerforge::baselines {

/// Edge weight between neighbours p, q is  regularization + smoothness * |a_p - a_q|.
struct SolverConfig {
  double smoothness = 1.0;
  double regularization = 1e-5;
  double anchor = 1e-8;  // weight of (F - C)^2 + (B - C)^2, keeps the system definite
  int levels = 0;        // 0: log2(min(H, W)) - 2, at least 1
  int iterations = 2000;
  double tolerance = 1e-7;  // largest per-sweep update that ends a level
  double relaxation = 1.5;  // SOR factor in (0, 2)

  int resolved_levels(int height, int width) const;
};

struct SolverResult {
  Image foreground;
  Image background;
  bool converged = true;  // warning flag: some level ran out of iterations first
  std::vector<std::vector<double>> energies;  // per level: initial energy, then one per sweep
  std::vector<double> level_residuals;        // full-resolution mean |aF + (1-a)B - C| after each level
};

/// Total energy  sum (aF + (1-a)B - C)^2 + sum_edges w_pq ((F_p - F_q)^2 + (B_p - B_q)^2)
///             + anchor ((F - C)^2 + (B - C)^2), each 4-neighbour edge counted once.
double layer_energy(const Raster& c, const AlphaMask& alpha, const Raster& f, const Raster& b,
                    const SolverConfig& cfg);

/// Coarse-to-fine block Gauss-Seidel with over-relaxation: each pixel's (F, B) pair is
/// solved exactly against its neighbours, so the energy never increases within a level.
SolverResult smooth_color_estimate(const Image& composite, const AlphaMask& alpha,
                                   const SolverConfig& cfg = {});

/// 1 where alpha > threshold.
BinaryMask occlusion_mask(const AlphaMask& alpha, double threshold = 0.95);

struct Inpainter {
  std::string name;
  std::function<Image(const Image&, const BinaryMask&)> run;
};

/// Isotropic diffusion fill of the masked pixels from their unmasked surroundings.
/// A fully masked image becomes constant 0.5.
Image diffusion_inpaint(const Image& img, const BinaryMask& mask, int max_sweeps = 4000,
                        double tolerance = 1e-6);
Inpainter diffusion_inpainter();

/// Replaces masked pixels with the inpainter's output; unmasked pixels keep their exact values.
/// Inpainter failures are rethrown as AdapterError with the mask statistics.
Image inpaint_occluded(const Image& background, const BinaryMask& mask,
                       const Inpainter& inpainter = diffusion_inpainter());

}  // namespace layerforge::baselines
