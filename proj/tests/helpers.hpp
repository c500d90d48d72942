#pragma once

#include <cstdint>
#include <random>

#include "layerforge/image.hpp"

namespace testing {

inline layerforge::Image random_image(std::mt19937_64& rng, int h, int w, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  layerforge::Raster r(h, w, c);
  for (double& v : r.values()) v = u(rng);
  return layerforge::Image(std::move(r));
}

inline layerforge::AlphaMask random_alpha(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  layerforge::AlphaMask a(h, w);
  for (double& v : a.values()) v = u(rng);
  return a;
}

inline layerforge::BinaryMask random_binary(std::mt19937_64& rng, int h, int w, double p = 0.5) {
  std::bernoulli_distribution b(p);
  layerforge::BinaryMask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(y, x, b(rng));
  return m;
}

}  // namespace testing
