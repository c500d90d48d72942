#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/haar.hpp"

using namespace layerforge;
using namespace layerforge::haar;

namespace {

Raster random_raster(std::mt19937_64& rng, int h, int w, int c, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Raster r(h, w, c);
  for (double& v : r.values()) v = u(rng);
  return r;
}

double energy(const Raster& r) {
  double s = 0;
  for (double v : r.values()) s += v * v;
  return s;
}

// Detail coefficient straight from the Haar basis function: block of side 2^(s+1),
// weight +-1/2^(s+1) by quadrant sign pattern.
double basis_coefficient(const Raster& x, int s, Direction k, int by, int bx, int c) {
  const int side = 1 << (s + 1);
  const int half = side / 2;
  double acc = 0;
  for (int dy = 0; dy < side; ++dy) {
    for (int dx = 0; dx < side; ++dx) {
      const int sh = dx < half ? 1 : -1;
      const int sv = dy < half ? 1 : -1;
      const int sign = k == Direction::Horizontal ? sh : (k == Direction::Vertical ? sv : sh * sv);
      acc += sign * x.at(by * side + dy, bx * side + dx, c);
    }
  }
  return acc / side;
}

double brute_loss(const Raster& a, const Raster& b, const std::vector<int>& scales) {
  double total = 0;
  for (int s : scales) {
    const int side = 1 << (s + 1);
    const int bh = a.height() / side, bw = a.width() / side;
    for (Direction k : kDirections) {
      double sq = 0;
      for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x)
          for (int c = 0; c < a.channels(); ++c) {
            const double d = basis_coefficient(a, s, k, y, x, c) - basis_coefficient(b, s, k, y, x, c);
            sq += d * d;
          }
      total += sq / double(bh * bw);
    }
  }
  return total;
}

}  // namespace

TEST_CASE("haar constant image has no detail") {
  const HaarPyramid p = haar_decompose(Raster(8, 8, 3, 0.37), 3);
  for (const auto& bands : p.scales)
    for (Direction d : kDirections)
      for (double v : bands.band(d).values()) CHECK(v == 0.0);
}

TEST_CASE("haar 2x2 formulas") {
  const double p = 0.9, q = 0.1, r = 0.4, s = 0.7;
  const HaarPyramid pyr = haar_decompose(Raster(2, 2, 1, {p, q, r, s}), 1);
  CHECK(pyr.scales[0].horizontal.at(0, 0) == doctest::Approx((p - q + r - s) / 2));
  CHECK(pyr.scales[0].vertical.at(0, 0) == doctest::Approx((p + q - r - s) / 2));
  CHECK(pyr.scales[0].diagonal.at(0, 0) == doctest::Approx((p - q - r + s) / 2));
  CHECK(pyr.approximation.at(0, 0) == doctest::Approx((p + q + r + s) / 2));
}

TEST_CASE("haar subband shapes and energy preservation") {
  std::mt19937_64 rng(11);
  const Raster x = random_raster(rng, 8, 8, 1);
  const HaarPyramid p = haar_decompose(x, 3);
  double coeffs = energy(p.approximation);
  for (int s = 0; s < 3; ++s) {
    CHECK(p.scales[s].horizontal.height() == 8 >> (s + 1));
    for (Direction d : kDirections) coeffs += energy(p.scales[s].band(d));
  }
  CHECK(std::abs(coeffs - energy(x)) < 1e-6);
}

TEST_CASE("haar matches basis-function oracle") {
  std::mt19937_64 rng(12);
  const Raster x = random_raster(rng, 16, 8, 2);
  const HaarPyramid p = haar_decompose(x, 3);
  for (int s = 0; s < 3; ++s)
    for (Direction k : kDirections) {
      const Raster& band = p.scales[s].band(k);
      for (int y = 0; y < band.height(); ++y)
        for (int xx = 0; xx < band.width(); ++xx)
          for (int c = 0; c < 2; ++c)
            CHECK(band.at(y, xx, c) == doctest::Approx(basis_coefficient(x, s, k, y, xx, c)).epsilon(1e-12));
    }
}

TEST_CASE("haar reconstruct") {
  std::mt19937_64 rng(13);
  const Raster x = random_raster(rng, 16, 16, 3);
  const Raster back = haar_reconstruct(haar_decompose(x, 4));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back.values()[i] - x.values()[i]) < 1e-6);

  HaarPyramid zero = haar_decompose(Raster(4, 4, 1, 0.0), 2);
  const Raster zr = haar_reconstruct(zero);
  for (double v : zr.values()) CHECK(v == 0.0);

  HaarPyramid single = haar_decompose(Raster(2, 2, 1, 0.0), 1);
  single.approximation.at(0, 0) = 1.0;
  const Raster sr = haar_reconstruct(single);
  for (double v : sr.values()) CHECK(v == doctest::Approx(0.5));

  HaarPyramid broken = haar_decompose(Raster(4, 4, 1, 0.0), 1);
  broken.scales[0].diagonal = Raster(1, 1, 1);
  CHECK_THROWS_AS(haar_reconstruct(broken), ShapeError);
  CHECK_THROWS_AS(haar_decompose(Raster(6, 8, 1), 2), ShapeError);
  CHECK_THROWS_AS(haar_decompose(Raster(8, 8, 1), 0), ValueError);
}

TEST_CASE("high frequency loss fixtures") {
  std::mt19937_64 rng(14);
  const Raster x = random_raster(rng, 16, 16, 3, 0, 1);
  CHECK(high_frequency_loss(x, x) == 0.0);
  CHECK(high_frequency_loss(Raster(8, 8, 1, 0.2), Raster(8, 8, 1, 0.9)) == doctest::Approx(0.0));

  Raster checker(8, 8, 1);
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx) checker.at(y, xx) = (y + xx) % 2;
  const Raster zeros(8, 8, 1, 0.0);
  const double expected = brute_loss(checker, zeros, {0, 1, 2});
  CHECK(high_frequency_loss(checker, zeros) == doctest::Approx(expected).epsilon(1e-12));
  // Pixel checkerboard lives entirely in the finest diagonal band: 16 coefficients of 1.
  CHECK(expected == doctest::Approx(1.0));

  CHECK_THROWS_AS(high_frequency_loss(Raster(8, 8, 1), Raster(8, 4, 1)), ShapeError);
  CHECK_THROWS_AS(high_frequency_loss(Raster(4, 4, 1), Raster(4, 4, 1)), ShapeError);
  HFConfig bad;
  bad.scales = {};
  CHECK_THROWS_AS(high_frequency_loss(Raster(8, 8, 1), Raster(8, 8, 1), bad), ValueError);
}

TEST_CASE("high frequency loss properties") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const Raster a = random_raster(rng, 16, 16, 3);
    const Raster b = random_raster(rng, 16, 16, 3);
    const double l = high_frequency_loss(a, b);
    CHECK(l >= 0.0);
    CHECK(l == doctest::Approx(high_frequency_loss(b, a)).epsilon(1e-12));
    CHECK(l == doctest::Approx(brute_loss(a, b, {0, 1, 2})).epsilon(1e-10));

    Raster shifted = b;
    for (double& v : shifted.values()) v += 0.3;
    CHECK(high_frequency_loss(a, shifted) == doctest::Approx(l).epsilon(1e-10));

    Raster a2 = a, b2 = b;
    for (double& v : a2.values()) v *= 2.5;
    for (double& v : b2.values()) v *= 2.5;
    CHECK(high_frequency_loss(a2, b2) == doctest::Approx(6.25 * l).epsilon(1e-10));

    double sum = 0;
    for (int s : {0, 1, 2}) {
      HFConfig one;
      one.scales = {s};
      sum += high_frequency_loss(a, b, one);
    }
    CHECK(sum == doctest::Approx(l).epsilon(1e-12));
  }
}

TEST_CASE("high frequency loss gradient matches finite differences") {
  std::mt19937_64 rng(16);
  const Raster a = random_raster(rng, 8, 8, 2);
  const Raster b = random_raster(rng, 8, 8, 2);
  const Raster g = high_frequency_loss_gradient(a, b);
  const double h = 1e-5;
  for (std::size_t i = 0; i < a.size(); i += 7) {
    Raster ap = a, am = a;
    ap.values()[i] += h;
    am.values()[i] -= h;
    const double fd = (high_frequency_loss(ap, b) - high_frequency_loss(am, b)) / (2 * h);
    CHECK(g.values()[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}
