#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "layerforge/errors.hpp"
#include "layerforge/nn/layers.hpp"
#include "layerforge/nn/unet.hpp"

using namespace layerforge;
using namespace layerforge::nn;

namespace {

Tensor random_tensor(std::mt19937_64& rng, int n, int c, int h, int w) {
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t(n, c, h, w);
  for (double& v : t.data) v = g(rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Checks backward() of a scalar loss <forward(x), probe> against central differences on
// the input and on a sample of every parameter.
void check_gradients(const std::function<Tensor(const Tensor&)>& fwd,
                     const std::function<Tensor(const Tensor&)>& bwd,
                     const std::vector<Parameter*>& params, Tensor x, const Tensor& probe,
                     double tol = 1e-6) {
  for (Parameter* p : params) p->zero_grad();
  fwd(x);
  const Tensor dx = bwd(probe);
  const double h = 1e-5;
  for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 17)) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double up = dot(fwd(x), probe);
    x.data[i] = keep - h;
    const double dn = dot(fwd(x), probe);
    x.data[i] = keep;
    CAPTURE(i);
    CHECK(dx.data[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(tol).scale(1.0));
  }
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->size(); i += std::max<std::size_t>(1, p->size() / 7)) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double up = dot(fwd(x), probe);
      p->value[i] = keep - h;
      const double dn = dot(fwd(x), probe);
      p->value[i] = keep;
      CAPTURE(p->name);
      CAPTURE(i);
      CHECK(p->grad[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(tol).scale(1.0));
    }
  }
}

}  // namespace

TEST_CASE("conv2d matches a direct convolution") {
  Rng rng(1);
  Conv2d conv("c", 2, 3, 3, rng);
  std::mt19937_64 r(2);
  const Tensor x = random_tensor(r, 2, 2, 5, 4);
  const Tensor y = conv.forward(x);
  REQUIRE(y.c == 3);
  REQUIRE(y.h == 5);
  const auto& wv = conv.parameters()[0]->value;
  const auto& bv = conv.parameters()[1]->value;
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 3; ++o)
      for (int yy = 0; yy < 5; ++yy)
        for (int xx = 0; xx < 4; ++xx) {
          double acc = bv[o];
          for (int i = 0; i < 2; ++i)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int sy = yy + ky - 1, sx = xx + kx - 1;
                if (sy < 0 || sy >= 5 || sx < 0 || sx >= 4) continue;
                acc += wv[(o * 2 + i) * 9 + ky * 3 + kx] * x.at(n, i, sy, sx);
              }
          CHECK(y.at(n, o, yy, xx) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("layer gradients match finite differences") {
  std::mt19937_64 r(3);
  SUBCASE("conv3") {
    Rng rng(4);
    Conv2d conv("c", 3, 2, 3, rng);
    check_gradients([&](const Tensor& x) { return conv.forward(x); },
                    [&](const Tensor& d) { return conv.backward(d); }, conv.parameters(),
                    random_tensor(r, 2, 3, 4, 6), random_tensor(r, 2, 2, 4, 6));
  }
  SUBCASE("conv1") {
    Rng rng(5);
    Conv2d conv("c", 3, 4, 1, rng);
    check_gradients([&](const Tensor& x) { return conv.forward(x); },
                    [&](const Tensor& d) { return conv.backward(d); }, conv.parameters(),
                    random_tensor(r, 1, 3, 3, 3), random_tensor(r, 1, 4, 3, 3));
  }
  SUBCASE("dense") {
    Rng rng(6);
    Dense dense("d", 5, 3, rng);
    check_gradients([&](const Tensor& x) { return dense.forward(x); },
                    [&](const Tensor& d) { return dense.backward(d); }, dense.parameters(),
                    random_tensor(r, 2, 5, 1, 1), random_tensor(r, 2, 3, 1, 1));
  }
  SUBCASE("silu, pool, upsample") {
    SiLU act;
    AvgPool2 pool;
    Upsample2 up;
    check_gradients(
        [&](const Tensor& x) { return up.forward(pool.forward(act.forward(x))); },
        [&](const Tensor& d) { return act.backward(pool.backward(up.backward(d))); }, {},
        random_tensor(r, 2, 2, 4, 4), random_tensor(r, 2, 2, 4, 4));
  }
}

TEST_CASE("unet gradients match finite differences") {
  std::mt19937_64 r(7);
  UNetConfig cfg{.in_channels = 3, .out_channels = 2, .base_width = 4, .depth = 2,
                 .time_dim = 8, .max_width = 16, .head_gain = 1.0, .init_seed = 11};
  UNet net(cfg);
  const std::vector<double> t{0.3, 0.8};
  check_gradients([&](const Tensor& x) { return net.forward(x, t); },
                  [&](const Tensor& d) { return net.backward(d); }, net.parameters(),
                  random_tensor(r, 2, 3, 8, 8), random_tensor(r, 2, 2, 8, 8), 1e-5);
}

TEST_CASE("unet without time conditioning and shape errors") {
  std::mt19937_64 r(8);
  UNet net({.in_channels = 2, .out_channels = 1, .base_width = 4, .depth = 1, .init_seed = 3});
  check_gradients([&](const Tensor& x) { return net.forward(x); },
                  [&](const Tensor& d) { return net.backward(d); }, net.parameters(),
                  random_tensor(r, 1, 2, 4, 4), random_tensor(r, 1, 1, 4, 4), 1e-5);
  CHECK_THROWS_AS(net.forward(Tensor(1, 3, 4, 4)), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor(1, 2, 5, 4)), ShapeError);
  UNet a({.in_channels = 2, .out_channels = 1, .base_width = 4, .depth = 1, .init_seed = 3});
  UNet b({.in_channels = 2, .out_channels = 1, .base_width = 4, .depth = 1, .init_seed = 3});
  CHECK(a.parameters()[0]->value == b.parameters()[0]->value);
}

TEST_CASE("adam reduces a quadratic and clips the gradient norm") {
  Parameter p("p", {2});
  p.value = {3.0, -2.0};
  Adam opt({&p}, {.lr = 0.1, .clip_norm = 1.0});
  for (int i = 0; i < 300; ++i) {
    p.grad = {2 * p.value[0], 2 * p.value[1]};
    opt.step();
  }
  CHECK(std::abs(p.value[0]) < 0.05);
  CHECK(std::abs(p.value[1]) < 0.05);
  p.grad = {30.0, 40.0};
  CHECK(opt.step() == doctest::Approx(50.0));
}

TEST_CASE("timestep features") {
  const std::vector<double> t{0.0, 0.5};
  const Tensor f = timestep_features(t, 8);
  CHECK(f.n == 2);
  CHECK(f.c == 8);
  CHECK(f.at(0, 0, 0, 0) == doctest::Approx(0.0));
  CHECK(f.at(0, 4, 0, 0) == doctest::Approx(1.0));
}
