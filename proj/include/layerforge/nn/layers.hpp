#pragma once

#include <span>
#include <vector>

#include "layerforge/nn/tensor.hpp"
#include "layerforge/util.hpp"

namespace layerforge::nn {

// Every layer caches what its backward pass needs from the latest forward call.
// forward/backward must alternate one-to-one.

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, Rng& rng,
         double init_gain = 1.0);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  void im2col(const double* x, int h, int w, Buffer& cols) const;
  void col2im(const Buffer& cols, int h, int w, double* dx) const;

  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
  Parameter weight_;  // [out, in * k * k]
  Parameter bias_;    // [out]
  Tensor input_;
};

class SiLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor input_;
};

class AvgPool2 {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  int h_ = 0;
  int w_ = 0;
};

class Upsample2 {
 public:
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& dy) const;
};

/// Fully connected layer on [n, features] stored as Tensor with c = features, h = w = 1.
class Dense {
 public:
  Dense() = default;
  Dense(std::string name, int in_features, int out_features, Rng& rng, double init_gain = 1.0);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }

 private:
  int in_ = 0;
  int out_ = 0;
  Parameter weight_;  // [out, in]
  Parameter bias_;
  Tensor input_;
};

/// Sinusoidal features of normalised times t in [0,1], [n, dim, 1, 1].
Tensor timestep_features(std::span<const double> t, int dim);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);
  /// Applies one update from the accumulated gradients and returns the pre-clip gradient norm.
  double step();
  long steps() const { return t_; }
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Buffer> m_;
  std::vector<Buffer> v_;
  long t_ = 0;
};

/// Exponential moving average of parameter values.
class Ema {
 public:
  Ema(std::vector<Parameter*> params, double decay);
  void update();
  /// Overwrites the live parameters with the averaged values.
  void copy_to_parameters() const;

 private:
  std::vector<Parameter*> params_;
  double decay_;
  long updates_ = 0;
  std::vector<Buffer> shadow_;
};

/// Cosine decay from `base` to `base * floor` over `total` steps.
double cosine_lr(double base, long step, long total, double floor = 0.05);

}  // namespace layerforge::nn
