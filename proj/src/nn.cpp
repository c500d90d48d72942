#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "layerforge/errors.hpp"
#include "layerforge/nn/layers.hpp"

namespace layerforge::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "[" << n << "," << c << "," << h << "," << w << "]";
  return os.str();
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ShapeError("concat_channels: " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), out.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), out.sample(i) + a.sample_size());
  }
  return out;
}

void split_channels(const Tensor& x, int ca, Tensor& da, Tensor& db) {
  da = Tensor(x.n, ca, x.h, x.w);
  db = Tensor(x.n, x.c - ca, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    const double* s = x.sample(i);
    std::copy(s, s + da.sample_size(), da.sample(i));
    std::copy(s + da.sample_size(), s + x.sample_size(), db.sample(i));
  }
}

Parameter::Parameter(std::string name_, std::vector<int> shape_)
    : name(std::move(name_)), shape(std::move(shape_)) {
  std::size_t n = 1;
  for (int d : shape) n *= std::size_t(d);
  value.assign(n, 0.0);
  grad.assign(n, 0.0);
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, Rng& rng,
               double init_gain)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      weight_(name + ".weight", {out_channels, in_channels * kernel * kernel}),
      bias_(name + ".bias", {out_channels}) {
  if (kernel != 1 && kernel != 3) throw ValueError("Conv2d supports kernel 1 or 3");
  const double fan_in = double(in_channels * kernel * kernel);
  std::normal_distribution<double> dist(0.0, init_gain * std::sqrt(2.0 / fan_in));
  for (double& v : weight_.value) v = dist(rng);
}

void Conv2d::im2col(const double* x, int h, int w, Buffer& cols) const {
  const int k = kernel_;
  const int pad = k / 2;
  const std::size_t hw = std::size_t(h) * w;
  cols.assign(std::size_t(in_) * k * k * hw, 0.0);
  for (int c = 0; c < in_; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.data() + (std::size_t(c) * k * k + ky * k + kx) * hw;
        const double* plane = x + std::size_t(c) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - pad;
            if (sx < 0 || sx >= w) continue;
            row[std::size_t(y) * w + xx] = plane[std::size_t(sy) * w + sx];
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const Buffer& cols, int h, int w, double* dx) const {
  const int k = kernel_;
  const int pad = k / 2;
  const std::size_t hw = std::size_t(h) * w;
  for (int c = 0; c < in_; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.data() + (std::size_t(c) * k * k + ky * k + kx) * hw;
        double* plane = dx + std::size_t(c) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - pad;
            if (sx < 0 || sx >= w) continue;
            plane[std::size_t(sy) * w + sx] += row[std::size_t(y) * w + xx];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c != in_) {
    throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                     std::to_string(x.c));
  }
  input_ = x;
  Tensor y(x.n, out_, x.h, x.w);
  const int hw = x.h * x.w;
  const int kk = in_ * kernel_ * kernel_;
  ConstMapMat wmat(weight_.value.data(), out_, kk);
  Eigen::Map<const Eigen::VectorXd> b(bias_.value.data(), out_);
  Buffer cols;
  for (int i = 0; i < x.n; ++i) {
    MapMat ymat(y.sample(i), out_, hw);
    if (kernel_ == 1) {
      ymat.noalias() = wmat * ConstMapMat(x.sample(i), in_, hw);
    } else {
      im2col(x.sample(i), x.h, x.w, cols);
      ymat.noalias() = wmat * ConstMapMat(cols.data(), kk, hw);
    }
    ymat.colwise() += b;
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const Tensor& x = input_;
  if (dy.n != x.n || dy.c != out_ || dy.h != x.h || dy.w != x.w) {
    throw ShapeError(weight_.name + ": gradient shape " + dy.shape_string());
  }
  Tensor dx(x.n, in_, x.h, x.w);
  const int hw = x.h * x.w;
  const int kk = in_ * kernel_ * kernel_;
  ConstMapMat wmat(weight_.value.data(), out_, kk);
  MapMat dw(weight_.grad.data(), out_, kk);
  Eigen::Map<Eigen::VectorXd> db(bias_.grad.data(), out_);
  Buffer cols;
  Buffer dcols;
  for (int i = 0; i < x.n; ++i) {
    ConstMapMat dymat(dy.sample(i), out_, hw);
    db += dymat.rowwise().sum();
    if (kernel_ == 1) {
      dw.noalias() += dymat * ConstMapMat(x.sample(i), in_, hw).transpose();
      MapMat(dx.sample(i), in_, hw).noalias() = wmat.transpose() * dymat;
    } else {
      im2col(x.sample(i), x.h, x.w, cols);
      dw.noalias() += dymat * ConstMapMat(cols.data(), kk, hw).transpose();
      dcols.resize(std::size_t(kk) * hw);
      MapMat(dcols.data(), kk, hw).noalias() = wmat.transpose() * dymat;
      col2im(dcols, x.h, x.w, dx.sample(i));
    }
  }
  return dx;
}

Tensor SiLU::forward(const Tensor& x) {
  input_ = x;
  Tensor y = x;
  for (double& v : y.data) v = v / (1.0 + std::exp(-v));
  return y;
}

Tensor SiLU::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double x = input_.data[i];
    const double s = 1.0 / (1.0 + std::exp(-x));
    dx.data[i] *= s * (1.0 + x * (1.0 - s));
  }
  return dx;
}

Tensor AvgPool2::forward(const Tensor& x) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw ShapeError("AvgPool2: odd spatial size " + x.shape_string());
  h_ = x.h;
  w_ = x.w;
  Tensor y(x.n, x.c, x.h / 2, x.w / 2);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx)
          y.at(i, c, yy, xx) = 0.25 * (x.at(i, c, 2 * yy, 2 * xx) + x.at(i, c, 2 * yy, 2 * xx + 1) +
                                       x.at(i, c, 2 * yy + 1, 2 * xx) +
                                       x.at(i, c, 2 * yy + 1, 2 * xx + 1));
  return y;
}

Tensor AvgPool2::backward(const Tensor& dy) const {
  Tensor dx(dy.n, dy.c, h_, w_);
  for (int i = 0; i < dy.n; ++i)
    for (int c = 0; c < dy.c; ++c)
      for (int y = 0; y < h_; ++y)
        for (int x = 0; x < w_; ++x) dx.at(i, c, y, x) = 0.25 * dy.at(i, c, y / 2, x / 2);
  return dx;
}

Tensor Upsample2::forward(const Tensor& x) const {
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) y.at(i, c, yy, xx) = x.at(i, c, yy / 2, xx / 2);
  return y;
}

Tensor Upsample2::backward(const Tensor& dy) const {
  Tensor dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
  for (int i = 0; i < dy.n; ++i)
    for (int c = 0; c < dy.c; ++c)
      for (int y = 0; y < dy.h; ++y)
        for (int x = 0; x < dy.w; ++x) dx.at(i, c, y / 2, x / 2) += dy.at(i, c, y, x);
  return dx;
}

Dense::Dense(std::string name, int in_features, int out_features, Rng& rng, double init_gain)
    : in_(in_features),
      out_(out_features),
      weight_(name + ".weight", {out_features, in_features}),
      bias_(name + ".bias", {out_features}) {
  std::normal_distribution<double> dist(0.0, init_gain * std::sqrt(1.0 / in_features));
  for (double& v : weight_.value) v = dist(rng);
}

Tensor Dense::forward(const Tensor& x) {
  if (int(x.sample_size()) != in_) throw ShapeError(weight_.name + ": feature count mismatch");
  input_ = x;
  Tensor y(x.n, out_, 1, 1);
  ConstMapMat w(weight_.value.data(), out_, in_);
  ConstMapMat xin(x.data.data(), x.n, in_);
  MapMat ym(y.data.data(), x.n, out_);
  ym.noalias() = xin * w.transpose();
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_);
  return y;
}

Tensor Dense::backward(const Tensor& dy) {
  Tensor dx(dy.n, in_, 1, 1);
  ConstMapMat w(weight_.value.data(), out_, in_);
  ConstMapMat dym(dy.data.data(), dy.n, out_);
  ConstMapMat xin(input_.data.data(), input_.n, in_);
  MapMat(weight_.grad.data(), out_, in_).noalias() += dym.transpose() * xin;
  Eigen::Map<Eigen::RowVectorXd>(bias_.grad.data(), out_) += dym.colwise().sum();
  MapMat(dx.data.data(), dy.n, in_).noalias() = dym * w;
  return dx;
}

Tensor timestep_features(std::span<const double> t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ValueError("timestep_features: dim must be even and >= 2");
  Tensor f(int(t.size()), dim, 1, 1);
  const int half = dim / 2;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (int k = 0; k < half; ++k) {
      const double freq = std::pow(1000.0, double(k) / std::max(half - 1, 1));
      const double arg = t[i] * freq;
      f.at(int(i), k, 0, 0) = std::sin(arg);
      f.at(int(i), half + k, 0, 0) = std::cos(arg);
    }
  }
  return f;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

double Adam::step() {
  double sq = 0.0;
  for (const Parameter* p : params_)
    for (double g : p->grad) sq += g * g;
  const double norm = std::sqrt(sq);
  const double scale = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i] * scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      p.value[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
  return norm;
}

Ema::Ema(std::vector<Parameter*> params, double decay) : params_(std::move(params)), decay_(decay) {
  for (const Parameter* p : params_) shadow_.push_back(p->value);
}

void Ema::update() {
  ++updates_;
  const double d = std::min(decay_, (1.0 + double(updates_)) / (10.0 + double(updates_)));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& v = params_[k]->value;
    auto& s = shadow_[k];
    for (std::size_t i = 0; i < v.size(); ++i) s[i] = d * s[i] + (1.0 - d) * v[i];
  }
}

void Ema::copy_to_parameters() const {
  for (std::size_t k = 0; k < params_.size(); ++k) params_[k]->value = shadow_[k];
}

double cosine_lr(double base, long step, long total, double floor) {
  if (total <= 1) return base;
  const double p = std::clamp(double(step) / double(total - 1), 0.0, 1.0);
  return base * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * p)));
}

}  // namespace layerforge::nn
