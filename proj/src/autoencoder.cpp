#include "layerforge/autoencoder.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "layerforge/errors.hpp"

namespace layerforge {

namespace {

void check_rgb(const Image& rgb, int f) {
  if (rgb.channels() != 3) throw ShapeError("encode: expected an RGB image");
  if (rgb.height() % f != 0 || rgb.width() % f != 0) {
    throw ShapeError("encode: " + std::to_string(rgb.height()) + "x" +
                     std::to_string(rgb.width()) + " not divisible by factor " +
                     std::to_string(f));
  }
}

void check_latent(const nn::Tensor& z, int c) {
  if (z.n != 1 || z.c != c) {
    throw ShapeError("decode: expected latent [1, " + std::to_string(c) + ", h, w], got " +
                     z.shape_string());
  }
}

}  // namespace

nn::Tensor IdentityAutoencoder::encode(const Image& rgb) const {
  check_rgb(rgb, 1);
  nn::Tensor z(1, 3, rgb.height(), rgb.width());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < rgb.height(); ++y)
      for (int x = 0; x < rgb.width(); ++x) z.at(0, c, y, x) = rgb.at(y, x, c);
  return z;
}

Image IdentityAutoencoder::decode(const nn::Tensor& z) const {
  check_latent(z, 3);
  Raster r(z.h, z.w, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < z.h; ++y)
      for (int x = 0; x < z.w; ++x) r.at(y, x, c) = z.at(0, c, y, x);
  return Image::clamped(std::move(r));
}

Checkpoint IdentityAutoencoder::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta = {{"role", "autoencoder"}, {"kind", kind()}};
  return ckpt;
}

PatchAutoencoder::PatchAutoencoder(int factor, int latent_channels)
    : factor_(factor), latent_channels_(latent_channels), patch_dim_(factor * factor * 3) {
  if (factor < 1 || latent_channels < 1 || latent_channels > patch_dim_) {
    throw ValueError("PatchAutoencoder: need factor >= 1 and 1 <= c_lat <= 3 f^2");
  }
}

void PatchAutoencoder::fit(std::span<const Image> images) {
  if (images.empty()) throw ValueError("PatchAutoencoder::fit: no images");
  const int d = patch_dim_;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd p(d);
  long count = 0;
  for (const Image& img : images) {
    check_rgb(img, factor_);
    for (int by = 0; by < img.height(); by += factor_)
      for (int bx = 0; bx < img.width(); bx += factor_) {
        int j = 0;
        for (int dy = 0; dy < factor_; ++dy)
          for (int dx = 0; dx < factor_; ++dx)
            for (int c = 0; c < 3; ++c) p[j++] = img.at(by + dy, bx + dx, c);
        sum += p;
        outer.noalias() += p * p.transpose();
        ++count;
      }
  }
  const Eigen::VectorXd mean = sum / double(count);
  const Eigen::MatrixXd cov = outer / double(count) - mean * mean.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);

  mean_.assign(mean.data(), mean.data() + d);
  basis_.assign(std::size_t(d) * latent_channels_, 0.0);
  double var = 0.0;
  for (int k = 0; k < latent_channels_; ++k) {
    Eigen::VectorXd u = eig.eigenvectors().col(d - 1 - k);
    Eigen::Index arg;
    u.cwiseAbs().maxCoeff(&arg);
    if (u[arg] < 0) u = -u;
    for (int j = 0; j < d; ++j) basis_[std::size_t(j) * latent_channels_ + k] = u[j];
    var += std::max(eig.eigenvalues()[d - 1 - k], 0.0);
  }
  var /= latent_channels_;
  scale_ = var > 0 ? 1.0 / std::sqrt(var) : 1.0;
  fitted_ = true;
}

nn::Tensor PatchAutoencoder::encode(const Image& rgb) const {
  if (!fitted_) throw UntrainedError("PatchAutoencoder: encode before fit");
  check_rgb(rgb, factor_);
  const int hl = rgb.height() / factor_, wl = rgb.width() / factor_;
  nn::Tensor z(1, latent_channels_, hl, wl);
  std::vector<double> p(patch_dim_);
  for (int y = 0; y < hl; ++y)
    for (int x = 0; x < wl; ++x) {
      int j = 0;
      for (int dy = 0; dy < factor_; ++dy)
        for (int dx = 0; dx < factor_; ++dx)
          for (int c = 0; c < 3; ++c, ++j)
            p[j] = rgb.at(y * factor_ + dy, x * factor_ + dx, c) - mean_[j];
      for (int k = 0; k < latent_channels_; ++k) {
        double acc = 0.0;
        for (int i = 0; i < patch_dim_; ++i) acc += basis_[std::size_t(i) * latent_channels_ + k] * p[i];
        z.at(0, k, y, x) = acc * scale_;
      }
    }
  return z;
}

Image PatchAutoencoder::decode(const nn::Tensor& z) const {
  if (!fitted_) throw UntrainedError("PatchAutoencoder: decode before fit");
  check_latent(z, latent_channels_);
  Raster r(z.h * factor_, z.w * factor_, 3);
  for (int y = 0; y < z.h; ++y)
    for (int x = 0; x < z.w; ++x) {
      int j = 0;
      for (int dy = 0; dy < factor_; ++dy)
        for (int dx = 0; dx < factor_; ++dx)
          for (int c = 0; c < 3; ++c, ++j) {
            double acc = mean_[j];
            for (int k = 0; k < latent_channels_; ++k)
              acc += basis_[std::size_t(j) * latent_channels_ + k] * z.at(0, k, y, x) / scale_;
            r.at(y * factor_ + dy, x * factor_ + dx, c) = acc;
          }
    }
  return Image::clamped(std::move(r));
}

Checkpoint PatchAutoencoder::to_checkpoint() const {
  if (!fitted_) throw UntrainedError("PatchAutoencoder: nothing to save before fit");
  Checkpoint ckpt;
  ckpt.meta = {{"role", "autoencoder"},
               {"kind", kind()},
               {"factor", factor_},
               {"latent_channels", latent_channels_},
               {"scale", scale_}};
  ckpt.blobs.push_back({"mean", {patch_dim_}, mean_});
  ckpt.blobs.push_back({"basis", {patch_dim_, latent_channels_}, basis_});
  return ckpt;
}

PatchAutoencoder PatchAutoencoder::from_checkpoint(const Checkpoint& ckpt) {
  PatchAutoencoder ae(ckpt.meta.at("factor").get<int>(),
                      ckpt.meta.at("latent_channels").get<int>());
  ae.scale_ = ckpt.meta.at("scale").get<double>();
  ae.mean_ = ckpt.blob("mean").values;
  ae.basis_ = ckpt.blob("basis").values;
  if (ae.mean_.size() != std::size_t(ae.patch_dim_) ||
      ae.basis_.size() != std::size_t(ae.patch_dim_) * ae.latent_channels_) {
    throw ShapeError("PatchAutoencoder: checkpoint blob sizes do not match the header");
  }
  ae.fitted_ = true;
  return ae;
}

std::unique_ptr<Autoencoder> load_autoencoder(const Checkpoint& ckpt) {
  const std::string kind = ckpt.meta.value("kind", "");
  if (kind == "identity") return std::make_unique<IdentityAutoencoder>();
  if (kind == "patch_pca") {
    return std::make_unique<PatchAutoencoder>(PatchAutoencoder::from_checkpoint(ckpt));
  }
  throw ValueError("unknown autoencoder kind '" + kind + "'");
}

}  // namespace layerforge
