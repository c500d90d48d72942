#pragma once

#include <memory>
#include <span>
#include <string>

#include "layerforge/checkpoint.hpp"
#include "layerforge/image.hpp"
#include "layerforge/nn/tensor.hpp"

namespace layerforge {

/// Image <-> latent codec. Latents are [1, latent_channels, H / factor, W / factor].
/// External pretrained codecs plug in by implementing this interface.
class Autoencoder {
 public:
  virtual ~Autoencoder() = default;
  virtual std::string kind() const = 0;
  virtual int factor() const = 0;
  virtual int latent_channels() const = 0;
  virtual bool trained() const = 0;
  /// RGB in, latent out. Throws ShapeError unless both dims divide by factor().
  virtual nn::Tensor encode(const Image& rgb) const = 0;
  /// Output clamped to [0,1].
  virtual Image decode(const nn::Tensor& z) const = 0;
  virtual Checkpoint to_checkpoint() const = 0;
};

/// f = 1, c_lat = 3: latent = pixels.
class IdentityAutoencoder : public Autoencoder {
 public:
  std::string kind() const override { return "identity"; }
  int factor() const override { return 1; }
  int latent_channels() const override { return 3; }
  bool trained() const override { return true; }
  nn::Tensor encode(const Image& rgb) const override;
  Image decode(const nn::Tensor& z) const override;
  Checkpoint to_checkpoint() const override;
};

/// Linear codec on non-overlapping f x f x 3 patches, fitted in closed form by PCA.
/// Latents are scaled to unit standard deviation over the fitting set.
class PatchAutoencoder : public Autoencoder {
 public:
  PatchAutoencoder(int factor, int latent_channels);

  std::string kind() const override { return "patch_pca"; }
  int factor() const override { return factor_; }
  int latent_channels() const override { return latent_channels_; }
  bool trained() const override { return fitted_; }
  nn::Tensor encode(const Image& rgb) const override;
  Image decode(const nn::Tensor& z) const override;
  Checkpoint to_checkpoint() const override;

  /// Fits the mean, the leading principal directions and the latent scale.
  void fit(std::span<const Image> images);
  static PatchAutoencoder from_checkpoint(const Checkpoint& ckpt);
  double latent_scale() const { return scale_; }

 private:
  int factor_;
  int latent_channels_;
  int patch_dim_;
  bool fitted_ = false;
  double scale_ = 1.0;
  std::vector<double> mean_;   // [patch_dim]
  std::vector<double> basis_;  // [patch_dim, latent_channels], orthonormal columns
};

std::unique_ptr<Autoencoder> load_autoencoder(const Checkpoint& ckpt);

}  // namespace layerforge
