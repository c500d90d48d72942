#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layerforge/checkpoint.hpp"
#include "layerforge/compose.hpp"
#include "layerforge/dataset.hpp"
#include "layerforge/fbdd.hpp"
#include "layerforge/haar.hpp"
#include "layerforge/nn/unet.hpp"

namespace layerforge::hfa {

enum class Role { FAN, BAN };
std::string to_string(Role r);
Role role_from_string(const std::string& s);

/// BAN training objectives. Full is the shipped loss; the other two exist for the ablation.
enum class BanLoss { Full, Mse, Regionwise };
std::string to_string(BanLoss v);
BanLoss ban_loss_from_string(const std::string& s);

struct BANLossConfig {
  double lambda = 0.2;
  haar::HFConfig hf;
};

struct AlignNetConfig {
  int base_width = 32;
  int depth = 3;
  double head_gain = 0.1;
  std::uint64_t init_seed = 0;
};

/// U-Net over [C_i | alpha | layer] (7 channels) predicting a residual on the decoded layer.
class AlignNet {
 public:
  static constexpr int kInputChannels = 7;

  AlignNet(Role role, const AlignNetConfig& cfg);

  Role role() const { return role_; }
  const AlignNetConfig& config() const { return cfg_; }
  long trained_steps() const { return trained_steps_; }
  void add_trained_steps(long n) { trained_steps_ += n; }
  const std::string& loss_variant() const { return loss_variant_; }
  void set_loss_variant(std::string v) { loss_variant_ = std::move(v); }
  nn::UNet& net() { return net_; }

  /// layer + net(input), unclamped; `input` is [n, 7, H, W] and the layer is channels 4..6.
  nn::Tensor forward(const nn::Tensor& input);
  /// Gradient with respect to the output of forward; accumulates parameter gradients.
  void backward(const nn::Tensor& grad);

  Checkpoint to_checkpoint() const;
  static AlignNet from_checkpoint(const Checkpoint& ckpt);

 private:
  Role role_;
  AlignNetConfig cfg_;
  nn::UNet net_;
  long trained_steps_ = 0;
  std::string loss_variant_;
};

/// [1, 7, H, W] stack of C_i, alpha and the layer estimate.
nn::Tensor align_input(const Image& composite, const AlphaMask& alpha, const Image& layer);

/// Network output clamped to [0,1], then C_i copied where the foreground is fully visible.
Image fan_refine(AlignNet& fan, const Image& composite, const AlphaMask& alpha, const Image& f_hat);
/// Network output clamped to [0,1], then C_i copied where the background is fully visible.
Image ban_refine(AlignNet& ban, const Image& composite, const AlphaMask& alpha, const Image& b_hat);

double loss_fan(const Raster& f, const Raster& f_gt);

struct BanLossTerms {
  double mse = 0.0;
  double hf = 0.0;
  double total = 0.0;
};

/// MSE(B, B_gt) + lambda * L_H(B, B_hat), both applied over the whole layer.
BanLossTerms loss_ban(const Raster& b, const Raster& b_gt, const Raster& b_hat, const BANLossConfig& cfg = {});
Raster loss_ban_gradient(const Raster& b, const Raster& b_gt, const Raster& b_hat,
                         const BANLossConfig& cfg = {});

/// Mean squared error against B_gt where alpha < 1 - eps and against B_hat elsewhere.
double loss_regionwise(const Raster& b, const Raster& b_gt, const Raster& b_hat, const AlphaMask& alpha,
                       double eps = kVisibleEpsilon);

struct HfaTrainConfig {
  int steps = 300;
  int batch = 4;
  double lr = 1e-3;
  double clip_norm = 1.0;
  bool cosine_decay = true;
  std::uint64_t seed = 0;
  BanLoss ban_loss = BanLoss::Full;
  BANLossConfig loss;
};

struct HfaTrainReport {
  std::vector<double> losses;
  std::vector<double> mse_terms;
  std::vector<double> hf_terms;  // zero for FAN and for the MSE-only variants
  double initial_loss() const { return losses.empty() ? 0.0 : losses.front(); }
  double running_mean(int window) const;
};

/// FBDD outputs per corpus sample, index-aligned with the corpus; HFA trains on them frozen.
using FbddCache = std::vector<std::optional<fbdd::Decomposition>>;

FbddCache build_fbdd_cache(fbdd::FbddModels& models, std::span<const dataset::DatasetSample> corpus,
                           std::uint64_t seed);

HfaTrainReport train_hfa(AlignNet& net, std::span<const dataset::DatasetSample> corpus,
                         const FbddCache& cache, const HfaTrainConfig& cfg);

struct HfaModels {
  std::unique_ptr<AlignNet> fan;
  std::unique_ptr<AlignNet> ban;

  void save(const std::filesystem::path& dir) const;
  static HfaModels load(const std::filesystem::path& dir);
};

/// Refines both layers and bundles them with alpha.
LayeredImage refine(HfaModels& models, const Image& composite, const AlphaMask& alpha,
                    const fbdd::Decomposition& coarse);

}  // namespace layerforge::hfa
