#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "layerforge/autoencoder.hpp"
#include "layerforge/compose.hpp"
#include "layerforge/dataset.hpp"
#include "layerforge/nn/unet.hpp"

namespace layerforge::fbdd {

enum class Branch { Foreground, Background };
std::string to_string(Branch b);
Branch branch_from_string(const std::string& s);

/// Discrete cosine schedule. alpha_bar(0) = 1 (clean), alpha_bar(T) close to 0.
class DiffusionSchedule {
 public:
  static DiffusionSchedule cosine(int steps = 1000, double offset = 0.008, double max_beta = 0.999);

  int steps() const { return int(alpha_bar_.size()) - 1; }
  double alpha_bar(int t) const;
  double sigma(int t) const;
  nlohmann::json to_json() const;
  static DiffusionSchedule from_json(const nlohmann::json& j);

 private:
  double offset_ = 0.008;
  double max_beta_ = 0.999;
  std::vector<double> alpha_bar_;
};

/// Scalar forms take alpha_bar in [0, 1] directly; sigma = sqrt(1 - alpha_bar).
nn::Tensor add_noise(const nn::Tensor& x0, const nn::Tensor& eps, double alpha_bar);
nn::Tensor v_target(const nn::Tensor& x0, const nn::Tensor& eps, double alpha_bar);
nn::Tensor predict_x0(const nn::Tensor& z_t, const nn::Tensor& v, double alpha_bar);
nn::Tensor predict_eps(const nn::Tensor& z_t, const nn::Tensor& v, double alpha_bar);

/// z_t = sqrt(alpha_bar) x0 + sigma eps
nn::Tensor add_noise(const nn::Tensor& x0, const nn::Tensor& eps, int t, const DiffusionSchedule& s);
/// v = sqrt(alpha_bar) eps - sigma x0
nn::Tensor v_target(const nn::Tensor& x0, const nn::Tensor& eps, int t, const DiffusionSchedule& s);
/// x0 = sqrt(alpha_bar) z_t - sigma v
nn::Tensor predict_x0(const nn::Tensor& z_t, const nn::Tensor& v, int t, const DiffusionSchedule& s);
/// eps = sigma z_t + sqrt(alpha_bar) v
nn::Tensor predict_eps(const nn::Tensor& z_t, const nn::Tensor& v, int t, const DiffusionSchedule& s);

struct ConditionPack {
  nn::Tensor latent_composite;  // [1, c_lat, h, w]
  UnshuffledMask alpha_lat;     // h x w sites, f^2 channels
  Branch branch = Branch::Background;
};

ConditionPack make_condition(const Autoencoder& ae, const Image& composite,
                             const AlphaMask& alpha, Branch branch);

enum class Slot { NoisyLatent, LatentComposite, Alpha };
using ConditionLayout = std::array<Slot, 3>;
inline constexpr ConditionLayout kConditionLayout = {Slot::NoisyLatent, Slot::LatentComposite,
                                                     Slot::Alpha};
std::string layout_tag(const ConditionLayout& layout);

/// [z_t | latent_composite | alpha_lat] along channels. Any other layout is rejected.
nn::Tensor build_condition(const nn::Tensor& z_t, const ConditionPack& pack,
                           const ConditionLayout& layout = kConditionLayout);

struct DenoiserConfig {
  int latent_channels = 4;
  int factor = 4;
  int base_width = 32;
  int depth = 2;
  int time_dim = 64;
  double head_gain = 0.1;
  std::uint64_t init_seed = 0;
  bool input_skip = true;

  int input_channels() const { return 2 * latent_channels + factor * factor; }
};

/// Conditional v-prediction U-Net for one branch.
class Denoiser {
 public:
  Denoiser(Branch branch, const DenoiserConfig& cfg);

  Branch branch() const { return branch_; }
  const DenoiserConfig& config() const { return cfg_; }
  long trained_steps() const { return trained_steps_; }
  void add_trained_steps(long n) { trained_steps_ += n; }
  nn::UNet& net() { return net_; }

  /// `t` in [0, T] per batch element; forward caches activations for backward.
  nn::Tensor predict_v(const nn::Tensor& input, std::span<const int> t, int total_steps);

  Checkpoint to_checkpoint(const DiffusionSchedule& sched) const;
  static Denoiser from_checkpoint(const Checkpoint& ckpt);

 private:
  Branch branch_;
  DenoiserConfig cfg_;
  nn::UNet net_;
  long trained_steps_ = 0;
};

/// Latent training data for both branches, encoded once.
struct EncodedSample {
  nn::Tensor foreground;
  nn::Tensor background;
  nn::Tensor latent_composite;
  UnshuffledMask alpha_lat;
};

EncodedSample encode_sample(const Autoencoder& ae, const dataset::DatasetSample& sample);

struct TrainConfig {
  int steps = 500;
  int batch = 8;
  double lr = 1e-3;
  double clip_norm = 1.0;
  double ema_decay = 0.999;  // 0 keeps the final live weights
  bool cosine_decay = true;
  std::uint64_t seed = 0;
};

/// One optimizer step on a batch drawn with `rng`: t ~ U{1..T}, eps ~ N(0, I).
/// Returns the mean squared v error of the batch before the update.
double train_step(Denoiser& model, nn::Adam& opt, std::span<const EncodedSample> data,
                  const DiffusionSchedule& sched, int batch, Rng& rng);

struct TrainReport {
  std::vector<double> losses;
  double initial_loss() const { return losses.empty() ? 0.0 : losses.front(); }
  /// Mean of the last `window` losses.
  double running_mean(int window) const;
};

/// Trains `model` in place and leaves the EMA weights in it. The loss curve (live weights)
/// is a pure function of (data, cfg, initial weights).
TrainReport train_denoiser(Denoiser& model, std::span<const EncodedSample> data,
                           const DiffusionSchedule& sched, const TrainConfig& cfg);

/// Deterministic DDIM (eta = 0) from pure noise over `steps` evenly spaced timesteps.
nn::Tensor sample_layer(Denoiser& model, const ConditionPack& pack,
                        const DiffusionSchedule& sched, int steps, Rng& rng);

struct FbddModels {
  std::shared_ptr<Autoencoder> autoencoder;
  std::unique_ptr<Denoiser> foreground;
  std::unique_ptr<Denoiser> background;
  DiffusionSchedule schedule = DiffusionSchedule::cosine();
  int sampler_steps = 50;

  void save(const std::filesystem::path& dir) const;
  static FbddModels load(const std::filesystem::path& dir);
};

struct Decomposition {
  Image foreground;
  Image background;
};

/// Encodes C_i, samples both branches with independent noise streams derived from `seed`,
/// and decodes. Background alpha conditioning is identical to the foreground's.
Decomposition decompose(FbddModels& models, const Image& composite, const AlphaMask& alpha,
                        std::uint64_t seed);

}  // namespace layerforge::fbdd
