#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "layerforge/nn/layers.hpp"

namespace layerforge::nn {

struct UNetConfig {
  int in_channels = 3;
  int out_channels = 3;
  int base_width = 32;
  int depth = 3;        // number of 2x downsampling stages
  int time_dim = 0;     // sinusoidal time-embedding width; 0 disables time conditioning
  int max_width = 256;
  double head_gain = 0.1;
  std::uint64_t init_seed = 0;
  bool input_skip = false;  // adds a 1x1 conv from the input straight to the output

  int width_at(int level) const;
  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

/// conv3 -> SiLU -> (* (1 + time scale) + time shift) -> conv3 -> SiLU
class ConvBlock {
 public:
  ConvBlock(const std::string& name, int in, int out, int time_dim, Rng& rng);

  Tensor forward(const Tensor& x, const Tensor* emb);
  /// Returns dx; adds the embedding gradient into `demb` when time-conditioned.
  Tensor backward(const Tensor& dy, Tensor* demb);
  std::vector<Parameter*> parameters();

 private:
  Conv2d conv1_;
  SiLU act1_;
  std::optional<Dense> time_proj_;  // emits [scale | shift] per channel
  Tensor h1_;
  Tensor film_;
  Conv2d conv2_;
  SiLU act2_;
};

/// Encoder/decoder with skip concatenations and an optional shared time embedding.
class UNet {
 public:
  explicit UNet(UNetConfig cfg);

  const UNetConfig& config() const { return cfg_; }

  /// `t` holds one normalised time in [0,1] per batch element when time-conditioned.
  Tensor forward(const Tensor& x, std::span<const double> t = {});
  Tensor backward(const Tensor& dy);

  std::vector<Parameter*> parameters();
  void zero_grad();
  std::size_t parameter_count();

 private:
  UNetConfig cfg_;
  std::vector<ConvBlock> encoder_;
  std::vector<AvgPool2> pools_;
  std::unique_ptr<ConvBlock> bottleneck_;
  std::vector<ConvBlock> decoder_;
  std::vector<Upsample2> ups_;
  std::vector<int> skip_channels_;
  Conv2d head_;
  std::optional<Conv2d> skip_;
  std::optional<Dense> time_mlp_;
  SiLU time_act_;
  Tensor emb_;
  bool has_emb_ = false;
};

}  // namespace layerforge::nn
