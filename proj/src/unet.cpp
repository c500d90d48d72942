#include "layerforge/nn/unet.hpp"

#include <algorithm>

#include "layerforge/errors.hpp"

namespace layerforge::nn {

int UNetConfig::width_at(int level) const {
  return std::min(base_width << level, max_width);
}

ConvBlock::ConvBlock(const std::string& name, int in, int out, int time_dim, Rng& rng)
    : conv1_(name + ".conv1", in, out, 3, rng), conv2_(name + ".conv2", out, out, 3, rng) {
  if (time_dim > 0) time_proj_.emplace(name + ".time", time_dim, 2 * out, rng, 0.5);
}

Tensor ConvBlock::forward(const Tensor& x, const Tensor* emb) {
  Tensor h = act1_.forward(conv1_.forward(x));
  if (time_proj_) {
    h1_ = h;
    film_ = time_proj_->forward(*emb);
    const int c = h.c;
    for (int n = 0; n < h.n; ++n)
      for (int k = 0; k < c; ++k) {
        const double scale = 1.0 + film_.at(n, k, 0, 0), shift = film_.at(n, c + k, 0, 0);
        double* p = h.sample(n) + std::size_t(k) * h.plane();
        for (std::size_t i = 0; i < h.plane(); ++i) p[i] = p[i] * scale + shift;
      }
  }
  return act2_.forward(conv2_.forward(h));
}

Tensor ConvBlock::backward(const Tensor& dy, Tensor* demb) {
  Tensor dh = conv2_.backward(act2_.backward(dy));
  if (time_proj_) {
    const int c = dh.c;
    Tensor dfilm(film_.n, film_.c, 1, 1);
    for (int n = 0; n < dh.n; ++n)
      for (int k = 0; k < c; ++k) {
        const double scale = 1.0 + film_.at(n, k, 0, 0);
        double* g = dh.sample(n) + std::size_t(k) * dh.plane();
        const double* h = h1_.sample(n) + std::size_t(k) * h1_.plane();
        double ds = 0, db = 0;
        for (std::size_t i = 0; i < dh.plane(); ++i) {
          ds += g[i] * h[i];
          db += g[i];
          g[i] *= scale;
        }
        dfilm.at(n, k, 0, 0) = ds;
        dfilm.at(n, c + k, 0, 0) = db;
      }
    const Tensor de = time_proj_->backward(dfilm);
    for (std::size_t i = 0; i < de.size(); ++i) demb->data[i] += de.data[i];
  }
  return conv1_.backward(act1_.backward(dh));
}

std::vector<Parameter*> ConvBlock::parameters() {
  std::vector<Parameter*> out = conv1_.parameters();
  if (time_proj_) {
    for (Parameter* p : time_proj_->parameters()) out.push_back(p);
  }
  for (Parameter* p : conv2_.parameters()) out.push_back(p);
  return out;
}

UNet::UNet(UNetConfig cfg) : cfg_(cfg) {
  if (cfg_.in_channels < 1 || cfg_.out_channels < 1 || cfg_.base_width < 1 || cfg_.depth < 0) {
    throw ValueError("UNet: invalid configuration");
  }
  Rng rng(cfg_.init_seed);
  if (cfg_.time_dim > 0) time_mlp_.emplace("time_mlp", cfg_.time_dim, cfg_.time_dim, rng);
  int in = cfg_.in_channels;
  for (int l = 0; l < cfg_.depth; ++l) {
    const int w = cfg_.width_at(l);
    encoder_.emplace_back("enc" + std::to_string(l), in, w, cfg_.time_dim, rng);
    skip_channels_.push_back(w);
    in = w;
  }
  pools_.resize(cfg_.depth);
  ups_.resize(cfg_.depth);
  bottleneck_ = std::make_unique<ConvBlock>("mid", in, cfg_.width_at(cfg_.depth), cfg_.time_dim, rng);
  in = cfg_.width_at(cfg_.depth);
  // decoder_[k] handles level depth-1-k
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    const int w = cfg_.width_at(l);
    decoder_.emplace_back("dec" + std::to_string(l), in + skip_channels_[l], w, cfg_.time_dim, rng);
    in = w;
  }
  head_ = Conv2d("head", in, cfg_.out_channels, 1, rng, cfg_.head_gain);
  if (cfg_.input_skip) skip_.emplace("skip", cfg_.in_channels, cfg_.out_channels, 1, rng, cfg_.head_gain);
}

Tensor UNet::forward(const Tensor& x, std::span<const double> t) {
  if (x.c != cfg_.in_channels) {
    throw ShapeError("UNet: expected " + std::to_string(cfg_.in_channels) + " channels, got " +
                     std::to_string(x.c));
  }
  const int block = 1 << cfg_.depth;
  if (x.h % block != 0 || x.w % block != 0) {
    throw ShapeError("UNet: spatial size " + x.shape_string() + " not divisible by " +
                     std::to_string(block));
  }
  const Tensor* emb = nullptr;
  has_emb_ = false;
  if (time_mlp_) {
    if (int(t.size()) != x.n) throw ShapeError("UNet: need one time value per batch element");
    emb_ = time_act_.forward(time_mlp_->forward(timestep_features(t, cfg_.time_dim)));
    emb = &emb_;
    has_emb_ = true;
  }
  std::vector<Tensor> skips;
  Tensor h = x;
  for (int l = 0; l < cfg_.depth; ++l) {
    h = encoder_[l].forward(h, emb);
    skips.push_back(h);
    h = pools_[l].forward(h);
  }
  h = bottleneck_->forward(h, emb);
  for (int k = 0; k < cfg_.depth; ++k) {
    const int l = cfg_.depth - 1 - k;
    h = decoder_[k].forward(concat_channels(ups_[l].forward(h), skips[l]), emb);
  }
  Tensor y = head_.forward(h);
  if (skip_) {
    const Tensor s = skip_->forward(x);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += s.data[i];
  }
  return y;
}

Tensor UNet::backward(const Tensor& dy) {
  Tensor demb;
  if (has_emb_) demb = Tensor(emb_.n, emb_.c, 1, 1);
  Tensor* demb_ptr = has_emb_ ? &demb : nullptr;
  Tensor dh = head_.backward(dy);
  std::vector<Tensor> dskips(cfg_.depth);
  // Forward applied decoder_[0] first (deepest level) and decoder_[depth-1] last.
  for (int k = cfg_.depth - 1; k >= 0; --k) {
    const int l = cfg_.depth - 1 - k;
    const Tensor dcat = decoder_[k].backward(dh, demb_ptr);
    Tensor dup, dskip;
    split_channels(dcat, dcat.c - skip_channels_[l], dup, dskip);
    dskips[l] = std::move(dskip);
    dh = ups_[l].backward(dup);
  }
  dh = bottleneck_->backward(dh, demb_ptr);
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    dh = pools_[l].backward(dh);
    for (std::size_t i = 0; i < dh.size(); ++i) dh.data[i] += dskips[l].data[i];
    dh = encoder_[l].backward(dh, demb_ptr);
  }
  if (has_emb_) time_mlp_->backward(time_act_.backward(demb));
  if (skip_) {
    const Tensor ds = skip_->backward(dy);
    for (std::size_t i = 0; i < dh.size(); ++i) dh.data[i] += ds.data[i];
  }
  return dh;
}

std::vector<Parameter*> UNet::parameters() {
  std::vector<Parameter*> out;
  auto add = [&out](std::vector<Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  if (time_mlp_) add(time_mlp_->parameters());
  for (auto& b : encoder_) add(b.parameters());
  add(bottleneck_->parameters());
  for (auto& b : decoder_) add(b.parameters());
  add(head_.parameters());
  if (skip_) add(skip_->parameters());
  return out;
}

void UNet::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

std::size_t UNet::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->size();
  return n;
}

}  // namespace layerforge::nn
