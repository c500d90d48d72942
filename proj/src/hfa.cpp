#include "layerforge/hfa.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "layerforge/errors.hpp"
#include "layerforge/util.hpp"

namespace layerforge::hfa {

using json = nlohmann::json;
using nn::Tensor;

std::string to_string(Role r) { return r == Role::FAN ? "FAN" : "BAN"; }

Role role_from_string(const std::string& s) {
  if (s == "FAN") return Role::FAN;
  if (s == "BAN") return Role::BAN;
  throw ValueError("unknown alignment role '" + s + "'");
}

std::string to_string(BanLoss v) {
  switch (v) {
    case BanLoss::Full: return "full";
    case BanLoss::Mse: return "mse";
    case BanLoss::Regionwise: return "regionwise";
  }
  return "full";
}

BanLoss ban_loss_from_string(const std::string& s) {
  if (s == "full") return BanLoss::Full;
  if (s == "mse") return BanLoss::Mse;
  if (s == "regionwise") return BanLoss::Regionwise;
  throw ValueError("unknown BAN loss variant '" + s + "' (expected full, mse or regionwise)");
}

namespace {

void put_image(Tensor& t, int n, int c0, const Raster& r) {
  for (int c = 0; c < r.channels(); ++c)
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x) t.at(n, c0 + c, y, x) = r.at(y, x, c);
}

void put_alpha(Tensor& t, int n, int c0, const AlphaMask& a) {
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) t.at(n, c0, y, x) = a.at(y, x);
}

Raster take_raster(const Tensor& t, int n) {
  Raster r(t.h, t.w, t.c);
  for (int c = 0; c < t.c; ++c)
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) r.at(y, x, c) = t.at(n, c, y, x);
  return r;
}

void require_same(const Raster& a, const Raster& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape mismatch");
}

double mse(const Raster& a, const Raster& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  return s / double(a.size());
}

Image refine_layer(AlignNet& net, Role expected, const Image& composite, const AlphaMask& alpha,
                   const Image& layer) {
  if (net.role() != expected) {
    throw ValueError("refine: expected a " + to_string(expected) + " network, got " + to_string(net.role()));
  }
  const Tensor out = net.forward(align_input(composite, alpha, layer));
  const Image refined = Image::clamped(take_raster(out, 0));
  return region_copy(refined, composite, alpha,
                     expected == Role::FAN ? LayerTarget::Foreground : LayerTarget::Background);
}

}  // namespace

AlignNet::AlignNet(Role role, const AlignNetConfig& cfg)
    : role_(role),
      cfg_(cfg),
      net_({.in_channels = kInputChannels,
            .out_channels = 3,
            .base_width = cfg.base_width,
            .depth = cfg.depth,
            .time_dim = 0,
            .head_gain = cfg.head_gain,
            .init_seed = cfg.init_seed}),
      loss_variant_(role == Role::FAN ? "mse" : "full") {}

Tensor AlignNet::forward(const Tensor& input) {
  if (input.c != kInputChannels) {
    throw ShapeError("AlignNet: expected 7 input channels, got " + input.shape_string());
  }
  Tensor out = net_.forward(input);
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) out.at(n, c, y, x) += input.at(n, 4 + c, y, x);
  return out;
}

void AlignNet::backward(const Tensor& grad) { net_.backward(grad); }

Checkpoint AlignNet::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta = {{"role", to_string(role_)},
               {"loss_variant", loss_variant_},
               {"unet", layerforge::to_json(const_cast<nn::UNet&>(net_).config())},
               {"trained_steps", trained_steps_}};
  ckpt.blobs = blobs_from(const_cast<nn::UNet&>(net_).parameters());
  return ckpt;
}

AlignNet AlignNet::from_checkpoint(const Checkpoint& ckpt) {
  const Role role = role_from_string(ckpt.meta.value("role", std::string("?")));
  const nn::UNetConfig u = unet_config_from_json(ckpt.meta.at("unet"));
  if (u.in_channels != kInputChannels || u.out_channels != 3 || u.time_dim != 0) {
    throw ValueError("alignment checkpoint has an incompatible network layout");
  }
  AlignNet net(role, {.base_width = u.base_width, .depth = u.depth, .head_gain = u.head_gain,
                      .init_seed = u.init_seed});
  restore_parameters(ckpt, net.net_.parameters());
  net.trained_steps_ = ckpt.meta.at("trained_steps").get<long>();
  net.loss_variant_ = ckpt.meta.at("loss_variant").get<std::string>();
  return net;
}

Tensor align_input(const Image& composite, const AlphaMask& alpha, const Image& layer) {
  require_same_size(composite, alpha, "align_input");
  if (composite.channels() != 3 || !layer.same_shape(composite)) {
    throw ShapeError("align_input: composite and layer must be matching RGB images");
  }
  Tensor t(1, AlignNet::kInputChannels, composite.height(), composite.width());
  put_image(t, 0, 0, composite.raster());
  put_alpha(t, 0, 3, alpha);
  put_image(t, 0, 4, layer.raster());
  return t;
}

Image fan_refine(AlignNet& fan, const Image& composite, const AlphaMask& alpha, const Image& f_hat) {
  return refine_layer(fan, Role::FAN, composite, alpha, f_hat);
}

Image ban_refine(AlignNet& ban, const Image& composite, const AlphaMask& alpha, const Image& b_hat) {
  return refine_layer(ban, Role::BAN, composite, alpha, b_hat);
}

double loss_fan(const Raster& f, const Raster& f_gt) {
  require_same(f, f_gt, "loss_fan");
  return mse(f, f_gt);
}

BanLossTerms loss_ban(const Raster& b, const Raster& b_gt, const Raster& b_hat, const BANLossConfig& cfg) {
  require_same(b, b_gt, "loss_ban");
  require_same(b, b_hat, "loss_ban");
  if (cfg.lambda < 0) throw ValueError("loss_ban: lambda must be >= 0");
  BanLossTerms t;
  t.mse = mse(b, b_gt);
  t.hf = haar::high_frequency_loss(b, b_hat, cfg.hf);
  t.total = t.mse + cfg.lambda * t.hf;
  return t;
}

Raster loss_ban_gradient(const Raster& b, const Raster& b_gt, const Raster& b_hat,
                         const BANLossConfig& cfg) {
  require_same(b, b_gt, "loss_ban_gradient");
  Raster g = haar::high_frequency_loss_gradient(b, b_hat, cfg.hf);
  const double scale = 2.0 / double(b.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g.values()[i] = cfg.lambda * g.values()[i] + scale * (b.values()[i] - b_gt.values()[i]);
  return g;
}

double loss_regionwise(const Raster& b, const Raster& b_gt, const Raster& b_hat, const AlphaMask& alpha,
                       double eps) {
  require_same(b, b_gt, "loss_regionwise");
  require_same(b, b_hat, "loss_regionwise");
  if (alpha.height() != b.height() || alpha.width() != b.width()) throw ShapeError("loss_regionwise: alpha size");
  double s = 0;
  for (int y = 0; y < b.height(); ++y)
    for (int x = 0; x < b.width(); ++x) {
      const Raster& target = alpha.at(y, x) < 1.0 - eps ? b_gt : b_hat;
      for (int c = 0; c < b.channels(); ++c) {
        const double d = b.at(y, x, c) - target.at(y, x, c);
        s += d * d;
      }
    }
  return s / double(b.size());
}

double HfaTrainReport::running_mean(int window) const {
  if (losses.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(losses.size(), std::size_t(std::max(window, 1)));
  double s = 0.0;
  for (std::size_t i = losses.size() - n; i < losses.size(); ++i) s += losses[i];
  return s / double(n);
}

FbddCache build_fbdd_cache(fbdd::FbddModels& models, std::span<const dataset::DatasetSample> corpus,
                           std::uint64_t seed) {
  FbddCache cache;
  cache.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    cache.push_back(fbdd::decompose(models, corpus[i].composite, corpus[i].alpha, mix_seed(seed, i)));
  return cache;
}

HfaTrainReport train_hfa(AlignNet& net, std::span<const dataset::DatasetSample> corpus,
                         const FbddCache& cache, const HfaTrainConfig& cfg) {
  if (corpus.empty()) throw ValueError("train_hfa: empty corpus");
  if (cfg.steps < 1 || cfg.batch < 1) throw ValueError("train_hfa: steps and batch must be >= 1");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (i >= cache.size() || !cache[i]) {
      throw ValueError("train_hfa: missing FBDD cache entry for sample " + std::to_string(i));
    }
    if (!corpus[i].composite.same_shape(corpus[0].composite)) {
      throw ShapeError("train_hfa: corpus samples differ in size");
    }
  }
  const bool fan = net.role() == Role::FAN;
  if (!fan) cfg.loss.hf.validate();
  net.set_loss_variant(fan ? "mse" : to_string(cfg.ban_loss));

  nn::Adam opt(net.net().parameters(), {.lr = cfg.lr, .clip_norm = cfg.clip_norm});
  Rng rng(mix_seed(cfg.seed, fan ? 11 : 12));
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  const int h = corpus[0].composite.height(), w = corpus[0].composite.width();
  HfaTrainReport report;
  for (int s = 0; s < cfg.steps; ++s) {
    if (cfg.cosine_decay) opt.set_lr(nn::cosine_lr(cfg.lr, s, cfg.steps));
    std::vector<std::size_t> idx(cfg.batch);
    Tensor input(cfg.batch, AlignNet::kInputChannels, h, w);
    for (int b = 0; b < cfg.batch; ++b) {
      idx[b] = pick(rng);
      const dataset::DatasetSample& smp = corpus[idx[b]];
      const fbdd::Decomposition& coarse = *cache[idx[b]];
      put_image(input, b, 0, smp.composite.raster());
      put_alpha(input, b, 3, smp.alpha);
      put_image(input, b, 4, (fan ? coarse.foreground : coarse.background).raster());
    }
    net.net().zero_grad();
    const Tensor out = net.forward(input);
    Tensor grad(out.n, out.c, out.h, out.w);
    double loss = 0, mse_term = 0, hf_term = 0;
    for (int b = 0; b < cfg.batch; ++b) {
      const dataset::DatasetSample& smp = corpus[idx[b]];
      const fbdd::Decomposition& coarse = *cache[idx[b]];
      const Raster pred = take_raster(out, b);
      Raster g;
      if (fan) {
        const double l = loss_fan(pred, smp.foreground.raster());
        loss += l, mse_term += l;
        g = Raster(h, w, 3);
        for (std::size_t i = 0; i < g.size(); ++i)
          g.values()[i] = 2.0 * (pred.values()[i] - smp.foreground.values()[i]) / double(g.size());
      } else if (cfg.ban_loss == BanLoss::Regionwise) {
        const double l = loss_regionwise(pred, smp.background.raster(), coarse.background.raster(), smp.alpha);
        loss += l, mse_term += l;
        g = Raster(h, w, 3);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const Image& target = smp.alpha.at(y, x) < 1.0 - kVisibleEpsilon ? smp.background : coarse.background;
            for (int c = 0; c < 3; ++c) g.at(y, x, c) = 2.0 * (pred.at(y, x, c) - target.at(y, x, c)) / double(g.size());
          }
      } else {
        BANLossConfig lc = cfg.loss;
        if (cfg.ban_loss == BanLoss::Mse) lc.lambda = 0.0;
        const BanLossTerms t = loss_ban(pred, smp.background.raster(), coarse.background.raster(), lc);
        loss += t.total, mse_term += t.mse, hf_term += t.hf;
        g = loss_ban_gradient(pred, smp.background.raster(), coarse.background.raster(), lc);
      }
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) grad.at(b, c, y, x) = g.at(y, x, c) / cfg.batch;
    }
    loss /= cfg.batch, mse_term /= cfg.batch, hf_term /= cfg.batch;
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "hfa " << to_string(net.role()) << ": non-finite loss at step " << s << " (samples";
      for (std::size_t i : idx) msg << ' ' << i;
      msg << ")";
      throw TrainingError(msg.str());
    }
    net.backward(grad);
    opt.step();
    net.add_trained_steps(1);
    report.losses.push_back(loss);
    report.mse_terms.push_back(mse_term);
    report.hf_terms.push_back(hf_term);
  }
  return report;
}

void HfaModels::save(const std::filesystem::path& dir) const {
  if (!fan || !ban) throw ValueError("HfaModels::save: both networks are required");
  save_checkpoint(dir / "hfa_fan.lfck", fan->to_checkpoint());
  save_checkpoint(dir / "hfa_ban.lfck", ban->to_checkpoint());
}

HfaModels HfaModels::load(const std::filesystem::path& dir) {
  HfaModels m;
  m.fan = std::make_unique<AlignNet>(AlignNet::from_checkpoint(load_checkpoint(dir / "hfa_fan.lfck")));
  m.ban = std::make_unique<AlignNet>(AlignNet::from_checkpoint(load_checkpoint(dir / "hfa_ban.lfck")));
  if (m.fan->role() != Role::FAN || m.ban->role() != Role::BAN) {
    throw ValueError("HfaModels::load: role tags do not match file roles");
  }
  return m;
}

LayeredImage refine(HfaModels& models, const Image& composite, const AlphaMask& alpha,
                    const fbdd::Decomposition& coarse) {
  if (!models.fan || !models.ban) throw ValueError("refine: both networks are required");
  Image f = fan_refine(*models.fan, composite, alpha, coarse.foreground);
  Image b = ban_refine(*models.ban, composite, alpha, coarse.background);
  return make_layered(std::move(f), std::move(b), alpha);
}

}  // namespace layerforge::hfa
