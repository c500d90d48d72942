#include "layerforge/fbdd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "layerforge/errors.hpp"

namespace layerforge::fbdd {

using nlohmann::json;
using nn::Tensor;

std::string to_string(Branch b) { return b == Branch::Foreground ? "fg" : "bg"; }

Branch branch_from_string(const std::string& s) {
  if (s == "fg") return Branch::Foreground;
  if (s == "bg") return Branch::Background;
  throw ValueError("unknown branch tag '" + s + "'");
}

DiffusionSchedule DiffusionSchedule::cosine(int steps, double offset, double max_beta) {
  if (steps < 1) throw ValueError("DiffusionSchedule: steps must be >= 1");
  if (!(max_beta > 0.0 && max_beta < 1.0)) throw ValueError("DiffusionSchedule: max_beta in (0,1)");
  DiffusionSchedule s;
  s.offset_ = offset;
  s.max_beta_ = max_beta;
  auto f = [&](int t) {
    const double c = std::cos((double(t) / steps + offset) / (1.0 + offset) * std::numbers::pi / 2);
    return c * c;
  };
  s.alpha_bar_.resize(std::size_t(steps) + 1);
  s.alpha_bar_[0] = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double beta = std::min(1.0 - f(t) / f(t - 1), max_beta);
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - beta);
  }
  return s;
}

double DiffusionSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) {
    throw ValueError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
  }
  return alpha_bar_[t];
}

double DiffusionSchedule::sigma(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

json DiffusionSchedule::to_json() const {
  return {{"kind", "cosine"}, {"steps", steps()}, {"offset", offset_}, {"max_beta", max_beta_}};
}

DiffusionSchedule DiffusionSchedule::from_json(const json& j) {
  if (j.at("kind") != "cosine") throw ValueError("unsupported schedule kind");
  return cosine(j.at("steps").get<int>(), j.at("offset").get<double>(),
                j.at("max_beta").get<double>());
}

namespace {

Tensor affine(const Tensor& a, double ca, const Tensor& b, double cb, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out(a.n, a.c, a.h, a.w);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = ca * a.data[i] + cb * b.data[i];
  return out;
}

Tensor alpha_tensor(const UnshuffledMask& m) {
  const Raster& r = m.data();
  Tensor t(1, r.channels(), r.height(), r.width());
  for (int c = 0; c < r.channels(); ++c)
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x) t.at(0, c, y, x) = r.at(y, x, c);
  return t;
}

void copy_sample(const Tensor& src, Tensor& dst, int index) {
  std::copy(src.data.begin(), src.data.end(), dst.sample(index));
}

}  // namespace

Tensor add_noise(const Tensor& x0, const Tensor& eps, double alpha_bar) {
  return affine(x0, std::sqrt(alpha_bar), eps, std::sqrt(1.0 - alpha_bar), "add_noise");
}

Tensor v_target(const Tensor& x0, const Tensor& eps, double alpha_bar) {
  return affine(eps, std::sqrt(alpha_bar), x0, -std::sqrt(1.0 - alpha_bar), "v_target");
}

Tensor predict_x0(const Tensor& z_t, const Tensor& v, double alpha_bar) {
  return affine(z_t, std::sqrt(alpha_bar), v, -std::sqrt(1.0 - alpha_bar), "predict_x0");
}

Tensor predict_eps(const Tensor& z_t, const Tensor& v, double alpha_bar) {
  return affine(z_t, std::sqrt(1.0 - alpha_bar), v, std::sqrt(alpha_bar), "predict_eps");
}

Tensor add_noise(const Tensor& x0, const Tensor& eps, int t, const DiffusionSchedule& s) {
  return add_noise(x0, eps, s.alpha_bar(t));
}

Tensor v_target(const Tensor& x0, const Tensor& eps, int t, const DiffusionSchedule& s) {
  return v_target(x0, eps, s.alpha_bar(t));
}

Tensor predict_x0(const Tensor& z_t, const Tensor& v, int t, const DiffusionSchedule& s) {
  return predict_x0(z_t, v, s.alpha_bar(t));
}

Tensor predict_eps(const Tensor& z_t, const Tensor& v, int t, const DiffusionSchedule& s) {
  return predict_eps(z_t, v, s.alpha_bar(t));
}

ConditionPack make_condition(const Autoencoder& ae, const Image& composite,
                             const AlphaMask& alpha, Branch branch) {
  require_same_size(composite, alpha, "make_condition");
  return {ae.encode(composite), pixel_unshuffle(alpha, ae.factor()), branch};
}

std::string layout_tag(const ConditionLayout& layout) {
  std::string tag;
  for (Slot s : layout) {
    if (!tag.empty()) tag += '|';
    tag += s == Slot::NoisyLatent ? "z_t" : s == Slot::LatentComposite ? "latent_composite" : "alpha_lat";
  }
  return tag;
}

Tensor build_condition(const Tensor& z_t, const ConditionPack& pack, const ConditionLayout& layout) {
  if (layout != kConditionLayout) {
    throw ValueError("build_condition: layout '" + layout_tag(layout) + "' differs from the frozen '" +
                     layout_tag(kConditionLayout) + "'");
  }
  if (!z_t.same_shape(pack.latent_composite)) {
    throw ShapeError("build_condition: z_t " + z_t.shape_string() + " vs latent composite " +
                     pack.latent_composite.shape_string());
  }
  if (pack.alpha_lat.height() != z_t.h || pack.alpha_lat.width() != z_t.w) {
    throw ShapeError("build_condition: alpha_lat spatial dims differ from the latent");
  }
  return nn::concat_channels(nn::concat_channels(z_t, pack.latent_composite),
                             alpha_tensor(pack.alpha_lat));
}

Denoiser::Denoiser(Branch branch, const DenoiserConfig& cfg)
    : branch_(branch),
      cfg_(cfg),
      net_({.in_channels = cfg.input_channels(),
            .out_channels = cfg.latent_channels,
            .base_width = cfg.base_width,
            .depth = cfg.depth,
            .time_dim = cfg.time_dim,
            .head_gain = cfg.head_gain,
            .init_seed = cfg.init_seed,
            .input_skip = cfg.input_skip}) {}

Tensor Denoiser::predict_v(const Tensor& input, std::span<const int> t, int total_steps) {
  std::vector<double> tn(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) tn[i] = double(t[i]) / total_steps;
  return net_.forward(input, tn);
}

Checkpoint Denoiser::to_checkpoint(const DiffusionSchedule& sched) const {
  Checkpoint ckpt;
  ckpt.meta = {{"role", "fbdd_denoiser"},
               {"branch", to_string(branch_)},
               {"layout", layout_tag(kConditionLayout)},
               {"latent_channels", cfg_.latent_channels},
               {"factor", cfg_.factor},
               {"unet", layerforge::to_json(net_.config())},
               {"schedule", sched.to_json()},
               {"trained_steps", trained_steps_}};
  ckpt.blobs = blobs_from(const_cast<nn::UNet&>(net_).parameters());
  return ckpt;
}

Denoiser Denoiser::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta.value("role", "") != "fbdd_denoiser") {
    throw ValueError("checkpoint is not an fbdd denoiser");
  }
  if (ckpt.meta.at("layout").get<std::string>() != layout_tag(kConditionLayout)) {
    throw ValueError("denoiser checkpoint layout '" + ckpt.meta.at("layout").get<std::string>() +
                     "' differs from '" + layout_tag(kConditionLayout) + "'");
  }
  const nn::UNetConfig u = unet_config_from_json(ckpt.meta.at("unet"));
  DenoiserConfig cfg{.latent_channels = ckpt.meta.at("latent_channels").get<int>(),
                     .factor = ckpt.meta.at("factor").get<int>(),
                     .base_width = u.base_width,
                     .depth = u.depth,
                     .time_dim = u.time_dim,
                     .head_gain = u.head_gain,
                     .init_seed = u.init_seed,
                     .input_skip = u.input_skip};
  Denoiser d(branch_from_string(ckpt.meta.at("branch").get<std::string>()), cfg);
  restore_parameters(ckpt, d.net_.parameters());
  d.trained_steps_ = ckpt.meta.at("trained_steps").get<long>();
  return d;
}

EncodedSample encode_sample(const Autoencoder& ae, const dataset::DatasetSample& sample) {
  if (dataset::recomposition_error(sample) > kVisibleEpsilon) {
    throw ValueError("encode_sample: sample violates the composition identity");
  }
  return {ae.encode(sample.foreground), ae.encode(sample.background), ae.encode(sample.composite),
          pixel_unshuffle(sample.alpha, ae.factor())};
}

double train_step(Denoiser& model, nn::Adam& opt, std::span<const EncodedSample> data,
                  const DiffusionSchedule& sched, int batch, Rng& rng) {
  if (data.empty()) throw TrainingError("train_step: empty training set");
  const Tensor& ref = data[0].latent_composite;
  const int c_lat = ref.c, in_c = model.config().input_channels();
  Tensor input(batch, in_c, ref.h, ref.w), target(batch, c_lat, ref.h, ref.w);
  std::vector<int> ts(batch);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> tdist(1, sched.steps());
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int b = 0; b < batch; ++b) {
    const EncodedSample& s = data[pick(rng)];
    ts[b] = tdist(rng);
    const Tensor& x0 = model.branch() == Branch::Foreground ? s.foreground : s.background;
    Tensor eps(1, x0.c, x0.h, x0.w);
    for (double& v : eps.data) v = gauss(rng);
    const ConditionPack pack{s.latent_composite, s.alpha_lat, model.branch()};
    copy_sample(build_condition(add_noise(x0, eps, ts[b], sched), pack), input, b);
    copy_sample(v_target(x0, eps, ts[b], sched), target, b);
  }

  model.net().zero_grad();
  const Tensor pred = model.predict_v(input, ts, sched.steps());
  Tensor grad(pred.n, pred.c, pred.h, pred.w);
  double loss = 0.0;
  const double scale = 1.0 / double(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    loss += d * d;
    grad.data[i] = 2.0 * d * scale;
  }
  loss *= scale;
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "fbdd " << to_string(model.branch()) << ": non-finite v-loss at step "
        << opt.steps() << " (t =";
    for (int t : ts) msg << ' ' << t;
    msg << ")";
    throw TrainingError(msg.str());
  }
  model.net().backward(grad);
  opt.step();
  model.add_trained_steps(1);
  return loss;
}

double TrainReport::running_mean(int window) const {
  if (losses.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(losses.size(), std::size_t(std::max(window, 1)));
  double s = 0.0;
  for (std::size_t i = losses.size() - n; i < losses.size(); ++i) s += losses[i];
  return s / double(n);
}

TrainReport train_denoiser(Denoiser& model, std::span<const EncodedSample> data,
                           const DiffusionSchedule& sched, const TrainConfig& cfg) {
  if (data.empty()) throw TrainingError("train_denoiser: empty training set");
  if (cfg.steps < 1 || cfg.batch < 1) throw ValueError("train_denoiser: steps and batch must be >= 1");
  nn::Adam opt(model.net().parameters(), {.lr = cfg.lr, .clip_norm = cfg.clip_norm});
  std::optional<nn::Ema> ema;
  if (cfg.ema_decay > 0) ema.emplace(model.net().parameters(), cfg.ema_decay);
  Rng rng(mix_seed(cfg.seed, model.branch() == Branch::Foreground ? 1 : 2));
  TrainReport report;
  report.losses.reserve(cfg.steps);
  for (int s = 0; s < cfg.steps; ++s) {
    if (cfg.cosine_decay) opt.set_lr(nn::cosine_lr(cfg.lr, s, cfg.steps));
    report.losses.push_back(train_step(model, opt, data, sched, cfg.batch, rng));
    if (ema) ema->update();
  }
  if (ema) ema->copy_to_parameters();
  return report;
}

Tensor sample_layer(Denoiser& model, const ConditionPack& pack, const DiffusionSchedule& sched,
                    int steps, Rng& rng) {
  if (model.trained_steps() <= 0) {
    throw UntrainedError("sample_layer: " + to_string(model.branch()) + " denoiser is untrained");
  }
  if (steps < 1) throw ValueError("sample_layer: steps must be >= 1");
  if (pack.branch != model.branch()) throw ValueError("sample_layer: condition branch mismatch");
  const Tensor& ref = pack.latent_composite;
  Tensor z(1, ref.c, ref.h, ref.w);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : z.data) v = gauss(rng);

  const int T = sched.steps();
  for (int i = steps; i >= 1; --i) {
    const int t = int(std::lround(double(T) * i / steps));
    const int prev = int(std::lround(double(T) * (i - 1) / steps));
    const int tv[1] = {t};
    const Tensor v = model.predict_v(build_condition(z, pack), tv, T);
    const Tensor x0 = predict_x0(z, v, t, sched);
    const Tensor eps = predict_eps(z, v, t, sched);
    z = affine(x0, std::sqrt(sched.alpha_bar(prev)), eps, sched.sigma(prev), "ddim");
  }
  return z;
}

void FbddModels::save(const std::filesystem::path& dir) const {
  if (!autoencoder || !foreground || !background) throw ValueError("FbddModels::save: incomplete models");
  save_checkpoint(dir / "autoencoder.lfck", autoencoder->to_checkpoint());
  Checkpoint fg = foreground->to_checkpoint(schedule), bg = background->to_checkpoint(schedule);
  fg.meta["sampler_steps"] = sampler_steps;
  bg.meta["sampler_steps"] = sampler_steps;
  save_checkpoint(dir / "fbdd_fg.lfck", fg);
  save_checkpoint(dir / "fbdd_bg.lfck", bg);
}

FbddModels FbddModels::load(const std::filesystem::path& dir) {
  FbddModels m;
  m.autoencoder = load_autoencoder(load_checkpoint(dir / "autoencoder.lfck"));
  const Checkpoint fg = load_checkpoint(dir / "fbdd_fg.lfck");
  const Checkpoint bg = load_checkpoint(dir / "fbdd_bg.lfck");
  m.foreground = std::make_unique<Denoiser>(Denoiser::from_checkpoint(fg));
  m.background = std::make_unique<Denoiser>(Denoiser::from_checkpoint(bg));
  if (m.foreground->branch() != Branch::Foreground || m.background->branch() != Branch::Background) {
    throw ValueError("FbddModels::load: branch tags do not match file roles");
  }
  m.schedule = DiffusionSchedule::from_json(fg.meta.at("schedule"));
  m.sampler_steps = fg.meta.value("sampler_steps", 50);
  return m;
}

Decomposition decompose(FbddModels& models, const Image& composite, const AlphaMask& alpha,
                        std::uint64_t seed) {
  if (!models.autoencoder || !models.foreground || !models.background) {
    throw ValueError("decompose: autoencoder and both denoisers are required");
  }
  if (composite.channels() != 3) throw ShapeError("decompose: composite must be RGB");
  const Autoencoder& ae = *models.autoencoder;
  Decomposition out;
  for (Branch b : {Branch::Foreground, Branch::Background}) {
    Denoiser& model = b == Branch::Foreground ? *models.foreground : *models.background;
    Rng rng(mix_seed(seed, b == Branch::Foreground ? 0 : 1));
    const ConditionPack pack = make_condition(ae, composite, alpha, b);
    Image layer = ae.decode(sample_layer(model, pack, models.schedule, models.sampler_steps, rng));
    (b == Branch::Foreground ? out.foreground : out.background) = std::move(layer);
  }
  return out;
}

}  // namespace layerforge::fbdd
