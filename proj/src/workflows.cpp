#include "layerforge/workflows.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

#include "layerforge/errors.hpp"
#include "layerforge/metrics.hpp"
#include "layerforge/util.hpp"

namespace layerforge::workflows {

using nlohmann::json;

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5g", v);
  return buf;
}

// Procedural assets where a seed-determined share of foregrounds covers the whole frame.
class CoverMixSource : public dataset::AssetSource {
 public:
  CoverMixSource(dataset::ForegroundStyle style, dataset::BackgroundStyle bg, double fraction)
      : regular_(style), cover_(style), bg_(bg), fraction_(fraction) {
    cover_.min_scale = 1.6;
    cover_.max_scale = 2.2;
    cover_.centered = true;
  }
  dataset::ForegroundAsset foreground(std::uint64_t seed) const override {
    const double u = double(mix_seed(seed, 0xc0e5) >> 11) * 0x1.0p-53;
    return dataset::procedural_foreground(seed, u < fraction_ ? cover_ : regular_);
  }
  dataset::BackgroundAsset background(std::uint64_t seed) const override {
    return dataset::procedural_background(seed, bg_);
  }

 private:
  dataset::ForegroundStyle regular_, cover_;
  dataset::BackgroundStyle bg_;
  double fraction_;
};

}  // namespace

dataset::CorpusOptions corpus_options(const Config& cfg) {
  dataset::CorpusOptions o;
  o.resolution = cfg.get<int>("dataset", "resolution");
  o.with_trimap = cfg.get<bool>("dataset", "with_trimap");
  o.trimap.min_radius = cfg.get<int>("dataset", "trimap_min_radius");
  o.trimap.max_radius = cfg.get<int>("dataset", "trimap_max_radius");
  o.workers = cfg.get<int>("dataset", "workers");
  return o;
}

dataset::ForegroundStyle foreground_style(const Config& cfg) {
  dataset::ForegroundStyle s;
  s.resolution = cfg.get<int>("dataset", "resolution");
  s.min_scale = cfg.get<double>("dataset", "fg_min_scale");
  s.max_scale = cfg.get<double>("dataset", "fg_max_scale");
  s.centered = cfg.get<bool>("dataset", "centered");
  s.semi_transparent_probability = cfg.get<double>("dataset", "semi_transparent_probability");
  return s;
}

std::unique_ptr<dataset::AssetSource> asset_source(const Config& cfg) {
  const auto fg_dir = cfg.get<std::string>("dataset", "foreground_dir");
  const auto bg_dir = cfg.get<std::string>("dataset", "background_dir");
  const int res = cfg.get<int>("dataset", "resolution");
  if (!fg_dir.empty() || !bg_dir.empty()) {
    if (fg_dir.empty() || bg_dir.empty()) {
      throw ConfigError("dataset.foreground_dir and dataset.background_dir must be set together");
    }
    return std::make_unique<dataset::ImportedSource>(fg_dir, bg_dir, res);
  }
  dataset::BackgroundStyle bg;
  bg.resolution = res;
  const double cover = cfg.get<double>("dataset", "full_cover_fraction");
  if (cover < 0.0 || cover > 1.0) throw ConfigError("dataset.full_cover_fraction must lie in [0, 1]");
  if (cover > 0.0) return std::make_unique<CoverMixSource>(foreground_style(cfg), bg, cover);
  return std::make_unique<dataset::ProceduralSource>(foreground_style(cfg), bg);
}

std::vector<dataset::DatasetSample> make_corpus(const Config& cfg, int count, std::uint64_t seed) {
  const auto source = asset_source(cfg);
  return dataset::generate_samples(count, seed, corpus_options(cfg), source.get());
}

fbdd::DenoiserConfig denoiser_config(const Config& cfg) {
  fbdd::DenoiserConfig d;
  d.latent_channels = cfg.get<int>("autoencoder", "latent_channels");
  d.factor = cfg.get<int>("autoencoder", "factor");
  d.base_width = cfg.get<int>("fbdd", "base_width");
  d.depth = cfg.get<int>("fbdd", "depth");
  d.time_dim = cfg.get<int>("fbdd", "time_dim");
  return d;
}

fbdd::TrainConfig fbdd_train_config(const Config& cfg) {
  fbdd::TrainConfig t;
  t.steps = cfg.get<int>("fbdd", "steps");
  t.batch = cfg.get<int>("fbdd", "batch");
  t.lr = cfg.get<double>("fbdd", "lr");
  t.clip_norm = cfg.get<double>("fbdd", "clip_norm");
  t.ema_decay = cfg.get<double>("fbdd", "ema_decay");
  t.seed = cfg.get<std::uint64_t>("fbdd", "seed");
  return t;
}

hfa::AlignNetConfig align_config(const Config& cfg) {
  hfa::AlignNetConfig a;
  a.base_width = cfg.get<int>("hfa", "base_width");
  a.depth = cfg.get<int>("hfa", "depth");
  return a;
}

hfa::HfaTrainConfig hfa_train_config(const Config& cfg) {
  hfa::HfaTrainConfig t;
  t.steps = cfg.get<int>("hfa", "steps");
  t.batch = cfg.get<int>("hfa", "batch");
  t.lr = cfg.get<double>("hfa", "lr");
  t.clip_norm = cfg.get<double>("hfa", "clip_norm");
  t.seed = cfg.get<std::uint64_t>("hfa", "seed");
  t.ban_loss = hfa::ban_loss_from_string(cfg.get<std::string>("hfa", "ban_loss"));
  t.loss.lambda = cfg.get<double>("hfa", "lambda");
  t.loss.hf.scales = cfg.get<std::vector<int>>("hfa", "hf_scales");
  t.loss.hf.validate();
  return t;
}

baselines::SolverConfig solver_config(const Config& cfg) {
  baselines::SolverConfig s;
  s.smoothness = cfg.get<double>("baselines", "smoothness");
  s.regularization = cfg.get<double>("baselines", "regularization");
  s.anchor = cfg.get<double>("baselines", "anchor");
  s.levels = cfg.get<int>("baselines", "levels");
  s.iterations = cfg.get<int>("baselines", "iterations");
  s.tolerance = cfg.get<double>("baselines", "tolerance");
  s.relaxation = cfg.get<double>("baselines", "relaxation");
  return s;
}

pipeline::PipelineConfig pipeline_config(const Config& cfg) {
  pipeline::PipelineConfig p;
  p.resolution = cfg.get<int>("pipeline", "resolution");
  p.trimap.erode = cfg.get<int>("pipeline", "trimap_erode");
  p.trimap.dilate = cfg.get<int>("pipeline", "trimap_dilate");
  p.layering = pipeline::layering_from_string(cfg.get<std::string>("pipeline", "layering"));
  p.solver = solver_config(cfg);
  p.config = cfg.values();
  return p;
}

FbddTraining train_fbdd(std::span<const dataset::DatasetSample> corpus, const Config& cfg,
                        const Logger& log) {
  if (corpus.empty()) throw ValueError("train_fbdd: empty corpus");
  const auto kind = cfg.get<std::string>("autoencoder", "kind");
  FbddTraining out;
  if (kind == "patch_pca") {
    auto ae = std::make_shared<PatchAutoencoder>(cfg.get<int>("autoencoder", "factor"),
                                                 cfg.get<int>("autoencoder", "latent_channels"));
    std::vector<Image> layers;
    layers.reserve(2 * corpus.size());
    for (const auto& s : corpus) {
      layers.push_back(s.foreground);
      layers.push_back(s.background);
    }
    ae->fit(layers);
    out.models.autoencoder = ae;
  } else if (kind == "identity") {
    out.models.autoencoder = std::make_shared<IdentityAutoencoder>();
  } else {
    throw ConfigError("autoencoder.kind: unknown '" + kind + "'");
  }
  const Autoencoder& ae = *out.models.autoencoder;
  double p = 0.0;
  for (const auto& s : corpus) p += metrics::psnr(ae.decode(ae.encode(s.composite)), s.composite);
  out.autoencoder_psnr = p / static_cast<double>(corpus.size());
  say(log, "autoencoder " + kind + " psnr " + fmt(out.autoencoder_psnr));

  std::vector<fbdd::EncodedSample> enc;
  enc.reserve(corpus.size());
  for (const auto& s : corpus) enc.push_back(fbdd::encode_sample(ae, s));

  const int total = cfg.get<int>("fbdd", "diffusion_steps");
  out.models.schedule = fbdd::DiffusionSchedule::cosine(total);
  out.models.sampler_steps = cfg.get<int>("fbdd", "sampler_steps");
  fbdd::DenoiserConfig dc = denoiser_config(cfg);
  if (kind == "identity") {
    dc.latent_channels = 3;
    dc.factor = 1;
  }
  const fbdd::TrainConfig base = fbdd_train_config(cfg);
  for (const auto branch : {fbdd::Branch::Foreground, fbdd::Branch::Background}) {
    const std::uint64_t k = branch == fbdd::Branch::Foreground ? 1 : 2;
    dc.init_seed = mix_seed(base.seed, k);
    auto model = std::make_unique<fbdd::Denoiser>(branch, dc);
    fbdd::TrainConfig tc = base;
    tc.seed = mix_seed(base.seed, k + 2);
    const int bg_steps = cfg.get<int>("fbdd", "background_steps");
    if (branch == fbdd::Branch::Background && bg_steps > 0) tc.steps = bg_steps;
    say(log, "training " + fbdd::to_string(branch) + " denoiser for " + std::to_string(tc.steps) + " steps");
    auto report = fbdd::train_denoiser(*model, enc, out.models.schedule, tc);
    say(log, fbdd::to_string(branch) + " loss " + fmt(report.initial_loss()) + " -> " +
                 fmt(report.running_mean(std::min(50, tc.steps))));
    if (branch == fbdd::Branch::Foreground) {
      out.models.foreground = std::move(model);
      out.foreground = std::move(report);
    } else {
      out.models.background = std::move(model);
      out.background = std::move(report);
    }
  }
  return out;
}

HfaTraining train_hfa(std::span<const dataset::DatasetSample> corpus, const hfa::FbddCache& cache,
                      const Config& cfg, const Logger& log) {
  HfaTraining out;
  const hfa::HfaTrainConfig tc = hfa_train_config(cfg);
  for (const auto role : {hfa::Role::FAN, hfa::Role::BAN}) {
    hfa::AlignNetConfig ac = align_config(cfg);
    ac.init_seed = mix_seed(tc.seed, role == hfa::Role::FAN ? 1 : 2);
    auto net = std::make_unique<hfa::AlignNet>(role, ac);
    say(log, "training " + hfa::to_string(role) + " for " + std::to_string(tc.steps) + " steps");
    auto report = hfa::train_hfa(*net, corpus, cache, tc);
    say(log, hfa::to_string(role) + " loss " + fmt(report.initial_loss()) + " -> " +
                 fmt(report.running_mean(std::min(50, tc.steps))));
    if (role == hfa::Role::FAN) {
      out.models.fan = std::move(net);
      out.fan = std::move(report);
    } else {
      out.models.ban = std::move(net);
      out.ban = std::move(report);
    }
  }
  return out;
}

report::Report evaluate(std::span<const dataset::DatasetSample> corpus, fbdd::FbddModels& fbdd_models,
                        hfa::HfaModels* hfa_models, const Config& cfg, std::uint64_t seed,
                        const Logger& log) {
  report::Report rep;
  const baselines::SolverConfig solver = solver_config(cfg);
  const double occ = cfg.get<double>("baselines", "occlusion_threshold");
  metrics::SeamConfig seam_cfg;
  seam_cfg.control_distance = cfg.get<int>("metrics", "seam_distance");
  const double fg_threshold = cfg.get<double>("metrics", "fg_threshold");

  std::map<std::string, std::pair<double, int>> seams;
  std::vector<std::optional<metrics::FGStats>> stats;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    const std::string id = "sample_" + std::to_string(i);
    std::vector<std::pair<std::string, std::pair<Image, Image>>> methods;

    const auto coarse = fbdd::decompose(fbdd_models, s.composite, s.alpha, mix_seed(seed, i));
    if (hfa_models) {
      auto refined = hfa::refine(*hfa_models, s.composite, s.alpha, coarse);
      methods.push_back({"fbdd+hfa", {std::move(refined.foreground), std::move(refined.background)}});
    }
    methods.push_back({"fbdd", {coarse.foreground, coarse.background}});
    const auto solved = baselines::smooth_color_estimate(s.composite, s.alpha, solver);
    Image f = region_copy(solved.foreground, s.composite, s.alpha, LayerTarget::Foreground);
    Image b = region_copy(solved.background, s.composite, s.alpha, LayerTarget::Background);
    Image bi = region_copy(baselines::inpaint_occluded(b, baselines::occlusion_mask(s.alpha, occ)), s.composite,
                           s.alpha, LayerTarget::Background);
    methods.push_back({"solver", {f, std::move(b)}});
    methods.push_back({"solver+inpaint", {std::move(f), std::move(bi)}});

    for (const auto& [name, layers] : methods) {
      rep.errors.push_back({id, name, "fg", metrics::layer_errors(layers.first, s.foreground)});
      rep.errors.push_back({id, name, "bg", metrics::layer_errors(layers.second, s.background)});
      if (const auto v = metrics::seam_metric(layers.second, s.alpha, seam_cfg)) {
        seams[name].first += *v;
        seams[name].second += 1;
      }
    }
    stats.push_back(metrics::fg_stats(s.alpha, fg_threshold));
    say(log, "evaluated " + id);
  }
  rep.fg_stats.push_back(report::summarize_fg_stats("gt", stats));
  json seam = json::object();
  for (const auto& [name, acc] : seams) {
    seam[name] = {{"mean", acc.second ? acc.first / acc.second : 0.0}, {"samples", acc.second}};
  }
  rep.extra["seam"] = seam;
  rep.extra["samples"] = corpus.size();
  return rep;
}

SignTest sign_test(std::span<const double> first, std::span<const double> second) {
  if (first.size() != second.size()) throw ValueError("sign_test: series lengths differ");
  SignTest t;
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (first[i] < second[i]) {
      ++t.wins;
    } else if (first[i] > second[i]) {
      ++t.losses;
    } else {
      ++t.ties;
    }
  }
  const int n = t.wins + t.losses;
  // P(X >= wins) for X ~ Binomial(n, 1/2), summed in log space.
  double p = 0.0;
  for (int k = t.wins; k <= n; ++k) {
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  }
  t.p_value = std::min(1.0, p);
  return t;
}

bool AblationResult::passed(double alpha) const {
  if (mean_seam.size() != 3 || seams.empty() || seams[0].size() < 20) return false;
  return mean_seam[0] < mean_seam[1] && mean_seam[0] < mean_seam[2] && full_vs_mse.p_value < alpha &&
         full_vs_regionwise.p_value < alpha;
}

json AblationResult::to_json() const {
  auto test_json = [](const SignTest& t) {
    return json{{"wins", t.wins}, {"losses", t.losses}, {"ties", t.ties}, {"p_value", t.p_value}};
  };
  json v = json::object();
  for (std::size_t i = 0; i < variants.size(); ++i) {
    v[variants[i]] = {{"mean_seam", mean_seam[i]},
                      {"seams", seams[i]},
                      {"initial_loss", training[i].initial_loss()},
                      {"final_loss", training[i].running_mean(20)}};
  }
  return {{"variants", v},
          {"full_vs_mse", test_json(full_vs_mse)},
          {"full_vs_regionwise", test_json(full_vs_regionwise)},
          {"samples", seams.empty() ? 0 : seams[0].size()},
          {"skipped", skipped},
          {"seconds", seconds},
          {"passed", passed()}};
}

AblationResult ban_loss_ablation(const Config& cfg, const Logger& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto seed = cfg.get<std::uint64_t>("ablation", "seed");
  const int n_fbdd = cfg.get<int>("ablation", "fbdd_samples");
  const int n_hfa = cfg.get<int>("ablation", "hfa_samples");
  const int n_eval = cfg.get<int>("ablation", "eval_samples");
  if (n_eval < 1) throw ConfigError("ablation.eval_samples must be >= 1");

  const auto corpus_a = make_corpus(cfg, n_fbdd, mix_seed(seed, 0xA));
  const auto corpus_b = make_corpus(cfg, n_hfa, mix_seed(seed, 0xB));
  // Held-out samples are drawn until n_eval of them have a defined seam under their own alpha.
  std::vector<dataset::DatasetSample> corpus_c;
  AblationResult out;
  metrics::SeamConfig seam_cfg;
  seam_cfg.control_distance = cfg.get<int>("metrics", "seam_distance");
  {
    const auto source = asset_source(cfg);
    const auto opts = corpus_options(cfg);
    const auto pool = dataset::generate_samples(8 * n_eval, mix_seed(seed, 0xC), opts, source.get());
    for (const auto& s : pool) {
      if (static_cast<int>(corpus_c.size()) == n_eval) break;
      if (metrics::seam_metric(s.background, s.alpha, seam_cfg)) {
        corpus_c.push_back(s);
      } else {
        ++out.skipped;
      }
    }
  }
  say(log, "corpora: fbdd " + std::to_string(corpus_a.size()) + ", hfa " + std::to_string(corpus_b.size()) +
               ", held-out " + std::to_string(corpus_c.size()));

  auto fbdd_run = train_fbdd(corpus_a, cfg, log);
  say(log, "decomposing the hfa and held-out corpora");
  const auto cache_b = hfa::build_fbdd_cache(fbdd_run.models, corpus_b, mix_seed(seed, 21));
  const auto cache_c = hfa::build_fbdd_cache(fbdd_run.models, corpus_c, mix_seed(seed, 22));

  hfa::AlignNetConfig ac = align_config(cfg);
  ac.base_width = cfg.get<int>("ablation", "hfa_base_width");
  ac.init_seed = mix_seed(seed, 23);
  for (const auto variant : {hfa::BanLoss::Full, hfa::BanLoss::Mse, hfa::BanLoss::Regionwise}) {
    hfa::HfaTrainConfig tc = hfa_train_config(cfg);
    tc.ban_loss = variant;
    hfa::AlignNet net(hfa::Role::BAN, ac);
    say(log, "training BAN with the " + hfa::to_string(variant) + " loss");
    out.training.push_back(hfa::train_hfa(net, corpus_b, cache_b, tc));
    std::vector<double> seams;
    for (std::size_t i = 0; i < corpus_c.size(); ++i) {
      const auto& s = corpus_c[i];
      const Image b = hfa::ban_refine(net, s.composite, s.alpha, cache_c[i]->background);
      seams.push_back(metrics::seam_metric(b, s.alpha, seam_cfg).value_or(0.0));
    }
    const double mean = std::accumulate(seams.begin(), seams.end(), 0.0) / static_cast<double>(seams.size());
    say(log, hfa::to_string(variant) + " mean seam " + fmt(mean));
    out.variants.push_back(hfa::to_string(variant));
    out.mean_seam.push_back(mean);
    out.seams.push_back(std::move(seams));
  }
  out.full_vs_mse = sign_test(out.seams[0], out.seams[1]);
  out.full_vs_regionwise = sign_test(out.seams[0], out.seams[2]);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace layerforge::workflows
