// Acceptance checks, one line per criterion. Exit status is the number of failures.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "helpers.hpp"
#include "json.hpp"
#include "layerforge/adapters.hpp"
#include "layerforge/baselines.hpp"
#include "layerforge/checkpoint.hpp"
#include "layerforge/compose.hpp"
#include "layerforge/corpus.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/fbdd.hpp"
#include "layerforge/haar.hpp"
#include "layerforge/hfa.hpp"
#include "layerforge/manifest.hpp"
#include "layerforge/metrics.hpp"
#include "layerforge/pipeline.hpp"
#include "layerforge/png_io.hpp"
#include "layerforge/report.hpp"
#include "layerforge/trimap.hpp"
#include "layerforge/util.hpp"
#include "layerforge/workflows.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace layerforge;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double mad(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.values()[i] - b.values()[i]);
  return s / double(a.size());
}

std::string file_bytes(const fs::path& p) { return read_text_file(p); }

std::string checkpoint_bytes(const Checkpoint& ckpt, const fs::path& scratch) {
  save_checkpoint(scratch, ckpt);
  return file_bytes(scratch);
}

/// Every regular file below `root`, keyed by relative path.
std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = file_bytes(e.path());
  }
  return out;
}

// Brute-force square-element morphology, windows clipped at the border.
BinaryMask brute_morph(const BinaryMask& m, int r, bool dilation) {
  BinaryMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      bool any = false, all = true;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= m.height() || xx >= m.width()) continue;
          any = any || m.at(yy, xx);
          all = all && m.at(yy, xx);
        }
      out.set(y, x, dilation ? any : all);
    }
  return out;
}

// Minimiser of the solver energy from the dense normal equations, per channel.
std::pair<Raster, Raster> dense_solve(const Image& c, const AlphaMask& alpha, const baselines::SolverConfig& cfg) {
  const int h = c.height(), w = c.width(), n = h * w;
  Raster f(h, w, c.channels()), b(h, w, c.channels());
  for (int k = 0; k < c.channels(); ++k) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * n);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int p = y * w + x;
        const double a = alpha.at(y, x), cv = c.at(y, x, k);
        H(p, p) += a * a + cfg.anchor;
        H(n + p, n + p) += (1 - a) * (1 - a) + cfg.anchor;
        H(p, n + p) += a * (1 - a);
        H(n + p, p) += a * (1 - a);
        g(p) += (a + cfg.anchor) * cv;
        g(n + p) += (1 - a + cfg.anchor) * cv;
        for (auto [qy, qx] : {std::pair{y, x + 1}, std::pair{y + 1, x}}) {
          if (qy >= h || qx >= w) continue;
          const int q = qy * w + qx;
          const double wpq = cfg.regularization + cfg.smoothness * std::abs(a - alpha.at(qy, qx));
          for (int off : {0, n}) {
            H(off + p, off + p) += wpq;
            H(off + q, off + q) += wpq;
            H(off + p, off + q) -= wpq;
            H(off + q, off + p) -= wpq;
          }
        }
      }
    const Eigen::VectorXd sol = H.ldlt().solve(g);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        f.at(y, x, k) = std::clamp(sol(y * w + x), 0.0, 1.0);
        b.at(y, x, k) = std::clamp(sol(n + y * w + x), 0.0, 1.0);
      }
  }
  return {f, b};
}

AlphaMask smooth_alpha(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double cy = u(rng) * n, cx = u(rng) * n, r = 3 + u(rng) * n / 3.0;
  AlphaMask a(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) a.at(y, x) = std::clamp(r - std::hypot(y - cy, x - cx), 0.0, 1.0);
  return a;
}

/// Toy FBDD recipe for the degenerate-alpha check and the desk pipeline.
Config toy_config() {
  Config cfg = Config::from_defaults();
  cfg.merge({{"dataset", {{"fg_min_scale", 0.3}, {"fg_max_scale", 1.2}, {"full_cover_fraction", 0.5}}},
             {"autoencoder", {{"latent_channels", 6}}},
             {"fbdd", {{"steps", 6000}, {"background_steps", 2000}, {"sampler_steps", 20}}},
             {"hfa", {{"steps", 150}, {"base_width", 16}}}},
            "toy recipe");
  return cfg;
}

struct Toy {
  fbdd::FbddModels fbdd;
  hfa::HfaModels hfa;
  fs::path dir;  // fbdd/ and hfa/ saved here
};

struct Context {
  fs::path work;
  fs::path cli;
  std::optional<Toy> toy;
  std::optional<workflows::FbddTraining> smoke[2];
  std::vector<std::string> determinism;  // entry points already found byte-reproducible
  std::vector<std::string> nondeterminism;

  void note(const std::string& entry, bool same) { (same ? determinism : nondeterminism).push_back(entry); }

  Toy& toy_models() {
    if (toy) return *toy;
    const Config cfg = toy_config();
    const auto corpus = workflows::make_corpus(cfg, 512, 1);
    auto fb = workflows::train_fbdd(corpus, cfg);
    const auto hfa_corpus = workflows::make_corpus(cfg, 32, 3);
    const auto cache = hfa::build_fbdd_cache(fb.models, hfa_corpus, 4);
    auto hf = workflows::train_hfa(hfa_corpus, cache, cfg);
    toy.emplace();
    toy->fbdd = std::move(fb.models);
    toy->hfa = std::move(hf.models);
    toy->dir = work / "toy_models";
    toy->fbdd.save(toy->dir / "fbdd");
    toy->hfa.save(toy->dir / "hfa");
    return *toy;
  }
};

json synthetic_requests() {
  const std::vector<std::pair<std::string, std::vector<std::vector<int>>>> items = {
      {"a red kite above the hills", {{2}}},
      {"an old lantern on a table", {{2}}},
      {"a small boat at sea", {{2}}},
      {"one green apple", {{2}}},
      {"a paper crane in sunlight", {{2}}},
      {"the violin case", {{1, 2}}},
      {"a sleeping fox", {{2}}},
      {"a glass vase with flowers", {{2}}},
      {"a wooden chair indoors", {{2}}},
      {"a yellow umbrella", {{2}}},
      {"a cat next to a dog", {{1}, {5}}},
      {"an owl and a lamp", {{1}, {4}}},
  };
  json reqs = json::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    reqs.push_back({{"id", fmt("req_%02zu", i)}, {"prompt", items[i].first}, {"foreground", items[i].second},
                    {"seed", 100 + i}});
  }
  return reqs;
}

// ---------------------------------------------------------------------------------------------

Outcome composition_identities(Context&) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  double worst = 0.0;
  bool exact = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const Image f = testing::random_image(rng, 64, 64, 3), b = testing::random_image(rng, 64, 64, 3);
    const AlphaMask a = testing::random_alpha(rng, 64, 64);
    const Image c = composite(f, b, a);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        for (int k = 0; k < 3; ++k) {
          const double al = a.at(y, x);
          worst = std::max(worst, std::abs(c.at(y, x, k) - (al * f.at(y, x, k) + (1 - al) * b.at(y, x, k))));
        }
    if (trial % 10 == 0) {
      exact = exact && composite(f, b, AlphaMask(64, 64, 0.0)) == b && composite(f, b, AlphaMask(64, 64, 1.0)) == f;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && exact && secs < 10,
          fmt("max |C - (aF + (1-a)B)| = %.2e over 1000 triples, binary-alpha cases %s, %.1f s", worst,
              exact ? "bit-exact" : "NOT exact", secs)};
}

Outcome haar_correctness(Context&) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(12);
  double energy_err = 0, recon_err = 0, self_loss = 0, offset_err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Image x = testing::random_image(rng, 64, 64, 3), y = testing::random_image(rng, 64, 64, 3);
    const auto pyr = haar::haar_decompose(x, 4);
    double e_in = 0, e_out = 0;
    for (double v : x.values()) e_in += v * v;
    for (const auto& s : pyr.scales)
      for (auto d : haar::kDirections)
        for (double v : s.band(d).values()) e_out += v * v;
    for (double v : pyr.approximation.values()) e_out += v * v;
    energy_err = std::max(energy_err, std::abs(e_in - e_out) / e_in);
    const Raster back = haar::haar_reconstruct(pyr);
    for (std::size_t i = 0; i < x.size(); ++i) recon_err = std::max(recon_err, std::abs(back.values()[i] - x.values()[i]));
    self_loss = std::max(self_loss, std::abs(haar::high_frequency_loss(x, x)));
    Raster shifted = x.raster();
    const double c = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    for (double& v : shifted.values()) v += c;
    const double base = haar::high_frequency_loss(x.raster(), y.raster());
    offset_err = std::max(offset_err, std::abs(haar::high_frequency_loss(shifted, y.raster()) - base));
  }
  const double secs = seconds_since(t0);
  return {energy_err <= 1e-6 && recon_err <= 1e-6 && self_loss == 0.0 && offset_err <= 1e-6 && secs < 10,
          fmt("energy rel err %.1e, reconstruction %.1e, L_H(X,X) = %g, offset shift %.1e, %.1f s", energy_err,
              recon_err, self_loss, offset_err, secs)};
}

Outcome trimap_oracle(Context&) {
  std::mt19937_64 rng(13);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 8 + int(rng() % 25), w = 8 + int(rng() % 25);
    const BinaryMask m = testing::random_binary(rng, h, w, 0.3 + 0.4 * (rng() % 100) / 100.0);
    const int er = int(rng() % 5), dr = int(rng() % 5);
    const Trimap t = make_trimap(to_alpha(m), er, dr);
    const BinaryMask core = brute_morph(m, er, false), ext = brute_morph(m, dr, true);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double expected = core.at(y, x) ? 1.0 : ext.at(y, x) ? 0.5 : 0.0;
        if (t.at(y, x) != expected) ++mismatches;
      }
  }
  return {mismatches == 0, fmt("%d mismatching pixels over 100 masks, radii 0..4", mismatches)};
}

Outcome unshuffle_round_trip(Context&) {
  std::mt19937_64 rng(14);
  int failures = 0;
  for (int r : {1, 2, 4, 8}) {
    for (int trial = 0; trial < 10; ++trial) {
      const AlphaMask a = testing::random_alpha(rng, 8 * (1 + int(rng() % 4)), 8 * (1 + int(rng() % 4)));
      const UnshuffledMask u = pixel_unshuffle(a, r);
      if (u.channels() != r * r || u.height() * r != a.height() || pixel_shuffle(u) != a) ++failures;
    }
  }
  return {failures == 0, fmt("%d failed round trips for r in {1, 2, 4, 8}", failures)};
}

Outcome v_algebra(Context&) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n01;
  const auto sched = fbdd::DiffusionSchedule::cosine();
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    nn::Tensor x0(1, 4, 8, 8), eps(1, 4, 8, 8);
    for (double& v : x0.data) v = n01(rng);
    for (double& v : eps.data) v = n01(rng);
    const int t = 1 + int(rng() % sched.steps());
    const auto z = fbdd::add_noise(x0, eps, t, sched);
    const auto v = fbdd::v_target(x0, eps, t, sched);
    const auto rec = fbdd::predict_x0(z, v, t, sched);
    for (std::size_t i = 0; i < x0.size(); ++i) worst = std::max(worst, std::abs(rec.data[i] - x0.data[i]));
  }
  nn::Tensor x0(1, 3, 4, 4), eps(1, 3, 4, 4);
  for (double& v : x0.data) v = n01(rng);
  for (double& v : eps.data) v = n01(rng);
  const auto v1 = fbdd::v_target(x0, eps, 1.0), v0 = fbdd::v_target(x0, eps, 0.0);
  bool limits = true;
  for (std::size_t i = 0; i < x0.size(); ++i) limits = limits && v1.data[i] == eps.data[i] && v0.data[i] == -x0.data[i];
  return {worst <= 1e-6 && limits,
          fmt("max |x0_hat - x0| = %.2e over 100 draws, limits %s", worst, limits ? "exact" : "NOT exact")};
}

Outcome fbdd_smoke(Context& ctx) {
  const auto t0 = Clock::now();
  const Config cfg = Config::from_defaults();
  const auto corpus = workflows::make_corpus(cfg, 32, cfg.get<std::uint64_t>("dataset", "seed"));
  for (auto& run : ctx.smoke) run = workflows::train_fbdd(corpus, cfg);
  const double secs = seconds_since(t0);
  const auto& a = *ctx.smoke[0];
  const auto& b = *ctx.smoke[1];
  const int steps = cfg.get<int>("fbdd", "steps");
  const double fg0 = a.foreground.initial_loss(), fg1 = a.foreground.running_mean(50);
  const double bg0 = a.background.initial_loss(), bg1 = a.background.running_mean(50);
  const auto sched = a.models.schedule;
  const bool same =
      a.foreground.losses == b.foreground.losses && a.background.losses == b.background.losses &&
      checkpoint_bytes(a.models.foreground->to_checkpoint(sched), ctx.work / "s0.lfck") ==
          checkpoint_bytes(b.models.foreground->to_checkpoint(sched), ctx.work / "s1.lfck") &&
      checkpoint_bytes(a.models.background->to_checkpoint(sched), ctx.work / "s0.lfck") ==
          checkpoint_bytes(b.models.background->to_checkpoint(sched), ctx.work / "s1.lfck");
  ctx.note("fbdd training", same);
  return {fg1 < fg0 && bg1 < bg0 && same && secs / 2 < 7200,
          fmt("%d steps: fg loss %.4f -> %.4f, bg %.4f -> %.4f (mean of last 50), repeat run %s, %.0f s per run",
              steps, fg0, fg1, bg0, bg1, same ? "identical" : "DIFFERS", secs / 2)};
}

Outcome fbdd_degenerate_alpha(Context& ctx) {
  Toy& toy = ctx.toy_models();
  Config held_out = Config::from_defaults();
  const auto test = workflows::make_corpus(held_out, 8, 2);
  double bg_sum = 0, fg_sum = 0, bg_max = 0, fg_max = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Image& c = test[i].composite;
    const auto d0 = fbdd::decompose(toy.fbdd, c, AlphaMask(c.height(), c.width(), 0.0), 500 + i);
    const auto d1 = fbdd::decompose(toy.fbdd, c, AlphaMask(c.height(), c.width(), 1.0), 600 + i);
    const double eb = mad(d0.background, c), ef = mad(d1.foreground, c);
    bg_sum += eb, fg_sum += ef;
    bg_max = std::max(bg_max, eb), fg_max = std::max(fg_max, ef);
  }
  const double n = double(test.size());
  return {bg_sum / n < 0.05 && fg_sum / n < 0.05,
          fmt("over %zu held-out composites: bg|a=0 MAD %.4f (worst %.4f), fg|a=1 MAD %.4f (worst %.4f), limit 0.05",
              test.size(), bg_sum / n, bg_max, fg_sum / n, fg_max)};
}

int copy_rule_violations(const pipeline::PipelineResult& r) {
  int bad = 0;
  const double eps = kVisibleEpsilon;
  const auto& layers = r.stack.layers;
  for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
    const Image& f = layers[k].image;
    const Image& src = r.sources.at(k);
    const AlphaMask& a = *layers[k].alpha;
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x) {
        if (a.at(y, x) < 1.0 - eps) continue;
        for (int c = 0; c < 3; ++c) bad += quantize8(f.at(y, x, c)) != quantize8(src.at(y, x, c));
      }
  }
  if (layers.size() >= 2) {
    const Image& b = layers.back().image;
    const Image& src = r.sources.back();
    const AlphaMask& a = *layers[layers.size() - 2].alpha;
    for (int y = 0; y < b.height(); ++y)
      for (int x = 0; x < b.width(); ++x) {
        if (a.at(y, x) > eps) continue;
        for (int c = 0; c < 3; ++c) bad += quantize8(b.at(y, x, c)) != quantize8(src.at(y, x, c));
      }
  }
  return bad;
}

std::vector<pipeline::PipelineResult> run_in_process(Context& ctx, pipeline::Layering layering) {
  Toy& toy = ctx.toy_models();
  Config cfg = Config::from_defaults();
  auto pc = workflows::pipeline_config(cfg);
  pc.layering = layering;
  auto world = std::make_shared<adapters::OracleWorld>();
  auto registry = adapters::make_registry(json::object(), adapters::Mode::Desk, world, ctx.work / "calls");
  pipeline::Pipeline p(registry, pc, {&toy.fbdd, &toy.hfa});
  std::vector<pipeline::PipelineResult> out;
  const json reqs = synthetic_requests();
  for (std::size_t i = 0; i < reqs.size(); ++i) out.push_back(p.multi_layer_decompose(pipeline::request_from_json(reqs[i], {}, i)));
  return out;
}

Outcome hfa_copy_rule(Context& ctx) {
  int outputs = 0, bad = 0;
  for (auto layering : {pipeline::Layering::FbddHfa, pipeline::Layering::Solver}) {
    for (const auto& r : run_in_process(ctx, layering)) {
      ++outputs;
      bad += copy_rule_violations(r);
    }
  }
  return {bad == 0 && outputs > 0,
          fmt("%d 8-bit mismatches on copied pixels across %d pipeline outputs (fbdd+hfa and solver layering)", bad,
              outputs)};
}

Outcome ban_ablation(Context&) {
  const auto r = workflows::ban_loss_ablation(Config::from_defaults());
  const std::size_t n = r.seams.empty() ? 0 : r.seams[0].size();
  return {r.passed() && r.seconds < 1800,
          fmt("%zu held-out samples: mean seam full %.5f, mse %.5f, regionwise %.5f; sign test full<mse %d/%d "
              "p=%.3g, full<regionwise %d/%d p=%.3g; %.0f s",
              n, r.mean_seam[0], r.mean_seam[1], r.mean_seam[2], r.full_vs_mse.wins,
              r.full_vs_mse.wins + r.full_vs_mse.losses, r.full_vs_mse.p_value, r.full_vs_regionwise.wins,
              r.full_vs_regionwise.wins + r.full_vs_regionwise.losses, r.full_vs_regionwise.p_value, r.seconds)};
}

Outcome solver_oracle(Context&) {
  std::mt19937_64 rng(16);
  const baselines::SolverConfig cfg;
  double worst = 0, worst_rise = 0;
  bool converged = true;
  for (int trial = 0; trial < 5; ++trial) {
    const Image c = testing::random_image(rng, 16, 16, 3);
    const AlphaMask a = smooth_alpha(rng, 16);
    const auto r = baselines::smooth_color_estimate(c, a, cfg);
    converged = converged && r.converged;
    const auto [f, b] = dense_solve(c, a, cfg);
    for (std::size_t i = 0; i < f.size(); ++i) {
      worst = std::max(worst, std::abs(r.foreground.values()[i] - f.values()[i]));
      worst = std::max(worst, std::abs(r.background.values()[i] - b.values()[i]));
    }
    for (const auto& level : r.energies)
      for (std::size_t i = 1; i < level.size(); ++i) worst_rise = std::max(worst_rise, (level[i] - level[i - 1]) / level[0]);
  }
  // The rise is relative to the level's initial energy; 1e-12 absorbs summation rounding.
  return {worst < 1e-3 && worst_rise <= 1e-12,
          fmt("max per-pixel |solver - dense| = %.2e on 16x16, largest relative energy rise %.1e, converged %s", worst,
              worst_rise, converged ? "yes" : "no")};
}

Outcome metric_arithmetic(Context&) {
  std::mt19937_64 rng(17);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Image p = testing::random_image(rng, 32, 48, 3), g = testing::random_image(rng, 32, 48, 3);
    const auto e = metrics::layer_errors(p, g);
    worst = std::max(worst, std::abs(e.sad - e.mad * double(e.elements)) / e.sad);
  }
  report::Report rep;
  metrics::LayerErrors e;
  e.mad = 0.0123, e.mse = 0.0045, e.sad = 4567.0, e.perceptual = 0.321, e.elements = 3 * 64 * 64;
  rep.errors.push_back({"s", "m", "fg", e});
  const json d = rep.to_json()["error_table"][0]["display"];
  const bool scaled = std::abs(d["mad"].get<double>() - 12.3) < 1e-9 && std::abs(d["mse"].get<double>() - 4.5) < 1e-9 &&
                      std::abs(d["perceptual"].get<double>() - 32.1) < 1e-9 &&
                      std::abs(d["sad"].get<double>() - 4.567) < 1e-9;
  return {worst < 1e-12 && scaled,
          fmt("max relative |SAD - MAD*N| = %.1e; display MAD %.4g, MSE %.4g, perceptual %.4g, SAD %.4g", worst,
              d["mad"].get<double>(), d["mse"].get<double>(), d["perceptual"].get<double>(), d["sad"].get<double>())};
}

Outcome fg_statistics(Context&) {
  AlphaMask block(8, 8, 0.0);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) block.at(y, x) = 1.0;
  const auto s = metrics::fg_stats(block);
  const bool fixture = s && s->occupancy_ratio == 25.0 && s->longest_span == 50.0 && s->vertical_center == 50.0 &&
                       s->horizontal_center == 50.0;
  const auto style = dataset::ForegroundStyle::object_centric(64);
  std::vector<std::optional<metrics::FGStats>> stats;
  for (std::uint64_t i = 0; i < 100; ++i) {
    stats.push_back(metrics::fg_stats(split_rgba(dataset::procedural_foreground(i, style).rgba).second));
  }
  const auto row = report::summarize_fg_stats("object_centric", stats);
  return {fixture && row.mean.longest_span > 90.0,
          fmt("4x4-in-8x8 block: occupancy %.1f span %.1f centres %.1f/%.1f; object-centric generator mean "
              "longest span %.2f over %zu samples",
              s ? s->occupancy_ratio : -1, s ? s->longest_span : -1, s ? s->vertical_center : -1,
              s ? s->horizontal_center : -1, row.mean.longest_span, row.samples - row.empty)};
}

Outcome desk_pipeline(Context& ctx) {
  const auto t0 = Clock::now();
  Toy& toy = ctx.toy_models();
  const fs::path req_path = ctx.work / "requests.json";
  write_text_file(req_path, synthetic_requests().dump(2));
  std::vector<std::map<std::string, std::string>> trees;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path out = ctx.work / fmt("runs_%d", rep);
    fs::remove_all(out);
    const std::string cmd = "\"" + ctx.cli.string() + "\" --out \"" + out.string() + "\" pipeline run --requests \"" +
                            req_path.string() + "\" --models \"" + toy.dir.string() + "\" > \"" +
                            (ctx.work / "cli.log").string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "pipeline run exited nonzero, see " + (ctx.work / "cli.log").string()};
    fs::remove_all(out / "adapter_calls");
    trees.push_back(tree_bytes(out));
  }
  const double secs = seconds_since(t0) / 2;
  ctx.note("pipeline run", trees[0] == trees[1]);
  int single_ok = 0, multi_ok = 0, failures = 0;
  std::string first_error;
  const json reqs = synthetic_requests();
  for (const auto& r : reqs) {
    const std::string id = r["id"];
    try {
      const LayerStack s = load_stack(ctx.work / "runs_0" / id);
      const std::size_t want = r["foreground"].size() + 1;
      if (s.layers.size() != want) throw ValueError(fmt("%zu layers, expected %zu", s.layers.size(), want));
      (want == 2 ? single_ok : multi_ok) += 1;
    } catch (const std::exception& e) {
      ++failures;
      if (first_error.empty()) first_error = id + ": " + e.what();
    }
  }
  return {failures == 0 && single_ok == 10 && multi_ok == 2 && secs < 600,
          fmt("%d/10 single-layer manifests and %d/2 three-entry manifests load with recomposition checks, "
              "%.0f s per run%s%s",
              single_ok, multi_ok, secs, first_error.empty() ? "" : "; ", first_error.c_str())};
}

Outcome determinism(Context& ctx) {
  // Corpus generation.
  const Config cfg = Config::from_defaults();
  {
    const auto opts = workflows::corpus_options(cfg);
    fs::path d0 = ctx.work / "corpus_0", d1 = ctx.work / "corpus_1";
    fs::remove_all(d0), fs::remove_all(d1);
    std::array<std::uint64_t, 2> h{};
    for (int i = 0; i < 2; ++i) {
      dataset::DirectorySink sink(i ? d1 : d0);
      h[i] = dataset::build_corpus(8, 5, sink, opts).hash();
    }
    ctx.note("dataset build", h[0] == h[1] && tree_bytes(d0) == tree_bytes(d1));
  }
  // Autoencoder fit and HFA training on a small corpus.
  {
    Config small = cfg;
    small.merge({{"hfa", {{"steps", 20}, {"base_width", 8}, {"depth", 2}}}}, "determinism");
    Toy& toy = ctx.toy_models();
    const auto corpus = workflows::make_corpus(small, 8, 9);
    const auto cache = hfa::build_fbdd_cache(toy.fbdd, corpus, 10);
    const auto cache2 = hfa::build_fbdd_cache(toy.fbdd, corpus, 10);
    bool same_cache = true;
    for (std::size_t i = 0; i < cache.size(); ++i) {
      same_cache = same_cache && cache[i]->foreground == cache2[i]->foreground &&
                   cache[i]->background == cache2[i]->background;
    }
    ctx.note("fbdd sampling", same_cache);
    auto h0 = workflows::train_hfa(corpus, cache, small);
    auto h1 = workflows::train_hfa(corpus, cache, small);
    ctx.note("hfa training",
             h0.fan.losses == h1.fan.losses && h0.ban.losses == h1.ban.losses &&
                 checkpoint_bytes(h0.models.fan->to_checkpoint(), ctx.work / "h0.lfck") ==
                     checkpoint_bytes(h1.models.fan->to_checkpoint(), ctx.work / "h1.lfck") &&
                 checkpoint_bytes(h0.models.ban->to_checkpoint(), ctx.work / "h0.lfck") ==
                     checkpoint_bytes(h1.models.ban->to_checkpoint(), ctx.work / "h1.lfck"));
    std::vector<Image> layers;
    for (const auto& s : corpus) layers.push_back(s.composite);
    PatchAutoencoder a0(4, 4), a1(4, 4);
    a0.fit(layers), a1.fit(layers);
    ctx.note("autoencoder fit", checkpoint_bytes(a0.to_checkpoint(), ctx.work / "a0.lfck") ==
                                    checkpoint_bytes(a1.to_checkpoint(), ctx.work / "a1.lfck"));
    const auto r0 = hfa::refine(toy.hfa, corpus[0].composite, corpus[0].alpha, *cache[0]);
    const auto r1 = hfa::refine(toy.hfa, corpus[0].composite, corpus[0].alpha, *cache[0]);
    ctx.note("hfa refine", r0.foreground == r1.foreground && r0.background == r1.background);
  }
  if (!ctx.smoke[0]) {
    Config small = cfg;
    small.merge({{"fbdd", {{"steps", 20}, {"base_width", 8}, {"depth", 1}, {"time_dim", 8}}}}, "determinism");
    const auto corpus = workflows::make_corpus(small, 8, 12);
    auto a = workflows::train_fbdd(corpus, small);
    auto b = workflows::train_fbdd(corpus, small);
    const auto sched = a.models.schedule;
    ctx.note("fbdd training", a.foreground.losses == b.foreground.losses && a.background.losses == b.background.losses &&
                                  checkpoint_bytes(a.models.foreground->to_checkpoint(sched), ctx.work / "f0.lfck") ==
                                      checkpoint_bytes(b.models.foreground->to_checkpoint(sched), ctx.work / "f1.lfck"));
  }
  std::set<std::string> seen(ctx.determinism.begin(), ctx.determinism.end());
  std::string list;
  for (const auto& s : seen) list += (list.empty() ? "" : ", ") + s;
  std::string bad;
  for (const auto& s : ctx.nondeterminism) bad += (bad.empty() ? "" : ", ") + s;
  return {ctx.nondeterminism.empty(),
          "reproducible: " + list + (bad.empty() ? "" : "; NOT reproducible: " + bad)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layerforge acceptance checks"};
  std::string cli_path = "layerforge", work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--cli", cli_path, "Path to the layerforge executable");
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.work = fs::absolute(work);
  ctx.cli = fs::absolute(cli_path);
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"composition identities", composition_identities},
      {"haar correctness", haar_correctness},
      {"trimap oracle equivalence", trimap_oracle},
      {"pixel unshuffle round trip", unshuffle_round_trip},
      {"v-prediction algebra", v_algebra},
      {"fbdd smoke training", fbdd_smoke},
      {"fbdd degenerate alpha", fbdd_degenerate_alpha},
      {"hfa copy rule", hfa_copy_rule},
      {"ban loss ablation", ban_ablation},
      {"baseline solver oracle", solver_oracle},
      {"metric arithmetic", metric_arithmetic},
      {"fg statistic definitions", fg_statistics},
      {"desk pipeline", desk_pipeline},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %-28s %s  %s  [%.1f s]\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures;
}
