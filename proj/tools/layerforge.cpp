#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "layerforge/adapters.hpp"
#include "layerforge/config.hpp"
#include "layerforge/corpus.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/manifest.hpp"
#include "layerforge/pipeline.hpp"
#include "layerforge/png_io.hpp"
#include "layerforge/util.hpp"
#include "layerforge/workflows.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace layerforge;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string adapters;
};

Config load_config(const Globals& g) {
  Config cfg = Config::load(g.config.empty() ? std::nullopt : std::optional<fs::path>(g.config));
  if (g.seed) {
    json o;
    for (const char* section : {"dataset", "fbdd", "hfa", "pipeline", "ablation"}) o[section]["seed"] = *g.seed;
    cfg.merge(o, "--seed");
  }
  return cfg;
}

void log_line(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

std::vector<dataset::DatasetSample> corpus_for(const Config& cfg, const std::string& dir) {
  if (!dir.empty()) return dataset::load_corpus(dir);
  return workflows::make_corpus(cfg, cfg.get<int>("dataset", "count"), cfg.get<std::uint64_t>("dataset", "seed"));
}

json train_report(const std::vector<double>& losses, double initial, double running) {
  return {{"losses", losses}, {"initial_loss", initial}, {"running_mean", running}};
}

struct ModelSet {
  std::optional<fbdd::FbddModels> fbdd;
  std::optional<hfa::HfaModels> hfa;
};

ModelSet load_models(const std::string& fbdd_dir, const std::string& hfa_dir) {
  ModelSet m;
  if (!fbdd_dir.empty()) m.fbdd = fbdd::FbddModels::load(fbdd_dir);
  if (!hfa_dir.empty()) m.hfa = hfa::HfaModels::load(hfa_dir);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layerforge: layer decomposition of composited images"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Overrides every section seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--adapters", g.adapters, "JSON adapter spec")->check(CLI::ExistingFile);

  int count = 0;
  std::string corpus_dir, fbdd_dir, hfa_dir, models_dir, image_path, alpha_path, requests_path, prompt;
  std::vector<std::string> fg_sets;

  auto* dataset_cmd = app.add_subcommand("dataset", "Synthetic corpus tools");
  dataset_cmd->require_subcommand(1);
  auto* build_cmd = dataset_cmd->add_subcommand("build", "Write a procedural or imported corpus to --out");
  build_cmd->add_option("--count", count, "Number of samples (default dataset.count)");

  auto* train_cmd = app.add_subcommand("train", "Train model components");
  train_cmd->require_subcommand(1);
  auto* train_fbdd_cmd = train_cmd->add_subcommand("fbdd", "Fit the autoencoder and both denoiser branches");
  train_fbdd_cmd->add_option("--corpus", corpus_dir, "Corpus directory (default: generated from config)");
  auto* train_hfa_cmd = train_cmd->add_subcommand("hfa", "Train FAN and BAN on frozen FBDD outputs");
  train_hfa_cmd->add_option("--corpus", corpus_dir, "Corpus directory (default: generated from config)");
  train_hfa_cmd->add_option("--fbdd", fbdd_dir, "FBDD model directory")->required();

  auto* decompose_cmd = app.add_subcommand("decompose", "Split an image into layers given its alpha");
  decompose_cmd->add_option("--image", image_path, "RGB PNG")->required()->check(CLI::ExistingFile);
  decompose_cmd->add_option("--alpha", alpha_path, "Alpha PNG")->required()->check(CLI::ExistingFile);
  decompose_cmd->add_option("--fbdd", fbdd_dir, "FBDD model directory");
  decompose_cmd->add_option("--hfa", hfa_dir, "HFA model directory");

  auto* pipeline_cmd = app.add_subcommand("pipeline", "Prompt-to-layers pipeline");
  pipeline_cmd->require_subcommand(1);
  auto* run_cmd = pipeline_cmd->add_subcommand("run", "Run requests and persist one layer stack each");
  run_cmd->add_option("--requests", requests_path, "JSON file of requests")->check(CLI::ExistingFile);
  run_cmd->add_option("--prompt", prompt, "Prompt for a single request");
  run_cmd->add_option("--fg", fg_sets, "Comma-separated word indices, one option per layer front to back");
  run_cmd->add_option("--image", image_path, "Input image; bypasses generation")->check(CLI::ExistingFile);
  run_cmd->add_option("--models", models_dir, "Directory with fbdd/ and hfa/ (default pipeline.models)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Layer errors, fg statistics and seams on a corpus");
  eval_cmd->add_option("--corpus", corpus_dir, "Corpus directory (default: generated from config)");
  eval_cmd->add_option("--fbdd", fbdd_dir, "FBDD model directory")->required();
  eval_cmd->add_option("--hfa", hfa_dir, "HFA model directory");

  auto* ablate_cmd = app.add_subcommand("ablate", "Ablations");
  ablate_cmd->require_subcommand(1);
  auto* ban_cmd = ablate_cmd->add_subcommand("ban-loss", "Full BAN loss against MSE-only and region-wise variants");

  CLI11_PARSE(app, argc, argv);

  try {
    const Config cfg = load_config(g);
    const fs::path out = g.out;

    if (*build_cmd) {
      fs::create_directories(out);
      const auto source = workflows::asset_source(cfg);
      dataset::DirectorySink sink(out);
      const int n = count > 0 ? count : cfg.get<int>("dataset", "count");
      const auto m = dataset::build_corpus(n, cfg.get<std::uint64_t>("dataset", "seed"), sink,
                                           workflows::corpus_options(cfg), source.get());
      std::printf("wrote %zu samples to %s (manifest %s)\n", m.entries.size(), out.c_str(), hex64(m.hash()).c_str());
    } else if (*train_fbdd_cmd) {
      const auto corpus = corpus_for(cfg, corpus_dir);
      auto run = workflows::train_fbdd(corpus, cfg, log_line);
      run.models.save(out);
      const json rep = {
          {"autoencoder_psnr", run.autoencoder_psnr},
          {"foreground", train_report(run.foreground.losses, run.foreground.initial_loss(),
                                      run.foreground.running_mean(50))},
          {"background", train_report(run.background.losses, run.background.initial_loss(),
                                      run.background.running_mean(50))},
          {"config_hash", hex64(cfg.hash())}};
      write_text_file(out / "train_report.json", rep.dump(2));
      std::printf("saved FBDD models to %s\n", out.c_str());
    } else if (*train_hfa_cmd) {
      const auto corpus = corpus_for(cfg, corpus_dir);
      auto fbdd_models = fbdd::FbddModels::load(fbdd_dir);
      const auto cache = hfa::build_fbdd_cache(fbdd_models, corpus, cfg.get<std::uint64_t>("hfa", "seed"));
      auto run = workflows::train_hfa(corpus, cache, cfg, log_line);
      run.models.save(out);
      const json rep = {{"fan", train_report(run.fan.losses, run.fan.initial_loss(), run.fan.running_mean(50))},
                        {"ban", train_report(run.ban.losses, run.ban.initial_loss(), run.ban.running_mean(50))},
                        {"ban_hf_terms", run.ban.hf_terms},
                        {"config_hash", hex64(cfg.hash())}};
      write_text_file(out / "train_report.json", rep.dump(2));
      std::printf("saved HFA models to %s\n", out.c_str());
    } else if (*decompose_cmd) {
      auto models = load_models(fbdd_dir, hfa_dir);
      auto pc = workflows::pipeline_config(cfg);
      pc.generate = false;
      pc.estimate_alpha = false;
      auto world = std::make_shared<adapters::OracleWorld>();
      auto registry = adapters::make_registry(json::object(), adapters::Mode::Full, world, out / "adapter_calls");
      pipeline::Pipeline p(registry, pc,
                           {models.fbdd ? &*models.fbdd : nullptr, models.hfa ? &*models.hfa : nullptr});
      pipeline::PipelineRequest req;
      req.id = fs::path(image_path).stem().string();
      req.prompt = "foreground";
      req.foreground_indices = {{0}};
      req.input_image = read_png(image_path);
      req.alpha = read_alpha_png(alpha_path);
      req.seed = cfg.get<std::uint64_t>("pipeline", "seed");
      const auto r = p.run(req);
      persist(r.stack, out);
      std::printf("wrote %zu layers to %s\n", r.stack.layers.size(), out.c_str());
    } else if (*run_cmd) {
      std::vector<pipeline::PipelineRequest> requests;
      if (!requests_path.empty()) {
        requests = pipeline::load_requests(requests_path);
      } else {
        if (prompt.empty() || fg_sets.empty()) throw ConfigError("pipeline run: give --requests or --prompt with --fg");
        json j = {{"id", "request"}, {"prompt", prompt}, {"seed", cfg.get<std::uint64_t>("pipeline", "seed")}};
        json sets = json::array();
        for (const auto& s : fg_sets) {
          json set = json::array();
          for (const auto& tok : CLI::detail::split(s, ',')) set.push_back(std::stoi(tok));
          sets.push_back(set);
        }
        j["foreground"] = sets;
        requests.push_back(pipeline::request_from_json(j));
        if (!image_path.empty()) requests.back().input_image = read_png(image_path);
      }
      const std::string dir = models_dir.empty() ? cfg.get<std::string>("pipeline", "models") : models_dir;
      const auto pc = workflows::pipeline_config(cfg);
      ModelSet models;
      if (pc.layering == pipeline::Layering::FbddHfa) {
        if (dir.empty()) throw ConfigError("pipeline run: fbdd_hfa layering needs --models or pipeline.models");
        models = load_models((fs::path(dir) / "fbdd").string(), (fs::path(dir) / "hfa").string());
      }
      const json spec = g.adapters.empty() ? json::object() : json::parse(read_text_file(g.adapters));
      auto world = std::make_shared<adapters::OracleWorld>();
      auto registry = adapters::make_registry(spec, adapters::mode_from_string(cfg.get<std::string>("pipeline", "mode")),
                                              world, out / "adapter_calls");
      pipeline::Pipeline p(registry, pc, {models.fbdd ? &*models.fbdd : nullptr, models.hfa ? &*models.hfa : nullptr});
      for (const auto& req : requests) {
        const auto r = p.multi_layer_decompose(req);
        persist(r.stack, out / req.id);
        std::printf("%s: %zu layers", req.id.c_str(), r.stack.layers.size());
        for (const auto& s : r.skipped) std::printf(", skipped '%s'", s.c_str());
        std::printf("\n");
      }
    } else if (*eval_cmd) {
      const auto corpus = corpus_for(cfg, corpus_dir);
      auto models = load_models(fbdd_dir, hfa_dir);
      const auto rep = workflows::evaluate(corpus, *models.fbdd, models.hfa ? &*models.hfa : nullptr, cfg,
                                           cfg.get<std::uint64_t>("pipeline", "seed"), log_line);
      rep.write(out);
      std::printf("wrote report to %s\n", out.c_str());
    } else if (*ban_cmd) {
      const auto r = workflows::ban_loss_ablation(cfg, log_line);
      fs::create_directories(out);
      write_text_file(out / "ablation_ban_loss.json", r.to_json().dump(2));
      for (std::size_t i = 0; i < r.variants.size(); ++i) {
        std::printf("%-10s mean seam %.6f\n", r.variants[i].c_str(), r.mean_seam[i]);
      }
      std::printf("full < mse: %d/%d p=%.4g; full < regionwise: %d/%d p=%.4g\n", r.full_vs_mse.wins,
                  r.full_vs_mse.wins + r.full_vs_mse.losses, r.full_vs_mse.p_value, r.full_vs_regionwise.wins,
                  r.full_vs_regionwise.wins + r.full_vs_regionwise.losses, r.full_vs_regionwise.p_value);
      return r.passed() ? 0 : 3;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
