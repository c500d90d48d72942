#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "layerforge/baselines.hpp"
#include "layerforge/config.hpp"
#include "layerforge/corpus.hpp"
#include "layerforge/fbdd.hpp"
#include "layerforge/hfa.hpp"
#include "layerforge/pipeline.hpp"
#include "layerforge/report.hpp"

namespace layerforge::workflows {

using Logger = std::function<void(const std::string&)>;

// Settings objects built from the config sections.
dataset::CorpusOptions corpus_options(const Config& cfg);
dataset::ForegroundStyle foreground_style(const Config& cfg);
/// Imported when both asset directories are set, procedural otherwise. For procedural assets
/// dataset.full_cover_fraction of the foregrounds (chosen per seed) are enlarged to cover the frame.
std::unique_ptr<dataset::AssetSource> asset_source(const Config& cfg);
std::vector<dataset::DatasetSample> make_corpus(const Config& cfg, int count, std::uint64_t seed);

fbdd::DenoiserConfig denoiser_config(const Config& cfg);
fbdd::TrainConfig fbdd_train_config(const Config& cfg);
hfa::AlignNetConfig align_config(const Config& cfg);
hfa::HfaTrainConfig hfa_train_config(const Config& cfg);
baselines::SolverConfig solver_config(const Config& cfg);
pipeline::PipelineConfig pipeline_config(const Config& cfg);

struct FbddTraining {
  fbdd::FbddModels models;
  fbdd::TrainReport foreground;
  fbdd::TrainReport background;
  double autoencoder_psnr = 0.0;  // mean over the corpus composites
};

/// Fits the autoencoder on the corpus layers, then trains both branches.
FbddTraining train_fbdd(std::span<const dataset::DatasetSample> corpus, const Config& cfg,
                        const Logger& log = {});

struct HfaTraining {
  hfa::HfaModels models;
  hfa::HfaTrainReport fan;
  hfa::HfaTrainReport ban;
};

HfaTraining train_hfa(std::span<const dataset::DatasetSample> corpus, const hfa::FbddCache& cache,
                      const Config& cfg, const Logger& log = {});

/// Methods "fbdd+hfa" (needs hfa), "fbdd", "solver" and "solver+inpaint" on every sample, with
/// ground-truth alpha. extra holds the mean seam per method and the fg statistics set "gt".
report::Report evaluate(std::span<const dataset::DatasetSample> corpus, fbdd::FbddModels& fbdd_models,
                        hfa::HfaModels* hfa_models, const Config& cfg, std::uint64_t seed,
                        const Logger& log = {});

struct SignTest {
  int wins = 0;  // pairs where the first series is strictly lower
  int losses = 0;
  int ties = 0;
  double p_value = 1.0;  // one-sided binomial, ties dropped
};

SignTest sign_test(std::span<const double> first, std::span<const double> second);

struct AblationResult {
  std::vector<std::string> variants;          // full, mse, regionwise
  std::vector<std::vector<double>> seams;     // per variant, per evaluated sample
  std::vector<double> mean_seam;
  std::vector<hfa::HfaTrainReport> training;  // per variant
  SignTest full_vs_mse;
  SignTest full_vs_regionwise;
  int skipped = 0;  // held-out samples without a defined seam
  double seconds = 0.0;

  bool passed(double alpha = 0.05) const;
  nlohmann::json to_json() const;
};

/// FBDD trains on one corpus, the three BAN variants on a second, and seams are measured on
/// a held-out third. All three corpora come from the ablation seed.
AblationResult ban_loss_ablation(const Config& cfg, const Logger& log = {});

}  // namespace layerforge::workflows
