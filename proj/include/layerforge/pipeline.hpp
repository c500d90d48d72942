#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "layerforge/adapters.hpp"
#include "layerforge/baselines.hpp"
#include "layerforge/compose.hpp"
#include "layerforge/fbdd.hpp"
#include "layerforge/hfa.hpp"
#include "layerforge/manifest.hpp"
#include "layerforge/trimap.hpp"

namespace layerforge::pipeline {

struct PipelineRequest {
  std::string id = "request";
  std::string prompt;
  /// Word indices into the whitespace tokenization of the prompt, one set per foreground
  /// layer, front to back.
  std::vector<std::vector<int>> foreground_indices;
  std::optional<Image> input_image;  // bypasses generation
  std::optional<AlphaMask> alpha;    // oracle alpha for single-layer requests; bypasses stage 2
  std::uint64_t seed = 0;
};

/// {"id", "prompt", "foreground": [[i, ...], ...], "seed", "image", "alpha"}; image and alpha
/// paths are resolved against `base_dir`. Missing id defaults to "request_<index>".
PipelineRequest request_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {},
                                  std::size_t index = 0);
/// A JSON array of requests or an object with a "requests" array.
std::vector<PipelineRequest> load_requests(const std::filesystem::path& path);

std::vector<std::string> tokenize(const std::string& prompt);
/// Words at `indices`, joined by single spaces. ValueError for out-of-range or empty sets.
std::string foreground_text(const std::string& prompt, const std::vector<int>& indices);

enum class Layering { FbddHfa, Solver };
Layering layering_from_string(const std::string& s);

struct PipelineConfig {
  int resolution = 64;
  TrimapRadii trimap{.erode = 3, .dilate = 3};
  Layering layering = Layering::FbddHfa;
  baselines::SolverConfig solver;
  bool generate = true;        // stage 1 may call the generator
  bool estimate_alpha = true;  // stage 2 runs the detection and matting chain
  nlohmann::json config = nlohmann::json::object();  // recorded in manifests
};

struct Models {
  fbdd::FbddModels* fbdd = nullptr;
  hfa::HfaModels* hfa = nullptr;
};

struct StageRecord {
  std::string stage;
  std::string adapter;
  std::string note;
};

struct PipelineResult {
  LayerStack stack;
  Image input_composite;  // C_i
  std::vector<Image> sources;  // per foreground layer, the image it was split from
  std::vector<StageRecord> stages;
  std::vector<std::string> skipped;  // foreground prompts that matched no region
  double input_reconstruction_mad = 0.0;  // mean |recompose(stack) - C_i|
};

/// Validates the registry against the configured stages on construction (ConfigError).
class Pipeline {
 public:
  Pipeline(adapters::AdapterRegistry& registry, PipelineConfig cfg, Models models);

  /// Generation, foreground determination and layering for the first foreground index set.
  PipelineResult run(const PipelineRequest& req);
  /// Sequential peeling: each foreground set is determined and layered on the running
  /// background. A single set reduces to run().
  PipelineResult multi_layer_decompose(const PipelineRequest& req);

 private:
  Image stage_generate(const PipelineRequest& req, PipelineResult& out);
  std::optional<AlphaMask> stage_alpha(const Image& img, const std::string& term, PipelineResult& out);
  std::pair<Image, Image> stage_layers(const Image& img, const AlphaMask& alpha, std::uint64_t seed,
                                       PipelineResult& out);
  void finish(const PipelineRequest& req, PipelineResult& out);

  adapters::AdapterRegistry& registry_;
  PipelineConfig cfg_;
  Models models_;
};

}  // namespace layerforge::pipeline
