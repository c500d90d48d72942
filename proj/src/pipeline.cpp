#include "layerforge/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "layerforge/baselines.hpp"
#include "layerforge/dataset.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/png_io.hpp"
#include "layerforge/util.hpp"

namespace layerforge::pipeline {

using json = nlohmann::json;
using adapters::Slot;

PipelineRequest request_from_json(const json& j, const std::filesystem::path& base_dir, std::size_t index) {
  if (!j.is_object()) throw ValueError("request " + std::to_string(index) + ": expected an object");
  PipelineRequest r;
  try {
    r.id = j.value("id", "request_" + std::to_string(index));
    r.prompt = j.at("prompt").get<std::string>();
    r.foreground_indices = j.at("foreground").get<std::vector<std::vector<int>>>();
    r.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("image")) r.input_image = read_png(base_dir / j.at("image").get<std::string>());
    if (j.contains("alpha")) r.alpha = read_alpha_png(base_dir / j.at("alpha").get<std::string>());
  } catch (const json::exception& e) {
    throw ValueError("request " + std::to_string(index) + ": " + e.what());
  }
  if (r.foreground_indices.empty()) throw ValueError("request '" + r.id + "': no foreground index sets");
  for (const auto& set : r.foreground_indices) foreground_text(r.prompt, set);
  return r;
}

std::vector<PipelineRequest> load_requests(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ValueError(path.string() + ": " + e.what());
  }
  if (doc.is_object() && doc.contains("requests")) doc = doc.at("requests");
  if (!doc.is_array()) throw ValueError(path.string() + ": expected an array of requests");
  std::vector<PipelineRequest> out;
  for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(request_from_json(doc[i], path.parent_path(), i));
  return out;
}

std::vector<std::string> tokenize(const std::string& prompt) {
  std::istringstream in(prompt);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

std::string foreground_text(const std::string& prompt, const std::vector<int>& indices) {
  const auto words = tokenize(prompt);
  if (indices.empty()) throw ValueError("foreground index set is empty");
  std::string out;
  for (int i : indices) {
    if (i < 0 || i >= int(words.size())) {
      throw ValueError("foreground index " + std::to_string(i) + " is outside the prompt's " +
                       std::to_string(words.size()) + " words");
    }
    out += (out.empty() ? "" : " ") + words[i];
  }
  return out;
}

Layering layering_from_string(const std::string& s) {
  if (s == "fbdd_hfa") return Layering::FbddHfa;
  if (s == "solver") return Layering::Solver;
  throw ConfigError("unknown layering method '" + s + "' (expected fbdd_hfa or solver)");
}

namespace {

template <class F>
auto in_stage(const std::string& stage, const std::string& adapter, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw AdapterError("stage '" + stage + "' [" + adapter + "]: " + e.what());
  }
}

double mean_abs(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.values()[i] - b.values()[i]);
  return s / double(a.size());
}

}  // namespace

Pipeline::Pipeline(adapters::AdapterRegistry& registry, PipelineConfig cfg, Models models)
    : registry_(registry), cfg_(std::move(cfg)), models_(models) {
  std::vector<Slot> need;
  if (cfg_.generate) need.push_back(Slot::Generator);
  if (cfg_.estimate_alpha) {
    for (Slot s : {Slot::Detector, Slot::Segmenter, Slot::Transparency, Slot::Matting}) need.push_back(s);
  }
  registry_.require(need, "pipeline");
  if (cfg_.layering == Layering::FbddHfa && (!models_.fbdd || !models_.hfa)) {
    throw ConfigError("pipeline: fbdd_hfa layering needs trained FBDD and HFA models");
  }
}

Image Pipeline::stage_generate(const PipelineRequest& req, PipelineResult& out) {
  if (req.input_image) {
    out.stages.push_back({"generation", "input", "input image supplied; generator bypassed"});
    const Image& in = *req.input_image;
    if (in.channels() != 3) throw ShapeError("pipeline: input image must be RGB");
    if (in.height() == cfg_.resolution && in.width() == cfg_.resolution) return in;
    return dataset::standardize(in, cfg_.resolution, cfg_.resolution);
  }
  if (!cfg_.generate) throw ConfigError("pipeline: no input image and generation is disabled");
  adapters::GeneratorRequest g{req.prompt, {}, cfg_.resolution, cfg_.resolution, mix_seed(req.seed, 0x6e)};
  for (const auto& set : req.foreground_indices) g.foreground_terms.push_back(foreground_text(req.prompt, set));
  const std::string who = registry_.identity(Slot::Generator);
  Image img = in_stage("generation", who, [&] { return registry_.generate(g); });
  if (img.height() != cfg_.resolution || img.width() != cfg_.resolution || img.channels() != 3) {
    throw AdapterError("stage 'generation' [" + who + "]: output has the wrong shape");
  }
  out.stages.push_back({"generation", who, ""});
  return img;
}

std::optional<AlphaMask> Pipeline::stage_alpha(const Image& img, const std::string& term, PipelineResult& out) {
  const std::string stage = "foreground determination";
  const auto box = in_stage(stage, registry_.identity(Slot::Detector), [&] { return registry_.detect(img, term); });
  if (!box || box->empty()) {
    out.skipped.push_back(term);
    out.stages.push_back({stage, registry_.identity(Slot::Detector), "no region for '" + term + "'; skipped"});
    return std::nullopt;
  }
  const BinaryMask mask =
      in_stage(stage, registry_.identity(Slot::Segmenter), [&] { return registry_.segment(img, *box); });
  AlphaMask coarse(mask.height(), mask.width());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) coarse.at(y, x) = mask.at(y, x) ? 1.0 : 0.0;
  Trimap trimap = make_trimap(coarse, cfg_.trimap.erode, cfg_.trimap.dilate, cfg_.trimap.fg_threshold);
  const BinaryMask transparent = in_stage(stage, registry_.identity(Slot::Transparency),
                                          [&] { return registry_.detect_transparency(img); });
  trimap = refine_trimap_transparency(trimap, transparent);
  AlphaMask alpha = in_stage(stage, registry_.identity(Slot::Matting), [&] { return registry_.matte(img, trimap); });
  require_same_size(alpha, img, "matting output");
  out.stages.push_back({stage, registry_.identity(Slot::Matting), term});
  return alpha;
}

std::pair<Image, Image> Pipeline::stage_layers(const Image& img, const AlphaMask& alpha, std::uint64_t seed,
                                               PipelineResult& out) {
  if (cfg_.layering == Layering::Solver) {
    const auto r = in_stage("layering", "builtin.solver", [&] { return baselines::smooth_color_estimate(img, alpha, cfg_.solver); });
    out.stages.push_back({"layering", "builtin.solver", r.converged ? "" : "iteration limit reached"});
    return {region_copy(r.foreground, img, alpha, LayerTarget::Foreground),
            region_copy(r.background, img, alpha, LayerTarget::Background)};
  }
  const LayeredImage l = in_stage("layering", "fbdd+hfa", [&] {
    const fbdd::Decomposition coarse = fbdd::decompose(*models_.fbdd, img, alpha, seed);
    return hfa::refine(*models_.hfa, img, alpha, coarse);
  });
  out.stages.push_back({"layering", "fbdd+hfa", ""});
  return {l.foreground, l.background};
}

void Pipeline::finish(const PipelineRequest& req, PipelineResult& out) {
  out.stack.composite = recompose(out.stack);
  out.input_reconstruction_mad = mean_abs(out.stack.composite, out.input_composite);
  json stages = json::array();
  for (const auto& s : out.stages) stages.push_back({{"stage", s.stage}, {"adapter", s.adapter}, {"note", s.note}});
  std::vector<std::string> terms;
  for (const auto& set : req.foreground_indices) terms.push_back(foreground_text(req.prompt, set));
  out.stack.provenance = {{"request", req.id},
                          {"prompt", req.prompt},
                          {"foreground_terms", terms},
                          {"seed", req.seed},
                          {"adapters", registry_.identities()},
                          {"stages", stages},
                          {"skipped", out.skipped},
                          {"input_reconstruction_mad", out.input_reconstruction_mad}};
  out.stack.config = cfg_.config;
}

PipelineResult Pipeline::run(const PipelineRequest& req) {
  if (req.foreground_indices.empty() && !req.alpha) throw ValueError("pipeline: no foreground index set");
  if (!req.input_image && req.prompt.empty()) throw ValueError("pipeline: a prompt or an input image is required");
  PipelineResult out;
  out.input_composite = stage_generate(req, out);
  std::optional<AlphaMask> alpha;
  std::string name = "foreground";
  if (!req.foreground_indices.empty()) name = foreground_text(req.prompt, req.foreground_indices.front());
  if (req.alpha) {
    require_same_size(*req.alpha, out.input_composite, "request alpha");
    alpha = *req.alpha;
    out.stages.push_back({"foreground determination", "request", "alpha supplied"});
  } else {
    if (!cfg_.estimate_alpha) throw ConfigError("pipeline: alpha estimation is disabled and no alpha was supplied");
    alpha = stage_alpha(out.input_composite, name, out);
  }
  if (alpha) {
    auto [f, b] = stage_layers(out.input_composite, *alpha, mix_seed(req.seed, 1), out);
    out.sources.push_back(out.input_composite);
    out.stack.layers.push_back({"fg", name, std::move(f), *alpha});
    out.stack.layers.push_back({"bg", "background", std::move(b), std::nullopt});
  } else {
    out.stack.layers.push_back({"bg", "background", out.input_composite, std::nullopt});
  }
  finish(req, out);
  return out;
}

PipelineResult Pipeline::multi_layer_decompose(const PipelineRequest& req) {
  if (req.foreground_indices.size() <= 1) return run(req);
  if (req.alpha) throw ValueError("multi_layer_decompose: a single request alpha cannot drive several layers");
  if (!cfg_.estimate_alpha) throw ConfigError("multi_layer_decompose: alpha estimation is disabled");
  PipelineResult out;
  out.input_composite = stage_generate(req, out);
  Image running = out.input_composite;
  for (std::size_t k = 0; k < req.foreground_indices.size(); ++k) {
    const std::string term = foreground_text(req.prompt, req.foreground_indices[k]);
    const auto alpha = stage_alpha(running, term, out);
    if (!alpha) continue;
    auto [f, b] = stage_layers(running, *alpha, mix_seed(req.seed, 1 + k), out);
    out.sources.push_back(running);
    out.stack.layers.push_back({"fg", term, std::move(f), *alpha});
    running = std::move(b);
  }
  out.stack.layers.push_back({"bg", "background", std::move(running), std::nullopt});
  finish(req, out);
  return out;
}

}  // namespace layerforge::pipeline
