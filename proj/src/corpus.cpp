#include "layerforge/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <thread>

#include "json.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/png_io.hpp"
#include "layerforge/util.hpp"

namespace layerforge::dataset {

using nlohmann::json;
namespace fs = std::filesystem;

std::string CorpusManifest::to_json() const {
  json j;
  j["schema"] = "layerforge.corpus/1";
  j["seed"] = seed;
  j["resolution"] = resolution;
  j["count"] = entries.size();
  json samples = json::array();
  for (const auto& e : entries) {
    samples.push_back({{"id", e.id}, {"seed", e.seed}, {"paths", e.paths},
                       {"resolution", e.resolution}});
  }
  j["samples"] = std::move(samples);
  return j.dump(2) + "\n";
}

CorpusManifest CorpusManifest::from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("schema", "") != "layerforge.corpus/1") {
    throw IntegrityError("unknown corpus manifest schema");
  }
  CorpusManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.resolution = j.at("resolution").get<int>();
  for (const auto& s : j.at("samples")) {
    ManifestEntry e;
    e.id = s.at("id").get<std::string>();
    e.seed = s.at("seed").get<std::uint64_t>();
    e.paths = s.at("paths").get<std::map<std::string, std::string>>();
    e.resolution = s.at("resolution").get<int>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::uint64_t CorpusManifest::hash() const { return fnv1a64(to_json()); }

DirectorySink::DirectorySink(fs::path root) : root_(std::move(root)) {
  for (const char* sub : {"composite", "alpha", "fg", "bg", "trimap"}) {
    std::error_code ec;
    fs::create_directories(root_ / sub, ec);
    if (ec) throw IoError("cannot create " + (root_ / sub).string() + ": " + ec.message());
  }
}

std::map<std::string, std::string> DirectorySink::write(const DatasetSample& sample,
                                                        const std::string& id) {
  std::map<std::string, std::string> paths{
      {"composite", "composite/" + id + ".png"},
      {"alpha", "alpha/" + id + ".png"},
      {"fg", "fg/" + id + ".png"},
      {"bg", "bg/" + id + ".png"},
  };
  write_png(root_ / paths["composite"], sample.composite, BitDepth::Sixteen);
  write_alpha_png(root_ / paths["alpha"], sample.alpha, BitDepth::Sixteen);
  write_png(root_ / paths["fg"], sample.foreground, BitDepth::Sixteen);
  write_png(root_ / paths["bg"], sample.background, BitDepth::Sixteen);
  if (sample.trimap) {
    paths["trimap"] = "trimap/" + id + ".png";
    write_trimap_png(root_ / paths["trimap"], *sample.trimap);
  }
  return paths;
}

void DirectorySink::finish(const CorpusManifest& manifest) {
  write_text_file(root_ / "manifest.json", manifest.to_json());
}

std::map<std::string, std::string> MemorySink::write(const DatasetSample& sample,
                                                     const std::string& id) {
  std::lock_guard lock(mutex_);
  samples[id] = sample;
  return {{"composite", "memory:" + id}};
}

ProceduralSource::ProceduralSource(int resolution) {
  fg_.resolution = resolution;
  bg_.resolution = resolution;
}

ProceduralSource::ProceduralSource(ForegroundStyle fg, BackgroundStyle bg)
    : fg_(fg), bg_(bg) {}

ForegroundAsset ProceduralSource::foreground(std::uint64_t seed) const {
  return procedural_foreground(seed, fg_);
}

BackgroundAsset ProceduralSource::background(std::uint64_t seed) const {
  return procedural_background(seed, bg_);
}

namespace {

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no PNG files in " + dir.string());
  return out;
}

ForegroundAsset load_foreground(const fs::path& path, int resolution) {
  const Image img = read_png(path);
  if (img.channels() != 4) throw ShapeError(path.string() + ": foreground must be RGBA");
  return {standardize(img, resolution, resolution), path.filename().string()};
}

BackgroundAsset load_background(const fs::path& path, int resolution) {
  Image img = read_png(path);
  if (img.channels() == 4) img = img.channel_range(0, 3);
  if (img.channels() == 1) {
    Raster rgb(img.height(), img.width(), 3);
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
    img = Image(std::move(rgb));
  }
  return {standardize(img, resolution, resolution), path.filename().string()};
}

}  // namespace

ImportedSource::ImportedSource(const fs::path& foreground_dir, const fs::path& background_dir,
                               int resolution)
    : fg_paths_(list_pngs(foreground_dir)),
      bg_paths_(list_pngs(background_dir)),
      resolution_(resolution) {}

ForegroundAsset ImportedSource::foreground(std::uint64_t seed) const {
  return load_foreground(fg_paths_[mix_seed(seed, 0x1f) % fg_paths_.size()], resolution_);
}

BackgroundAsset ImportedSource::background(std::uint64_t seed) const {
  return load_background(bg_paths_[mix_seed(seed, 0x1b) % bg_paths_.size()], resolution_);
}

std::vector<ForegroundAsset> import_foregrounds(const fs::path& dir, int resolution) {
  std::vector<ForegroundAsset> out;
  for (const auto& p : list_pngs(dir)) out.push_back(load_foreground(p, resolution));
  return out;
}

std::vector<BackgroundAsset> import_backgrounds(const fs::path& dir, int resolution) {
  std::vector<BackgroundAsset> out;
  for (const auto& p : list_pngs(dir)) out.push_back(load_background(p, resolution));
  return out;
}

namespace {

DatasetSample make_sample(int index, std::uint64_t seed, const CorpusOptions& options,
                          const AssetSource& source) {
  const std::uint64_t child = mix_seed(seed, std::uint64_t(index));
  return synthesize_sample(source.foreground(mix_seed(child, 1)),
                           source.background(mix_seed(child, 2)), child, options.with_trimap,
                           options.trimap);
}

std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

template <class Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  workers = std::clamp(workers, 1, std::max(n, 1));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

CorpusManifest build_corpus(int n, std::uint64_t seed, SampleSink& sink,
                            const CorpusOptions& options, const AssetSource* source) {
  if (n < 1) throw ValueError("build_corpus: n must be >= 1");
  const ProceduralSource fallback(options.resolution);
  const AssetSource& assets = source ? *source : fallback;
  CorpusManifest manifest;
  manifest.seed = seed;
  manifest.resolution = options.resolution;
  manifest.entries.resize(n);
  parallel_for(n, options.workers, [&](int i) {
    const DatasetSample sample = make_sample(i, seed, options, assets);
    if (recomposition_error(sample) > 1e-6) {
      throw IntegrityError("sample " + std::to_string(i) + " fails recomposition");
    }
    ManifestEntry& e = manifest.entries[i];
    e.id = sample_id(i);
    e.seed = sample.seed;
    e.resolution = sample.composite.height();
    try {
      e.paths = sink.write(sample, e.id);
    } catch (const std::exception& ex) {
      throw IoError("sample " + std::to_string(i) + ": " + ex.what());
    }
  });
  sink.finish(manifest);
  return manifest;
}

std::vector<DatasetSample> generate_samples(int n, std::uint64_t seed,
                                            const CorpusOptions& options,
                                            const AssetSource* source) {
  if (n < 1) throw ValueError("generate_samples: n must be >= 1");
  const ProceduralSource fallback(options.resolution);
  const AssetSource& assets = source ? *source : fallback;
  std::vector<DatasetSample> out(n);
  parallel_for(n, options.workers, [&](int i) { out[i] = make_sample(i, seed, options, assets); });
  return out;
}

std::vector<DatasetSample> load_corpus(const fs::path& root, double tolerance) {
  const CorpusManifest m = CorpusManifest::from_json(read_text_file(root / "manifest.json"));
  std::vector<DatasetSample> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    DatasetSample s;
    s.composite = read_png(root / e.paths.at("composite"));
    s.alpha = read_alpha_png(root / e.paths.at("alpha"));
    s.foreground = read_png(root / e.paths.at("fg"));
    s.background = read_png(root / e.paths.at("bg"));
    if (auto it = e.paths.find("trimap"); it != e.paths.end()) {
      s.trimap = read_trimap_png(root / it->second);
    }
    s.seed = e.seed;
    if (recomposition_error(s) > tolerance) {
      throw IntegrityError("corpus sample " + e.id + " fails recomposition check");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace layerforge::dataset
