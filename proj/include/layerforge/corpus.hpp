#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "layerforge/dataset.hpp"

namespace layerforge::dataset {

struct ManifestEntry {
  std::string id;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> paths;  // composite, alpha, fg, bg, trimap
  int resolution = 0;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  int resolution = 0;
  std::vector<ManifestEntry> entries;

  std::string to_json() const;
  static CorpusManifest from_json(const std::string& text);
  /// Hash of the canonical JSON serialisation.
  std::uint64_t hash() const;
};

/// Where built samples go. Implementations must tolerate concurrent write() calls.
class SampleSink {
 public:
  virtual ~SampleSink() = default;
  virtual std::map<std::string, std::string> write(const DatasetSample& sample,
                                                   const std::string& id) = 0;
  virtual void finish(const CorpusManifest&) {}
};

/// `<root>/{composite,alpha,fg,bg,trimap}/<id>.png` (16-bit, trimap 8-bit) + manifest.json.
class DirectorySink : public SampleSink {
 public:
  explicit DirectorySink(std::filesystem::path root);
  std::map<std::string, std::string> write(const DatasetSample& sample,
                                           const std::string& id) override;
  void finish(const CorpusManifest& manifest) override;

 private:
  std::filesystem::path root_;
};

class MemorySink : public SampleSink {
 public:
  std::map<std::string, std::string> write(const DatasetSample& sample,
                                           const std::string& id) override;
  std::map<std::string, DatasetSample> samples;

 private:
  std::mutex mutex_;
};

/// Supplies assets for a sample seed. The procedural source is the desk-scale default.
class AssetSource {
 public:
  virtual ~AssetSource() = default;
  virtual ForegroundAsset foreground(std::uint64_t seed) const = 0;
  virtual BackgroundAsset background(std::uint64_t seed) const = 0;
};

class ProceduralSource : public AssetSource {
 public:
  explicit ProceduralSource(int resolution);
  ProceduralSource(ForegroundStyle fg, BackgroundStyle bg);
  ForegroundAsset foreground(std::uint64_t seed) const override;
  BackgroundAsset background(std::uint64_t seed) const override;

 private:
  ForegroundStyle fg_;
  BackgroundStyle bg_;
};

/// External RGBA foreground and RGB background directories, paired at random per seed and
/// standardized to `resolution`.
class ImportedSource : public AssetSource {
 public:
  ImportedSource(const std::filesystem::path& foreground_dir,
                 const std::filesystem::path& background_dir, int resolution);
  ForegroundAsset foreground(std::uint64_t seed) const override;
  BackgroundAsset background(std::uint64_t seed) const override;
  std::size_t foreground_count() const { return fg_paths_.size(); }
  std::size_t background_count() const { return bg_paths_.size(); }

 private:
  std::vector<std::filesystem::path> fg_paths_;
  std::vector<std::filesystem::path> bg_paths_;
  int resolution_;
};

std::vector<ForegroundAsset> import_foregrounds(const std::filesystem::path& dir, int resolution);
std::vector<BackgroundAsset> import_backgrounds(const std::filesystem::path& dir, int resolution);

struct CorpusOptions {
  int resolution = 64;
  bool with_trimap = true;
  MattingTrimapConfig trimap;
  int workers = 1;
};

/// Builds n samples; sample i uses seed mix_seed(seed, i), so any worker count gives the
/// same bytes. Sink failures are rethrown as IoError naming the sample index.
CorpusManifest build_corpus(int n, std::uint64_t seed, SampleSink& sink,
                            const CorpusOptions& options = {},
                            const AssetSource* source = nullptr);

/// In-memory samples for training; same seeds as build_corpus.
std::vector<DatasetSample> generate_samples(int n, std::uint64_t seed,
                                            const CorpusOptions& options = {},
                                            const AssetSource* source = nullptr);

/// Reads a corpus written by DirectorySink and checks every sample's recomposition.
std::vector<DatasetSample> load_corpus(const std::filesystem::path& root,
                                       double tolerance = 1.0 / 255.0);

}  // namespace layerforge::dataset
