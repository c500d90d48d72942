#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "layerforge/metrics.hpp"

namespace layerforge::report {

struct ErrorRow {
  std::string sample;
  std::string method;
  std::string layer;  // "fg" or "bg"
  metrics::LayerErrors errors;
};

struct StatsRow {
  std::string set;
  metrics::FGStats mean;
  std::size_t samples = 0;
  std::size_t empty = 0;  // samples without any foreground pixel, excluded from the mean
};

/// Mean of the defined entries.
StatsRow summarize_fg_stats(const std::string& set, const std::vector<std::optional<metrics::FGStats>>& stats);

struct Report {
  std::vector<ErrorRow> errors;
  std::vector<StatsRow> fg_stats;
  nlohmann::json extra = nlohmann::json::object();

  /// Raw per-sample values plus a display table averaged per (method, layer) with
  /// MAD, MSE x1e3, perceptual x1e2 and SAD x1e-3.
  nlohmann::json to_json() const;
  /// One line per sample row, raw and display-scaled columns.
  std::string errors_csv() const;
  void write(const std::filesystem::path& dir) const;
};

}  // namespace layerforge::report
