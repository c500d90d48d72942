#include "layerforge/report.hpp"

#include <cstdio>
#include <map>

#include "layerforge/util.hpp"

namespace layerforge::report {

using nlohmann::json;
using metrics::DisplayScale;

StatsRow summarize_fg_stats(const std::string& set, const std::vector<std::optional<metrics::FGStats>>& stats) {
  StatsRow row;
  row.set = set;
  row.samples = stats.size();
  std::size_t n = 0;
  for (const auto& s : stats) {
    if (!s) {
      ++row.empty;
      continue;
    }
    row.mean.occupancy_ratio += s->occupancy_ratio;
    row.mean.longest_span += s->longest_span;
    row.mean.vertical_center += s->vertical_center;
    row.mean.horizontal_center += s->horizontal_center;
    ++n;
  }
  if (n > 0) {
    row.mean.occupancy_ratio /= double(n);
    row.mean.longest_span /= double(n);
    row.mean.vertical_center /= double(n);
    row.mean.horizontal_center /= double(n);
  }
  return row;
}

namespace {

json errors_json(const metrics::LayerErrors& e) {
  json j = {{"mad", e.mad}, {"mse", e.mse}, {"sad", e.sad}, {"elements", e.elements}};
  if (e.perceptual) j["perceptual"] = *e.perceptual;
  return j;
}

json display_json(const metrics::LayerErrors& e) {
  json j = {{"mad", e.mad * DisplayScale::mad}, {"mse", e.mse * DisplayScale::mse},
            {"sad", e.sad * DisplayScale::sad}};
  if (e.perceptual) j["perceptual"] = *e.perceptual * DisplayScale::perceptual;
  return j;
}

}  // namespace

json Report::to_json() const {
  json rows = json::array();
  struct Acc {
    metrics::LayerErrors sum;
    double perceptual = 0;
    std::size_t n = 0, np = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  for (const auto& r : errors) {
    rows.push_back({{"sample", r.sample}, {"method", r.method}, {"layer", r.layer}, {"raw", errors_json(r.errors)}});
    Acc& a = groups[{r.method, r.layer}];
    a.sum.mad += r.errors.mad;
    a.sum.mse += r.errors.mse;
    a.sum.sad += r.errors.sad;
    a.sum.elements += r.errors.elements;
    if (r.errors.perceptual) a.perceptual += *r.errors.perceptual, ++a.np;
    ++a.n;
  }
  json table = json::array();
  for (const auto& [key, a] : groups) {
    metrics::LayerErrors mean;
    mean.mad = a.sum.mad / double(a.n);
    mean.mse = a.sum.mse / double(a.n);
    mean.sad = a.sum.sad / double(a.n);
    if (a.np == a.n) mean.perceptual = a.perceptual / double(a.n);
    table.push_back({{"method", key.first}, {"layer", key.second}, {"samples", a.n},
                     {"raw", errors_json(mean)}, {"display", display_json(mean)}});
  }
  json stats = json::array();
  for (const auto& s : fg_stats) {
    stats.push_back({{"set", s.set},
                     {"samples", s.samples},
                     {"empty", s.empty},
                     {"occupancy_ratio", s.mean.occupancy_ratio},
                     {"longest_span", s.mean.longest_span},
                     {"vertical_center", s.mean.vertical_center},
                     {"horizontal_center", s.mean.horizontal_center}});
  }
  return {{"schema", "layerforge.report/1"},
          {"display_scale", {{"mad", DisplayScale::mad}, {"mse", DisplayScale::mse},
                             {"perceptual", DisplayScale::perceptual}, {"sad", DisplayScale::sad}}},
          {"errors", rows},
          {"error_table", table},
          {"fg_stats", stats},
          {"extra", extra}};
}

std::string Report::errors_csv() const {
  std::string out = "sample,method,layer,mad,mse,sad,perceptual,mad_x1e3,mse_x1e3,sad_x1e-3,perceptual_x1e2\n";
  char buf[512];
  for (const auto& r : errors) {
    const auto& e = r.errors;
    const std::string p = e.perceptual ? std::to_string(*e.perceptual) : "";
    const std::string pd = e.perceptual ? std::to_string(*e.perceptual * DisplayScale::perceptual) : "";
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%.10g,%.10g,%.10g,%s,%.6f,%.6f,%.6f,%s\n", r.sample.c_str(),
                  r.method.c_str(), r.layer.c_str(), e.mad, e.mse, e.sad, p.c_str(), e.mad * DisplayScale::mad,
                  e.mse * DisplayScale::mse, e.sad * DisplayScale::sad, pd.c_str());
    out += buf;
  }
  return out;
}

void Report::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "report.json", to_json().dump(2) + "\n");
  write_text_file(dir / "errors.csv", errors_csv());
}

}  // namespace layerforge::report
