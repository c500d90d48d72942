#include "layerforge/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "layerforge/errors.hpp"
#include "layerforge/util.hpp"

namespace layerforge {

using nlohmann::json;

json Config::defaults() {
  return {
      {"dataset",
       {{"resolution", 64}, {"count", 32}, {"seed", 0}, {"workers", 1}, {"with_trimap", true},
        {"fg_min_scale", 0.2}, {"fg_max_scale", 0.8}, {"centered", false}, {"semi_transparent_probability", 0.5}, {"full_cover_fraction", 0.0}, {"trimap_min_radius", 1}, {"trimap_max_radius", 5},
        {"foreground_dir", ""}, {"background_dir", ""}}},
      {"autoencoder", {{"kind", "patch_pca"}, {"factor", 4}, {"latent_channels", 4}}},
      {"fbdd",
       {{"steps", 500}, {"background_steps", 0}, {"batch", 8}, {"lr", 1e-3}, {"clip_norm", 1.0}, {"seed", 0},
        {"diffusion_steps", 1000}, {"sampler_steps", 50}, {"base_width", 32}, {"depth", 2},
        {"time_dim", 64}, {"ema_decay", 0.999}}},
      {"hfa",
       {{"steps", 300}, {"batch", 4}, {"lr", 1e-3}, {"clip_norm", 1.0}, {"seed", 0}, {"base_width", 32},
        {"depth", 3}, {"lambda", 0.2}, {"hf_scales", {0, 1, 2}}, {"ban_loss", "full"}}},
      {"baselines",
       {{"smoothness", 1.0}, {"regularization", 1e-5}, {"anchor", 1e-8}, {"levels", 0},
        {"iterations", 2000}, {"tolerance", 1e-7}, {"relaxation", 1.5}, {"occlusion_threshold", 0.95}}},
      {"metrics", {{"fg_threshold", 0.5}, {"seam_distance", 3}}},
      {"pipeline",
       {{"mode", "desk"}, {"seed", 0}, {"models", ""}, {"resolution", 64}, {"layering", "fbdd_hfa"},
        {"trimap_erode", 3}, {"trimap_dilate", 3}}},
      {"ablation",
       {{"fbdd_samples", 256}, {"hfa_samples", 64}, {"eval_samples", 24}, {"seed", 7}, {"hfa_base_width", 16}}},
  };
}

Config Config::from_defaults() {
  Config c;
  c.data_ = defaults();
  return c;
}

std::optional<std::string> Config::process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

Config Config::load(const std::optional<std::filesystem::path>& path, const EnvLookup& env) {
  Config c = from_defaults();
  if (path) {
    json file;
    try {
      file = json::parse(read_text_file(*path));
    } catch (const json::exception& e) {
      throw ConfigError("config " + path->string() + ": " + e.what());
    }
    c.merge(file, path->string());
  }
  if (env) c.apply_env(env);
  return c;
}

void Config::merge(const json& overrides, const std::string& origin) {
  if (!overrides.is_object()) throw ConfigError(origin + ": top level must be an object");
  for (const auto& [name, values] : overrides.items()) {
    if (name == "schema") continue;
    if (!data_.contains(name)) throw ConfigError(origin + ": unknown section '" + name + "'");
    if (!values.is_object()) throw ConfigError(origin + ": section '" + name + "' must be an object");
    for (const auto& [key, v] : values.items()) {
      json& slot = data_[name];
      if (!slot.contains(key)) throw ConfigError(origin + ": unknown key '" + name + "." + key + "'");
      const json& cur = slot[key];
      const bool numeric = cur.is_number() && v.is_number();
      if (cur.type() != v.type() && !numeric) {
        throw ConfigError(origin + ": '" + name + "." + key + "' expects " + std::string(cur.type_name()) +
                          ", got " + v.type_name());
      }
      if (cur.is_number_integer() && !v.is_number_integer()) {
        throw ConfigError(origin + ": '" + name + "." + key + "' expects an integer");
      }
      slot[key] = v;
    }
  }
}

void Config::apply_env(const EnvLookup& env) {
  json overrides = json::object();
  for (const auto& [name, values] : data_.items()) {
    for (const auto& [key, cur] : values.items()) {
      std::string var = "LAYERFORGE_" + name + "_" + key;
      std::transform(var.begin(), var.end(), var.begin(), [](unsigned char ch) { return std::toupper(ch); });
      const auto text = env(var);
      if (!text) continue;
      json v;
      if (cur.is_string()) {
        v = *text;
      } else {
        try {
          v = json::parse(*text);
        } catch (const json::exception&) {
          throw ConfigError(var + ": cannot parse '" + *text + "'");
        }
      }
      overrides[name][key] = v;
    }
  }
  if (!overrides.empty()) merge(overrides, "environment");
}

const json& Config::section(const std::string& name) const {
  if (!data_.contains(name)) throw ConfigError("unknown config section '" + name + "'");
  return data_.at(name);
}

void Config::throw_bad_key(const std::string& section, const std::string& key, const char* what) {
  throw ConfigError("config key '" + section + "." + key + "': " + what);
}

std::uint64_t Config::hash() const { return fnv1a64(data_.dump()); }

}  // namespace layerforge
