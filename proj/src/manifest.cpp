#include "layerforge/manifest.hpp"

#include <algorithm>
#include <cmath>

#include "layerforge/compose.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/png_io.hpp"
#include "layerforge/util.hpp"

namespace layerforge {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSchema = "layerforge.manifest/1";

Raster quantized(const Raster& r) {
  Raster q = r;
  for (double& v : q.values()) v = quantize16(v) / 65535.0;
  return q;
}

LayerStack quantized(const LayerStack& s) {
  LayerStack q = s;
  for (auto& l : q.layers) {
    l.image = Image(quantized(l.image.raster()));
    if (l.alpha) {
      AlphaMask a = *l.alpha;
      for (double& v : a.values()) v = quantize16(v) / 65535.0;
      l.alpha = std::move(a);
    }
  }
  q.composite = Image(quantized(q.composite.raster()));
  return q;
}

double max_error(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

std::string config_hash(const json& config) { return hex64(fnv1a64(config.dump())); }

json file_entry(const fs::path& dir, const std::string& name) {
  return {{"path", name}, {"fnv1a64", hex64(hash_file(dir / name))}};
}

fs::path checked(const fs::path& dir, const json& entry) {
  const std::string name = entry.at("path").get<std::string>();
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw IntegrityError(name + ": listed in the manifest but missing");
  if (hex64(hash_file(p)) != entry.at("fnv1a64").get<std::string>()) {
    throw IntegrityError(name + ": content hash does not match the manifest");
  }
  return p;
}

}  // namespace

void validate_stack(const LayerStack& stack) {
  if (stack.layers.empty()) throw ValueError("layer stack is empty");
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const LayerEntry& l = stack.layers[i];
    const bool last = i + 1 == stack.layers.size();
    if (last && (l.role != "bg" || l.alpha)) throw ValueError("layer stack must end with one background layer");
    if (!last && (l.role != "fg" || !l.alpha)) {
      throw ValueError("layer '" + l.name + "': every layer before the background must be a foreground with alpha");
    }
    if (l.image.channels() != 3 || !l.image.same_shape(stack.layers[0].image)) {
      throw ValueError("layer '" + l.name + "': image must be RGB and match the other layers");
    }
    if (l.alpha) require_same_size(l.image, *l.alpha, "layer " + l.name);
  }
}

Image recompose(const LayerStack& stack) {
  validate_stack(stack);
  Image x = stack.layers.back().image;
  for (auto it = stack.layers.rbegin() + 1; it != stack.layers.rend(); ++it) x = composite(it->image, x, *it->alpha);
  return x;
}

void persist(const LayerStack& stack, const fs::path& dir, const Tolerance& tol) {
  validate_stack(stack);
  if (!stack.composite.same_shape(stack.layers[0].image)) throw ValueError("persist: composite size mismatch");
  const LayerStack q = quantized(stack);
  const double err = max_error(recompose(q), q.composite);
  if (err > tol.per_pixel) {
    throw IntegrityError("persist: stack recomposes to the composite only within " + std::to_string(err) +
                         " (tolerance " + std::to_string(tol.per_pixel) + ")");
  }
  fs::create_directories(dir);
  json layers = json::array();
  for (std::size_t i = 0; i < q.layers.size(); ++i) {
    const LayerEntry& l = q.layers[i];
    const std::string stem = "layer_" + std::to_string(i) + "_" + l.role;
    write_png(dir / (stem + ".png"), l.image, BitDepth::Sixteen);
    json e = {{"role", l.role}, {"name", l.name}, {"image", file_entry(dir, stem + ".png")}};
    if (l.alpha) {
      write_alpha_png(dir / (stem + "_alpha.png"), *l.alpha, BitDepth::Sixteen);
      e["alpha"] = file_entry(dir, stem + "_alpha.png");
    }
    layers.push_back(std::move(e));
  }
  write_png(dir / "composite.png", q.composite, BitDepth::Sixteen);
  const json manifest = {{"schema", kSchema},
                         {"order", "front_to_back"},
                         {"layers", layers},
                         {"composite", file_entry(dir, "composite.png")},
                         {"recomposition_max_error", err},
                         {"provenance", q.provenance},
                         {"config", q.config},
                         {"config_hash", config_hash(q.config)}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

LayerStack load_stack(const fs::path& dir) {
  json m;
  try {
    m = json::parse(read_text_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IntegrityError("manifest.json: " + std::string(e.what()));
  }
  if (m.value("schema", "") != kSchema) throw IntegrityError("manifest.json: unsupported schema");
  if (config_hash(m.at("config")) != m.at("config_hash").get<std::string>()) {
    throw IntegrityError("manifest.json: config hash mismatch");
  }
  LayerStack s;
  s.provenance = m.at("provenance");
  s.config = m.at("config");
  for (const json& e : m.at("layers")) {
    LayerEntry l{e.at("role").get<std::string>(), e.at("name").get<std::string>(), {}, std::nullopt};
    l.image = read_png(checked(dir, e.at("image")));
    if (e.contains("alpha")) l.alpha = read_alpha_png(checked(dir, e.at("alpha")));
    s.layers.push_back(std::move(l));
  }
  s.composite = read_png(checked(dir, m.at("composite")));
  validate_stack(s);
  const double err = max_error(recompose(s), s.composite);
  if (err > 1.0 / 255.0) throw IntegrityError("manifest: stack no longer recomposes to composite.png");
  return s;
}

}  // namespace layerforge
