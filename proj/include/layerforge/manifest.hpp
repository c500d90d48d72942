#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "layerforge/image.hpp"

namespace layerforge {

struct LayerEntry {
  std::string role;  // "fg" or "bg"
  std::string name;
  Image image;
  std::optional<AlphaMask> alpha;  // absent for the background
};

/// Layers front to back; the last entry is the single background.
struct LayerStack {
  std::vector<LayerEntry> layers;
  Image composite;
  nlohmann::json provenance = nlohmann::json::object();  // seeds, adapter identities, notes
  nlohmann::json config = nlohmann::json::object();       // full configuration in effect
};

/// Back-to-front over-compositing of the stack.
Image recompose(const LayerStack& stack);

/// Throws ValueError on an empty stack, a misplaced or missing background, or size mismatches.
void validate_stack(const LayerStack& stack);

struct Tolerance {
  double per_pixel = 1.0 / 255.0;
};

/// Writes manifest.json plus 16-bit PNGs into `dir`. Rasters are quantized first, and the
/// write is refused (IntegrityError) when the quantized stack does not recompose to the
/// quantized composite within the tolerance.
void persist(const LayerStack& stack, const std::filesystem::path& dir, const Tolerance& tol = {});

/// Verifies every file hash and the config hash; IntegrityError names the offending file.
LayerStack load_stack(const std::filesystem::path& dir);

}  // namespace layerforge
