#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "layerforge/nn/unet.hpp"

namespace layerforge {

struct NamedBlob {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

/// Self-describing weight container: JSON metadata plus named double blobs.
///
/// File layout: "LFCK" | u32 version | u64 header bytes | header JSON | blob payload
/// (little-endian doubles, in header order). The header records each blob's name, shape
/// and element count plus an FNV-1a hash of the payload.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedBlob> blobs;

  const NamedBlob& blob(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IoError for unreadable or truncated files and IntegrityError on a payload hash mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<NamedBlob> blobs_from(const std::vector<nn::Parameter*>& params,
                                  const std::string& prefix = "");
/// Copies blobs into parameters, matching by prefixed name and shape.
void restore_parameters(const Checkpoint& ckpt, const std::vector<nn::Parameter*>& params,
                        const std::string& prefix = "");

nlohmann::json to_json(const nn::UNetConfig& cfg);
nn::UNetConfig unet_config_from_json(const nlohmann::json& j);

}  // namespace layerforge
