#include "layerforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "layerforge/errors.hpp"
#include "layerforge/util.hpp"

namespace layerforge {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payload is little-endian");

namespace {

constexpr char kMagic[4] = {'L', 'F', 'C', 'K'};

std::uint64_t payload_hash(const std::vector<NamedBlob>& blobs) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& b : blobs) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(b.values.data());
    h = fnv1a64({bytes, b.values.size() * sizeof(double)}, h);
  }
  return h;
}

std::string shape_text(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

}  // namespace

const NamedBlob& Checkpoint::blob(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return b;
  throw ValueError("checkpoint has no blob '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json header;
  header["meta"] = ckpt.meta;
  json list = json::array();
  for (const auto& b : ckpt.blobs) {
    list.push_back({{"name", b.name}, {"shape", b.shape}, {"count", b.values.size()}});
  }
  header["blobs"] = std::move(list);
  header["payload_fnv1a64"] = hex64(payload_hash(ckpt.blobs));
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::uint32_t version = Checkpoint::kVersion;
  const std::uint64_t header_size = text.size();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&header_size), sizeof header_size);
  out.write(text.data(), std::streamsize(text.size()));
  for (const auto& b : ckpt.blobs) {
    out.write(reinterpret_cast<const char*>(b.values.data()),
              std::streamsize(b.values.size() * sizeof(double)));
  }
  if (!out) throw IoError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t header_size = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&header_size), sizeof header_size);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError(path.string() + " is not a layerforge checkpoint");
  }
  if (version != Checkpoint::kVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::string text(header_size, '\0');
  in.read(text.data(), std::streamsize(header_size));
  if (!in) throw IoError(path.string() + ": truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad header: " + e.what());
  }
  Checkpoint ckpt;
  ckpt.meta = header.at("meta");
  for (const auto& entry : header.at("blobs")) {
    NamedBlob b;
    b.name = entry.at("name").get<std::string>();
    b.shape = entry.at("shape").get<std::vector<int>>();
    b.values.resize(entry.at("count").get<std::size_t>());
    in.read(reinterpret_cast<char*>(b.values.data()),
            std::streamsize(b.values.size() * sizeof(double)));
    if (!in) throw IoError(path.string() + ": truncated blob '" + b.name + "'");
    ckpt.blobs.push_back(std::move(b));
  }
  if (hex64(payload_hash(ckpt.blobs)) != header.at("payload_fnv1a64").get<std::string>()) {
    throw IntegrityError(path.string() + ": payload hash mismatch");
  }
  return ckpt;
}

std::vector<NamedBlob> blobs_from(const std::vector<nn::Parameter*>& params,
                                  const std::string& prefix) {
  std::vector<NamedBlob> out;
  out.reserve(params.size());
  for (const nn::Parameter* p : params) out.push_back({prefix + p->name, p->shape, {p->value.begin(), p->value.end()}});
  return out;
}

void restore_parameters(const Checkpoint& ckpt, const std::vector<nn::Parameter*>& params,
                        const std::string& prefix) {
  for (nn::Parameter* p : params) {
    const NamedBlob& b = ckpt.blob(prefix + p->name);
    if (b.shape != p->shape) {
      throw ShapeError("checkpoint blob '" + b.name + "' has shape " + shape_text(b.shape) +
                       ", model expects " + shape_text(p->shape));
    }
    p->value.assign(b.values.begin(), b.values.end());
  }
}

json to_json(const nn::UNetConfig& cfg) {
  return {{"in_channels", cfg.in_channels}, {"out_channels", cfg.out_channels},
          {"base_width", cfg.base_width},   {"depth", cfg.depth},
          {"time_dim", cfg.time_dim},       {"max_width", cfg.max_width},
          {"head_gain", cfg.head_gain},     {"init_seed", cfg.init_seed},
          {"input_skip", cfg.input_skip}};
}

nn::UNetConfig unet_config_from_json(const json& j) {
  nn::UNetConfig cfg;
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.out_channels = j.at("out_channels").get<int>();
  cfg.base_width = j.at("base_width").get<int>();
  cfg.depth = j.at("depth").get<int>();
  cfg.time_dim = j.at("time_dim").get<int>();
  cfg.max_width = j.at("max_width").get<int>();
  cfg.head_gain = j.at("head_gain").get<double>();
  cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  cfg.input_skip = j.value("input_skip", false);
  return cfg;
}

}  // namespace layerforge
