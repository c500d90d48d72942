#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "layerforge/baselines.hpp"
#include "layerforge/image.hpp"

namespace layerforge::adapters {

/// Half-open pixel box [y0, y1) x [x0, x1).
struct BBox {
  int y0 = 0;
  int x0 = 0;
  int y1 = 0;
  int x1 = 0;

  bool empty() const { return y1 <= y0 || x1 <= x0; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

std::optional<BBox> bounding_box(const BinaryMask& mask);

struct GeneratorRequest {
  std::string prompt;
  std::vector<std::string> foreground_terms;  // front to back
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
};

using GeneratorFn = std::function<Image(const GeneratorRequest&)>;
using DetectorFn = std::function<std::optional<BBox>(const Image&, const std::string& prompt)>;
using SegmenterFn = std::function<BinaryMask(const Image&, const BBox&)>;
using MattingFn = std::function<AlphaMask(const Image&, const Trimap&)>;
using TransparencyFn = std::function<BinaryMask(const Image&)>;
using InpainterFn = std::function<Image(const Image&, const BinaryMask&)>;

enum class Slot { Generator, Detector, Segmenter, Matting, Transparency, Inpainter };
std::string to_string(Slot s);
Slot slot_from_string(const std::string& s);
inline constexpr Slot kAllSlots[] = {Slot::Generator, Slot::Detector,     Slot::Segmenter,
                                     Slot::Matting,   Slot::Transparency, Slot::Inpainter};

template <class Fn>
struct Adapter {
  std::string identity;  // empty: slot unfilled
  Fn run;

  explicit operator bool() const { return !identity.empty() && bool(run); }
};

/// Ground truth for synthetic scenes, shared by the oracle adapters.
struct OracleObject {
  std::string label;
  Image foreground;
  AlphaMask alpha;
};

struct OracleScene {
  Image composite;
  Image background;
  std::vector<OracleObject> objects;  // front to back
};

class OracleWorld {
 public:
  /// Up to four procedural objects, one per term, placed in disjoint grid cells over a
  /// procedural background and composited back to front.
  const OracleScene& generate(const GeneratorRequest& req);
  void add(OracleScene scene);

  /// The most recently generated or added scene.
  const OracleScene* active() const;
  const OracleObject* find(const std::string& label) const;

 private:
  std::vector<OracleScene> scenes_;
};

/// Composites `objects` (front to back) over `background`.
Image composite_front_to_back(const std::vector<OracleObject>& objects, const Image& background);

class AdapterRegistry {
 public:
  Adapter<GeneratorFn> generator;
  Adapter<DetectorFn> detector;
  Adapter<SegmenterFn> segmenter;
  Adapter<MattingFn> matting;
  Adapter<TransparencyFn> transparency;
  Adapter<InpainterFn> inpainter;

  bool has(Slot s) const;
  std::string identity(Slot s) const;
  /// Throws ConfigError naming every missing slot.
  void require(const std::vector<Slot>& slots, const std::string& purpose) const;
  nlohmann::json identities() const;

  /// Invocation counts per slot, incremented by the call wrappers below.
  int calls(Slot s) const;

  Image generate(const GeneratorRequest& req);
  std::optional<BBox> detect(const Image& img, const std::string& prompt);
  BinaryMask segment(const Image& img, const BBox& box);
  AlphaMask matte(const Image& img, const Trimap& trimap);
  BinaryMask detect_transparency(const Image& img);
  Image inpaint(const Image& img, const BinaryMask& mask);

 private:
  void count(Slot s) { ++calls_[s]; }
  std::map<Slot, int> calls_;
};

/// Oracle adapters answer from the world's active scene.
Adapter<GeneratorFn> oracle_generator(std::shared_ptr<OracleWorld> world);
Adapter<DetectorFn> oracle_detector(std::shared_ptr<OracleWorld> world);
Adapter<SegmenterFn> oracle_segmenter(std::shared_ptr<OracleWorld> world);
Adapter<MattingFn> oracle_matting(std::shared_ptr<OracleWorld> world);
Adapter<TransparencyFn> oracle_transparency(std::shared_ptr<OracleWorld> world);
/// No transparent regions.
Adapter<TransparencyFn> no_transparency();
Adapter<InpainterFn> diffusion_inpainter();

/// External process adapter. For every call a fresh directory receives request.json plus
/// input PNGs (16-bit); the command runs with that directory as its last argument and must
/// leave response.json there:
///   {"status": "ok", ...slot outputs...} or {"status": "error", "message": "..."}
/// Slot outputs: generator/inpainter {"image": png}, detector {"bbox": [y0,x0,y1,x1] | null},
/// segmenter/transparency {"mask": png}, matting {"alpha": png}. Paths are relative to the directory.
struct ProcessSpec {
  std::vector<std::string> command;
  std::filesystem::path work_dir;
};

nlohmann::json run_process(const ProcessSpec& spec, const std::string& slot, const nlohmann::json& request,
                           const std::function<void(const std::filesystem::path&)>& write_inputs,
                           std::filesystem::path* call_dir = nullptr);

Adapter<GeneratorFn> process_generator(ProcessSpec spec);
Adapter<DetectorFn> process_detector(ProcessSpec spec);
Adapter<SegmenterFn> process_segmenter(ProcessSpec spec);
Adapter<MattingFn> process_matting(ProcessSpec spec);
Adapter<TransparencyFn> process_transparency(ProcessSpec spec);
Adapter<InpainterFn> process_inpainter(ProcessSpec spec);

enum class Mode { Desk, Full };
Mode mode_from_string(const std::string& s);

/// Builds a registry from an adapter spec, e.g.
///   {"matting": {"command": ["python3", "matte.py"]}, "detector": "oracle"}
/// String values name builtins: "oracle", "none" (transparency), "diffusion" (inpainter).
/// Desk mode fills every unspecified slot with its oracle; full mode leaves generator,
/// detector, segmenter and matting empty and uses "none" and "diffusion" for the rest.
AdapterRegistry make_registry(const nlohmann::json& spec, Mode mode, std::shared_ptr<OracleWorld> world,
                              const std::filesystem::path& work_dir);

}  // namespace layerforge::adapters
