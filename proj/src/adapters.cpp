#include "layerforge/adapters.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <fcntl.h>

#include "layerforge/compose.hpp"
#include "layerforge/dataset.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/png_io.hpp"
#include "layerforge/util.hpp"

extern char** environ;

namespace layerforge::adapters {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::optional<BBox> bounding_box(const BinaryMask& mask) {
  BBox b{mask.height(), mask.width(), 0, 0};
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(y, x)) {
        b.y0 = std::min(b.y0, y);
        b.x0 = std::min(b.x0, x);
        b.y1 = std::max(b.y1, y + 1);
        b.x1 = std::max(b.x1, x + 1);
      }
  if (b.empty()) return std::nullopt;
  return b;
}

std::string to_string(Slot s) {
  switch (s) {
    case Slot::Generator: return "generator";
    case Slot::Detector: return "detector";
    case Slot::Segmenter: return "segmenter";
    case Slot::Matting: return "matting";
    case Slot::Transparency: return "transparency";
    case Slot::Inpainter: return "inpainter";
  }
  return "?";
}

Slot slot_from_string(const std::string& s) {
  for (Slot slot : kAllSlots)
    if (to_string(slot) == s) return slot;
  throw ConfigError("unknown adapter slot '" + s + "'");
}

Image composite_front_to_back(const std::vector<OracleObject>& objects, const Image& background) {
  Image x = background;
  for (auto it = objects.rbegin(); it != objects.rend(); ++it) x = composite(it->foreground, x, it->alpha);
  return x;
}

const OracleScene& OracleWorld::generate(const GeneratorRequest& req) {
  const int k = int(req.foreground_terms.size());
  if (k < 1 || k > 4) throw ValueError("oracle generator: between 1 and 4 foreground terms are supported");
  if (req.height != req.width) throw ValueError("oracle generator: square output only");
  const int res = req.height;
  OracleScene scene;
  scene.background = dataset::procedural_background(mix_seed(req.seed, 0xb9), {.resolution = res}).rgb;
  const int grid = k == 1 ? 1 : 2;
  const int cell = res / grid;
  for (int i = 0; i < k; ++i) {
    dataset::ForegroundStyle style;
    style.resolution = cell;
    if (k > 1) {
      style.centered = true;
      style.min_scale = 0.5;
      style.max_scale = 0.85;
    }
    const auto [rgb, a] = split_rgba(dataset::procedural_foreground(mix_seed(req.seed, i), style).rgba);
    OracleObject obj{req.foreground_terms[i], Image(res, res, 3), AlphaMask(res, res)};
    const int oy = (i / grid) * cell, ox = (i % grid) * cell;
    for (int y = 0; y < cell; ++y)
      for (int x = 0; x < cell; ++x) {
        obj.alpha.at(oy + y, ox + x) = a.at(y, x);
        for (int c = 0; c < 3; ++c) obj.foreground.at(oy + y, ox + x, c) = rgb.at(y, x, c);
      }
    scene.objects.push_back(std::move(obj));
  }
  scene.composite = composite_front_to_back(scene.objects, scene.background);
  scenes_.push_back(std::move(scene));
  return scenes_.back();
}

void OracleWorld::add(OracleScene scene) { scenes_.push_back(std::move(scene)); }

const OracleScene* OracleWorld::active() const { return scenes_.empty() ? nullptr : &scenes_.back(); }

const OracleObject* OracleWorld::find(const std::string& label) const {
  const OracleScene* s = active();
  if (!s) return nullptr;
  for (const auto& o : s->objects)
    if (o.label == label) return &o;
  return nullptr;
}

bool AdapterRegistry::has(Slot s) const {
  switch (s) {
    case Slot::Generator: return bool(generator);
    case Slot::Detector: return bool(detector);
    case Slot::Segmenter: return bool(segmenter);
    case Slot::Matting: return bool(matting);
    case Slot::Transparency: return bool(transparency);
    case Slot::Inpainter: return bool(inpainter);
  }
  return false;
}

std::string AdapterRegistry::identity(Slot s) const {
  switch (s) {
    case Slot::Generator: return generator.identity;
    case Slot::Detector: return detector.identity;
    case Slot::Segmenter: return segmenter.identity;
    case Slot::Matting: return matting.identity;
    case Slot::Transparency: return transparency.identity;
    case Slot::Inpainter: return inpainter.identity;
  }
  return {};
}

void AdapterRegistry::require(const std::vector<Slot>& slots, const std::string& purpose) const {
  std::string missing;
  for (Slot s : slots)
    if (!has(s)) missing += (missing.empty() ? "" : ", ") + to_string(s);
  if (!missing.empty()) {
    throw ConfigError(purpose + " requires adapters with no configured fallback: " + missing);
  }
}

json AdapterRegistry::identities() const {
  json j = json::object();
  for (Slot s : kAllSlots)
    if (has(s)) j[to_string(s)] = identity(s);
  return j;
}

int AdapterRegistry::calls(Slot s) const {
  auto it = calls_.find(s);
  return it == calls_.end() ? 0 : it->second;
}

namespace {

template <class Fn>
const Fn& need(const Adapter<Fn>& a, Slot s) {
  if (!a) throw ConfigError("adapter slot '" + to_string(s) + "' is not configured");
  return a.run;
}

}  // namespace

Image AdapterRegistry::generate(const GeneratorRequest& req) {
  count(Slot::Generator);
  return need(generator, Slot::Generator)(req);
}

std::optional<BBox> AdapterRegistry::detect(const Image& img, const std::string& prompt) {
  count(Slot::Detector);
  return need(detector, Slot::Detector)(img, prompt);
}

BinaryMask AdapterRegistry::segment(const Image& img, const BBox& box) {
  count(Slot::Segmenter);
  return need(segmenter, Slot::Segmenter)(img, box);
}

AlphaMask AdapterRegistry::matte(const Image& img, const Trimap& trimap) {
  count(Slot::Matting);
  return need(matting, Slot::Matting)(img, trimap);
}

BinaryMask AdapterRegistry::detect_transparency(const Image& img) {
  count(Slot::Transparency);
  return need(transparency, Slot::Transparency)(img);
}

Image AdapterRegistry::inpaint(const Image& img, const BinaryMask& mask) {
  count(Slot::Inpainter);
  return need(inpainter, Slot::Inpainter)(img, mask);
}

namespace {

const OracleScene& scene_of(const OracleWorld& w, const char* who) {
  const OracleScene* s = w.active();
  if (!s) throw AdapterError(std::string(who) + ": no ground-truth scene available");
  return *s;
}

// The scene object whose binarized alpha overlaps `region` the most.
const OracleObject& best_object(const OracleScene& scene, const std::function<bool(int, int)>& region,
                                const char* who) {
  const OracleObject* best = nullptr;
  std::size_t best_count = 0;
  for (const auto& o : scene.objects) {
    std::size_t n = 0;
    for (int y = 0; y < o.alpha.height(); ++y)
      for (int x = 0; x < o.alpha.width(); ++x)
        if (o.alpha.at(y, x) > 0.5 && region(y, x)) ++n;
    if (n > best_count) best = &o, best_count = n;
  }
  if (!best) throw AdapterError(std::string(who) + ": region matches no ground-truth object");
  return *best;
}

}  // namespace

Adapter<GeneratorFn> oracle_generator(std::shared_ptr<OracleWorld> world) {
  return {"oracle.procedural", [world](const GeneratorRequest& req) { return world->generate(req).composite; }};
}

Adapter<DetectorFn> oracle_detector(std::shared_ptr<OracleWorld> world) {
  return {"oracle.detector", [world](const Image&, const std::string& prompt) -> std::optional<BBox> {
            scene_of(*world, "oracle.detector");
            const OracleObject* o = world->find(prompt);
            if (!o) return std::nullopt;
            return bounding_box(to_binary(o->alpha, 0.5));
          }};
}

Adapter<SegmenterFn> oracle_segmenter(std::shared_ptr<OracleWorld> world) {
  return {"oracle.segmenter", [world](const Image& img, const BBox& box) {
            const OracleScene& scene = scene_of(*world, "oracle.segmenter");
            auto inside = [&](int y, int x) { return y >= box.y0 && y < box.y1 && x >= box.x0 && x < box.x1; };
            const OracleObject& o = best_object(scene, inside, "oracle.segmenter");
            BinaryMask m(img.height(), img.width());
            for (int y = box.y0; y < box.y1; ++y)
              for (int x = box.x0; x < box.x1; ++x) m.set(y, x, o.alpha.at(y, x) > 0.5);
            return m;
          }};
}

Adapter<MattingFn> oracle_matting(std::shared_ptr<OracleWorld> world) {
  return {"oracle.matting", [world](const Image&, const Trimap& trimap) {
            const OracleScene& scene = scene_of(*world, "oracle.matting");
            auto known = [&](int y, int x) { return trimap.at(y, x) > 0.0; };
            return best_object(scene, known, "oracle.matting").alpha;
          }};
}

Adapter<TransparencyFn> oracle_transparency(std::shared_ptr<OracleWorld> world) {
  return {"oracle.transparency", [world](const Image& img) {
            BinaryMask m(img.height(), img.width());
            const OracleScene* scene = world->active();
            if (!scene) return m;
            for (const auto& o : scene->objects)
              for (int y = 0; y < img.height(); ++y)
                for (int x = 0; x < img.width(); ++x) {
                  const double a = o.alpha.at(y, x);
                  if (a > 0.05 && a < 0.95) m.set(y, x, true);
                }
            return m;
          }};
}

Adapter<TransparencyFn> no_transparency() {
  return {"builtin.none", [](const Image& img) { return BinaryMask(img.height(), img.width()); }};
}

Adapter<InpainterFn> diffusion_inpainter() {
  const baselines::Inpainter d = baselines::diffusion_inpainter();
  return {d.name, d.run};
}

namespace {

int run_command(const std::vector<std::string>& command, const fs::path& dir) {
  std::vector<std::string> args = command;
  args.push_back(dir.string());
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  const std::string out = (dir / "stdout.txt").string(), err = (dir / "stderr.txt").string();
  posix_spawn_file_actions_addopen(&actions, 1, out.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(&actions, 2, err.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) return -1;
  int status = 0;
  if (waitpid(pid, &status, 0) < 0) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string identity_of(const ProcessSpec& spec) {
  return "process:" + (spec.command.empty() ? std::string("?") : spec.command.front());
}

}  // namespace

json run_process(const ProcessSpec& spec, const std::string& slot, const json& request,
                 const std::function<void(const fs::path&)>& write_inputs, fs::path* call_dir) {
  if (spec.command.empty()) throw ConfigError(slot + " process adapter: empty command");
  fs::create_directories(spec.work_dir);
  fs::path dir;
  for (int n = 0;; ++n) {
    dir = spec.work_dir / (slot + "-" + std::to_string(n));
    if (fs::create_directory(dir)) break;
  }
  if (call_dir) *call_dir = dir;
  json req = request;
  req["protocol"] = "layerforge.adapter/1";
  req["slot"] = slot;
  if (write_inputs) write_inputs(dir);
  write_text_file(dir / "request.json", req.dump(2));
  const std::string who = identity_of(spec) + " (" + slot + ", " + dir.string() + ")";
  const int code = run_command(spec.command, dir);
  if (code != 0) throw AdapterError(who + ": command exited with status " + std::to_string(code));
  json resp;
  try {
    resp = json::parse(read_text_file(dir / "response.json"));
  } catch (const std::exception& e) {
    throw AdapterError(who + ": unreadable response.json: " + e.what());
  }
  if (resp.value("status", "") != "ok") {
    throw AdapterError(who + ": " + resp.value("message", std::string("adapter reported failure")));
  }
  return resp;
}

namespace {

template <class T, class Read>
T read_output(const json& resp, const fs::path& dir, const std::string& key, const std::string& who, Read read) {
  if (!resp.contains(key) || !resp[key].is_string()) throw AdapterError(who + ": response lacks '" + key + "'");
  try {
    return read(dir / resp[key].get<std::string>());
  } catch (const std::exception& e) {
    throw AdapterError(who + ": " + e.what());
  }
}

BinaryMask mask_from(const AlphaMask& a) { return to_binary(a, 0.5); }

AlphaMask alpha_from(const BinaryMask& m) {
  AlphaMask a(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) a.at(y, x) = m.at(y, x) ? 1.0 : 0.0;
  return a;
}

void check_size(const std::string& who, int h, int w, int eh, int ew) {
  if (h != eh || w != ew) {
    throw AdapterError(who + ": output is " + std::to_string(h) + "x" + std::to_string(w) + ", expected " +
                       std::to_string(eh) + "x" + std::to_string(ew));
  }
}

}  // namespace

Adapter<GeneratorFn> process_generator(ProcessSpec spec) {
  return {identity_of(spec), [spec](const GeneratorRequest& r) {
            const json req = {{"prompt", r.prompt}, {"foreground_terms", r.foreground_terms},
                              {"height", r.height}, {"width", r.width}, {"seed", r.seed}};
            fs::path dir;
            const json resp = run_process(spec, "generator", req, {}, &dir);
            Image img = read_output<Image>(resp, dir, "image", identity_of(spec), read_png);
            check_size(identity_of(spec), img.height(), img.width(), r.height, r.width);
            if (img.channels() == 4) img = split_rgba(img).first;
            return img;
          }};
}

Adapter<DetectorFn> process_detector(ProcessSpec spec) {
  return {identity_of(spec), [spec](const Image& img, const std::string& prompt) -> std::optional<BBox> {
            fs::path dir;
            const json resp = run_process(spec, "detector", {{"image", "image.png"}, {"prompt", prompt}},
                                          [&](const fs::path& d) { write_png(d / "image.png", img, BitDepth::Sixteen); },
                                          &dir);
            if (!resp.contains("bbox") || resp["bbox"].is_null()) return std::nullopt;
            const auto v = resp["bbox"].get<std::vector<int>>();
            if (v.size() != 4) throw AdapterError(identity_of(spec) + ": bbox must have 4 entries");
            return BBox{v[0], v[1], v[2], v[3]};
          }};
}

Adapter<SegmenterFn> process_segmenter(ProcessSpec spec) {
  return {identity_of(spec), [spec](const Image& img, const BBox& b) {
            fs::path dir;
            const json resp = run_process(
                spec, "segmenter", {{"image", "image.png"}, {"bbox", {b.y0, b.x0, b.y1, b.x1}}},
                [&](const fs::path& d) { write_png(d / "image.png", img, BitDepth::Sixteen); }, &dir);
            const BinaryMask m = mask_from(read_output<AlphaMask>(resp, dir, "mask", identity_of(spec), read_alpha_png));
            check_size(identity_of(spec), m.height(), m.width(), img.height(), img.width());
            return m;
          }};
}

Adapter<MattingFn> process_matting(ProcessSpec spec) {
  return {identity_of(spec), [spec](const Image& img, const Trimap& trimap) {
            fs::path dir;
            const json resp = run_process(spec, "matting", {{"image", "image.png"}, {"trimap", "trimap.png"}},
                                          [&](const fs::path& d) {
                                            write_png(d / "image.png", img, BitDepth::Sixteen);
                                            write_trimap_png(d / "trimap.png", trimap);
                                          },
                                          &dir);
            AlphaMask a = read_output<AlphaMask>(resp, dir, "alpha", identity_of(spec), read_alpha_png);
            check_size(identity_of(spec), a.height(), a.width(), img.height(), img.width());
            return a;
          }};
}

Adapter<TransparencyFn> process_transparency(ProcessSpec spec) {
  return {identity_of(spec), [spec](const Image& img) {
            fs::path dir;
            const json resp = run_process(spec, "transparency", {{"image", "image.png"}},
                                          [&](const fs::path& d) { write_png(d / "image.png", img, BitDepth::Sixteen); },
                                          &dir);
            const BinaryMask m = mask_from(read_output<AlphaMask>(resp, dir, "mask", identity_of(spec), read_alpha_png));
            check_size(identity_of(spec), m.height(), m.width(), img.height(), img.width());
            return m;
          }};
}

Adapter<InpainterFn> process_inpainter(ProcessSpec spec) {
  return {identity_of(spec), [spec](const Image& img, const BinaryMask& mask) {
            fs::path dir;
            const json resp = run_process(spec, "inpainter", {{"image", "image.png"}, {"mask", "mask.png"}},
                                          [&](const fs::path& d) {
                                            write_png(d / "image.png", img, BitDepth::Sixteen);
                                            write_alpha_png(d / "mask.png", alpha_from(mask), BitDepth::Eight);
                                          },
                                          &dir);
            Image out = read_output<Image>(resp, dir, "image", identity_of(spec), read_png);
            check_size(identity_of(spec), out.height(), out.width(), img.height(), img.width());
            if (out.channels() == 4) out = split_rgba(out).first;
            return out;
          }};
}

Mode mode_from_string(const std::string& s) {
  if (s == "desk") return Mode::Desk;
  if (s == "full") return Mode::Full;
  throw ConfigError("unknown pipeline mode '" + s + "' (expected desk or full)");
}

AdapterRegistry make_registry(const json& spec, Mode mode, std::shared_ptr<OracleWorld> world,
                              const fs::path& work_dir) {
  if (!spec.is_null() && !spec.is_object()) throw ConfigError("adapter spec must be a JSON object");
  if (!world) world = std::make_shared<OracleWorld>();
  AdapterRegistry r;
  const json entries = spec.is_null() ? json::object() : spec;
  for (auto it = entries.begin(); it != entries.end(); ++it) slot_from_string(it.key());

  auto builtin = [&](Slot s, const std::string& name) {
    const std::string where = "adapter '" + to_string(s) + "'";
    if (name == "oracle") {
      switch (s) {
        case Slot::Generator: r.generator = oracle_generator(world); return;
        case Slot::Detector: r.detector = oracle_detector(world); return;
        case Slot::Segmenter: r.segmenter = oracle_segmenter(world); return;
        case Slot::Matting: r.matting = oracle_matting(world); return;
        case Slot::Transparency: r.transparency = oracle_transparency(world); return;
        case Slot::Inpainter: break;
      }
    } else if (name == "none" && s == Slot::Transparency) {
      r.transparency = no_transparency();
      return;
    } else if (name == "diffusion" && s == Slot::Inpainter) {
      r.inpainter = diffusion_inpainter();
      return;
    }
    throw ConfigError(where + ": unknown builtin '" + name + "'");
  };

  for (Slot s : kAllSlots) {
    const std::string key = to_string(s);
    if (entries.contains(key)) {
      const json& e = entries[key];
      if (e.is_string()) {
        builtin(s, e.get<std::string>());
        continue;
      }
      if (!e.is_object() || !e.contains("command") || !e["command"].is_array() || e["command"].empty()) {
        throw ConfigError("adapter '" + key + "': expected a builtin name or {\"command\": [...]}");
      }
      ProcessSpec p{e["command"].get<std::vector<std::string>>(), work_dir / "adapter_calls"};
      switch (s) {
        case Slot::Generator: r.generator = process_generator(p); break;
        case Slot::Detector: r.detector = process_detector(p); break;
        case Slot::Segmenter: r.segmenter = process_segmenter(p); break;
        case Slot::Matting: r.matting = process_matting(p); break;
        case Slot::Transparency: r.transparency = process_transparency(p); break;
        case Slot::Inpainter: r.inpainter = process_inpainter(p); break;
      }
      continue;
    }
    if (s == Slot::Inpainter) {
      builtin(s, "diffusion");
    } else if (mode == Mode::Desk) {
      builtin(s, "oracle");
    } else if (s == Slot::Transparency) {
      builtin(s, "none");
    }
  }
  return r;
}

}  // namespace layerforge::adapters
