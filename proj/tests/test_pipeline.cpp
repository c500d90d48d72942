#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "layerforge/adapters.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/manifest.hpp"
#include "layerforge/pipeline.hpp"
#include "layerforge/png_io.hpp"
#include "layerforge/util.hpp"

using namespace layerforge;
using namespace layerforge::adapters;
using namespace layerforge::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("layerforge_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path script(const fs::path& dir, const std::string& name, const std::string& body) {
  const fs::path p = dir / name;
  std::ofstream(p) << "#!/bin/sh\n" << body << "\n";
  fs::permissions(p, fs::perms::owner_all);
  return p;
}

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

LayerStack two_layer_stack(std::mt19937_64& rng) {
  LayerStack s;
  const AlphaMask a = testing::random_alpha(rng, 8, 8);
  s.layers.push_back({"fg", "cat", testing::random_image(rng, 8, 8, 3), a});
  s.layers.push_back({"bg", "background", testing::random_image(rng, 8, 8, 3), std::nullopt});
  s.composite = recompose(s);
  s.config = {{"pipeline", {{"seed", 3}}}};
  s.provenance = {{"seed", 3}};
  return s;
}

PipelineConfig solver_config(int res) {
  PipelineConfig c;
  c.resolution = res;
  c.layering = Layering::Solver;
  return c;
}

}  // namespace

TEST_CASE("prompt tokenization") {
  CHECK(tokenize("  a red   apple ") == std::vector<std::string>{"a", "red", "apple"});
  CHECK(foreground_text("a red apple on a table", {1, 2}) == "red apple");
  CHECK_THROWS_AS(foreground_text("a red apple", {3}), ValueError);
  CHECK_THROWS_AS(foreground_text("a red apple", {}), ValueError);
}

TEST_CASE("manifest persist and load") {
  std::mt19937_64 rng(1);
  const LayerStack s = two_layer_stack(rng);
  const fs::path a = temp_dir("manifest_a"), b = temp_dir("manifest_b");
  persist(s, a);
  const LayerStack loaded = load_stack(a);
  CHECK(loaded.layers.size() == 2);
  CHECK(loaded.layers[0].name == "cat");
  persist(loaded, b);
  for (const auto& entry : fs::directory_iterator(a)) {
    CHECK(bytes_of(entry.path()) == bytes_of(b / entry.path().filename()));
  }
  // Lossless 16-bit storage.
  for (std::size_t i = 0; i < s.composite.size(); ++i)
    CHECK(std::abs(loaded.composite.values()[i] - s.composite.values()[i]) <= 0.5 / 65535.0 + 1e-12);

  // Corrupted alpha file.
  write_alpha_png(a / "layer_0_fg_alpha.png", AlphaMask(8, 8, 0.25), BitDepth::Sixteen);
  try {
    load_stack(a);
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find("layer_0_fg_alpha.png") != std::string::npos);
  }

  // Edited configuration.
  std::string text = read_text_file(b / "manifest.json");
  text.replace(text.find("\"seed\": 3"), 9, "\"seed\": 4");
  write_text_file(b / "manifest.json", text);
  CHECK_THROWS_AS(load_stack(b), IntegrityError);

  CHECK_THROWS_AS(persist(LayerStack{}, temp_dir("manifest_empty")), ValueError);
  LayerStack broken = s;
  broken.composite = Image(8, 8, 3, 0.0);
  broken.composite.at(0, 0, 0) = 1.0;
  broken.layers[1].image = Image(8, 8, 3, 1.0);
  broken.layers[0].alpha = AlphaMask(8, 8, 0.0);
  CHECK_THROWS_AS(persist(broken, temp_dir("manifest_broken")), IntegrityError);
  LayerStack no_bg = s;
  no_bg.layers.pop_back();
  CHECK_THROWS_AS(persist(no_bg, temp_dir("manifest_nobg")), ValueError);
}

TEST_CASE("registry construction and requirements") {
  const fs::path work = temp_dir("registry");
  AdapterRegistry desk = make_registry(nullptr, Mode::Desk, nullptr, work);
  for (Slot s : kAllSlots) CHECK(desk.has(s));
  CHECK(desk.identity(Slot::Matting) == "oracle.matting");
  CHECK(desk.identity(Slot::Inpainter) == "builtin.diffusion");

  AdapterRegistry full = make_registry(nlohmann::json::object(), Mode::Full, nullptr, work);
  CHECK_FALSE(full.has(Slot::Matting));
  CHECK(full.identity(Slot::Transparency) == "builtin.none");
  try {
    Pipeline p(full, solver_config(32), {});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("matting") != std::string::npos);
  }

  AdapterRegistry partial = make_registry({{"detector", "oracle"}, {"segmenter", "oracle"}, {"generator", "oracle"}},
                                          Mode::Full, nullptr, work);
  CHECK_THROWS_AS(Pipeline(partial, solver_config(32), {}), ConfigError);
  CHECK_THROWS_AS(make_registry({{"telepathy", "oracle"}}, Mode::Desk, nullptr, work), ConfigError);
  CHECK_THROWS_AS(make_registry({{"matting", "magic"}}, Mode::Desk, nullptr, work), ConfigError);
  CHECK_THROWS_AS(make_registry({{"matting", {{"command", nlohmann::json::array()}}}}, Mode::Desk, nullptr, work),
                  ConfigError);
  CHECK_THROWS_AS(Pipeline(desk, PipelineConfig{}, {}), ConfigError);
}

TEST_CASE("process adapter protocol") {
  const fs::path work = temp_dir("process");
  const fs::path ok = script(work, "matte.sh", R"(printf '{"status": "ok", "alpha": "trimap.png"}' > "$1/response.json")");
  const fs::path err = script(work, "fail.sh", R"(printf '{"status": "error", "message": "model offline"}' > "$1/response.json")");
  const fs::path crash = script(work, "crash.sh", "exit 3");

  Trimap t(8, 8, Trimap::kUnknown);
  t.set(0, 0, Trimap::kForeground);
  const Image img(8, 8, 3, 0.5);
  auto matting = process_matting({{ok.string()}, work / "calls"});
  const AlphaMask a = matting.run(img, t);
  CHECK(a.at(0, 0) == 1.0);
  CHECK(a.at(4, 4) == doctest::Approx(128.0 / 255.0));
  CHECK(fs::exists(work / "calls" / "matting-0" / "request.json"));
  const auto req = nlohmann::json::parse(read_text_file(work / "calls" / "matting-0" / "request.json"));
  CHECK(req["protocol"] == "layerforge.adapter/1");
  CHECK(req["trimap"] == "trimap.png");

  try {
    process_matting({{err.string()}, work / "calls"}).run(img, t);
    FAIL("expected AdapterError");
  } catch (const AdapterError& e) {
    CHECK(std::string(e.what()).find("model offline") != std::string::npos);
  }
  CHECK_THROWS_AS(process_matting({{crash.string()}, work / "calls"}).run(img, t), AdapterError);

  const fs::path det = script(work, "detect.sh", R"(printf '{"status": "ok", "bbox": [1, 2, 5, 6]}' > "$1/response.json")");
  CHECK(*process_detector({{det.string()}, work / "calls"}).run(img, "cat") == BBox{1, 2, 5, 6});
  const fs::path none = script(work, "none.sh", R"(printf '{"status": "ok", "bbox": null}' > "$1/response.json")");
  CHECK_FALSE(process_detector({{none.string()}, work / "calls"}).run(img, "cat").has_value());
}

TEST_CASE("oracle world scenes") {
  OracleWorld w;
  const OracleScene& s = w.generate({"a cat and a dog", {"cat", "dog"}, 32, 32, 4});
  REQUIRE(s.objects.size() == 2);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) CHECK(s.objects[0].alpha.at(y, x) * s.objects[1].alpha.at(y, x) == 0.0);
  CHECK(w.find("dog") == &w.active()->objects[1]);
  CHECK(w.find("bird") == nullptr);
  OracleWorld w2;
  CHECK(w2.generate({"a cat and a dog", {"cat", "dog"}, 32, 32, 4}).composite == s.composite);
}

TEST_CASE("desk pipeline with oracle adapters") {
  const fs::path work = temp_dir("pipeline_desk");
  auto world = std::make_shared<OracleWorld>();
  AdapterRegistry reg = make_registry(nullptr, Mode::Desk, world, work);
  Pipeline p(reg, solver_config(32), {});

  PipelineRequest req{.id = "r0", .prompt = "a red apple", .foreground_indices = {{1, 2}}, .seed = 5};
  const PipelineResult r = p.run(req);
  CHECK(reg.calls(Slot::Generator) == 1);
  CHECK(reg.calls(Slot::Matting) == 1);
  REQUIRE(r.stack.layers.size() == 2);
  CHECK(r.stack.layers[0].name == "red apple");
  const AlphaMask& a = *r.stack.layers[0].alpha;
  CHECK(a == world->find("red apple")->alpha);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      if (a.at(y, x) >= 1.0 - kVisibleEpsilon)
        for (int c = 0; c < 3; ++c) CHECK(r.stack.layers[0].image.at(y, x, c) == r.input_composite.at(y, x, c));
      if (a.at(y, x) <= kVisibleEpsilon)
        for (int c = 0; c < 3; ++c) CHECK(r.stack.layers[1].image.at(y, x, c) == r.input_composite.at(y, x, c));
    }
  persist(r.stack, work / "out");
  CHECK(load_stack(work / "out").layers.size() == 2);

  // Determinism and input bypass.
  const PipelineResult again = p.run(req);
  CHECK(again.stack.composite == r.stack.composite);
  PipelineRequest real = req;
  real.input_image = r.input_composite;
  const PipelineResult bypass = p.run(real);
  CHECK(reg.calls(Slot::Generator) == 2);
  CHECK(bypass.stack.layers[1].image == r.stack.layers[1].image);

  // Oracle alpha skips stage 2.
  PipelineRequest with_alpha = real;
  with_alpha.alpha = a;
  const int mattes = reg.calls(Slot::Matting);
  p.run(with_alpha);
  CHECK(reg.calls(Slot::Matting) == mattes);
}

TEST_CASE("multi-layer decomposition") {
  const fs::path work = temp_dir("pipeline_multi");
  auto world = std::make_shared<OracleWorld>();
  AdapterRegistry reg = make_registry(nullptr, Mode::Desk, world, work);
  Pipeline p(reg, solver_config(32), {});
  PipelineRequest req{.id = "m0", .prompt = "cat and dog", .foreground_indices = {{0}, {2}}, .seed = 2};
  const PipelineResult r = p.multi_layer_decompose(req);
  REQUIRE(r.stack.layers.size() == 3);
  CHECK(r.stack.layers[0].name == "cat");
  CHECK(r.stack.layers[1].name == "dog");
  CHECK(r.stack.layers[2].role == "bg");
  persist(r.stack, work / "out");
  // Exact in regions where every layer is fully visible or fully absent.
  const Image rec = recompose(r.stack);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      bool hard = true;
      for (int k = 0; k < 2; ++k) {
        const double v = r.stack.layers[k].alpha->at(y, x);
        hard = hard && (v >= 1.0 - kVisibleEpsilon || v <= kVisibleEpsilon);
      }
      if (hard)
        for (int c = 0; c < 3; ++c)
          CHECK(std::abs(rec.at(y, x, c) - r.input_composite.at(y, x, c)) <= 1.0 / 255.0);
    }

  // A prompt with no matching region is skipped.
  world->generate({"cat and dog", {"cat"}, 32, 32, 1});
  PipelineRequest miss{.id = "m1", .prompt = "cat and dog", .foreground_indices = {{0}, {2}},
                       .input_image = world->active()->composite, .seed = 2};
  const PipelineResult rm = p.multi_layer_decompose(miss);
  CHECK(rm.stack.layers.size() == 2);
  CHECK(rm.skipped == std::vector<std::string>{"dog"});

  const int gens = reg.calls(Slot::Generator);
  PipelineRequest one{.id = "m2", .prompt = "cat", .foreground_indices = {{0}}, .seed = 2};
  CHECK(p.multi_layer_decompose(one).stack.layers.size() == 2);
  CHECK(reg.calls(Slot::Generator) == gens + 1);
}

TEST_CASE("stage failures carry stage and adapter") {
  const fs::path work = temp_dir("pipeline_fail");
  const fs::path err = script(work, "fail.sh", R"(printf '{"status": "error", "message": "no gpu"}' > "$1/response.json")");
  AdapterRegistry reg =
      make_registry({{"matting", {{"command", {err.string()}}}}}, Mode::Desk, nullptr, work);
  Pipeline p(reg, solver_config(32), {});
  try {
    p.run({.prompt = "a cat", .foreground_indices = {{1}}});
    FAIL("expected AdapterError");
  } catch (const AdapterError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("foreground determination") != std::string::npos);
    CHECK(msg.find("process:") != std::string::npos);
    CHECK(msg.find("no gpu") != std::string::npos);
  }
}
