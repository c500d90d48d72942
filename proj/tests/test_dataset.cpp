#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "layerforge/compose.hpp"
#include "layerforge/corpus.hpp"
#include "layerforge/dataset.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/png_io.hpp"
#include "layerforge/trimap.hpp"
#include "layerforge/util.hpp"

using namespace layerforge;
using namespace layerforge::dataset;
namespace fs = std::filesystem;

namespace {

double keys(double t) {
  t = std::abs(t);
  if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
  return 0;
}

// Direct (non-separable) bicubic resampling.
double bicubic_at(const Image& img, int oy, int ox, int nh, int nw, int c) {
  const double py = (oy + 0.5) * img.height() / nh - 0.5;
  const double px = (ox + 0.5) * img.width() / nw - 0.5;
  double acc = 0;
  for (int i = int(std::floor(py)) - 1; i <= int(std::floor(py)) + 2; ++i)
    for (int j = int(std::floor(px)) - 1; j <= int(std::floor(px)) + 2; ++j) {
      const int yy = std::clamp(i, 0, img.height() - 1);
      const int xx = std::clamp(j, 0, img.width() - 1);
      acc += keys(py - i) * keys(px - j) * img.at(yy, xx, c);
    }
  return std::clamp(acc, 0.0, 1.0);
}

struct Bbox {
  int y0, x0, y1, x1;
  auto operator<=>(const Bbox&) const = default;
};

Bbox alpha_bbox(const AlphaMask& a) {
  Bbox b{a.height(), a.width(), -1, -1};
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      if (a.at(y, x) > 0.5) b = {std::min(b.y0, y), std::min(b.x0, x), std::max(b.y1, y), std::max(b.x1, x)};
  return b;
}

struct FailingSink : SampleSink {
  std::map<std::string, std::string> write(const DatasetSample&, const std::string& id) override {
    if (id == "000002") throw IoError("disk full");
    return {};
  }
};

}  // namespace

TEST_CASE("standardize keeps already-standard images") {
  std::mt19937_64 rng(20);
  const Image img = testing::random_image(rng, 32, 32, 3);
  CHECK(standardize(img, 32, 32) == img);
}

TEST_CASE("standardize takes the centred window along the long axis") {
  std::mt19937_64 rng(21);
  const Image wide = testing::random_image(rng, 16, 32, 3);
  const Image out = standardize(wide, 16, 16);
  REQUIRE(out.height() == 16);
  REQUIRE(out.width() == 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == wide.at(y, x + 8, c));

  const Image tall = testing::random_image(rng, 32, 16, 1);
  const Image t = standardize(tall, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) CHECK(t.at(y, x) == tall.at(y + 8, x));
}

TEST_CASE("standardize resize then window matches a direct bicubic oracle") {
  std::mt19937_64 rng(22);
  const Image img = testing::random_image(rng, 64, 128, 3);
  const Image out = standardize(img, 32, 32);
  REQUIRE(out.height() == 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(out.at(y, x, c) == doctest::Approx(bicubic_at(img, y, x + 16, 32, 64, c)).epsilon(1e-9));
  CHECK_THROWS_AS(standardize(img, 16, 32), ValueError);
}

TEST_CASE("synthesize_sample identity cases and determinism") {
  const auto fg = procedural_foreground(3);
  const auto bg = procedural_background(4);
  Image opaque = fg.rgba, clear = fg.rgba;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      opaque.at(y, x, 3) = 1.0;
      clear.at(y, x, 3) = 0.0;
    }
  CHECK(synthesize_sample({clear, "c"}, bg, 1).composite == bg.rgb);
  CHECK(synthesize_sample({opaque, "o"}, bg, 1).composite == fg.rgba.channel_range(0, 3));

  const DatasetSample a = synthesize_sample(fg, bg, 77);
  const DatasetSample b = synthesize_sample(fg, bg, 77);
  CHECK(a.composite == b.composite);
  CHECK(a.trimap == b.trimap);
  CHECK(recomposition_error(a) <= 1e-6);
  CHECK_THROWS_AS(synthesize_sample(fg, procedural_background(1, {32}), 1), ShapeError);
}

TEST_CASE("procedural foreground alpha covers all three bands") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto fg = procedural_foreground(seed);
    int zero = 0, one = 0, mid = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double a = fg.rgba.at(y, x, 3);
        zero += a == 0.0;
        one += a == 1.0;
        mid += a > 0.0 && a < 1.0;
      }
    CAPTURE(seed);
    CHECK(zero > 0);
    CHECK(one > 0);
    CHECK(mid > 0);
  }
  CHECK(procedural_foreground(9).rgba == procedural_foreground(9).rgba);
}

TEST_CASE("procedural foreground shapes vary across seeds") {
  std::set<Bbox> boxes;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto fg = procedural_foreground(seed);
    boxes.insert(alpha_bbox(split_rgba(fg.rgba).second));
  }
  CHECK(boxes.size() >= 95);
}

TEST_CASE("procedural background is textured and deterministic") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto bg = procedural_background(seed);
    CHECK(bg.rgb.channels() == 3);
    double mean = 0, var = 0;
    for (double v : bg.rgb.values()) mean += v;
    mean /= double(bg.rgb.size());
    for (double v : bg.rgb.values()) var += (v - mean) * (v - mean);
    var /= double(bg.rgb.size());
    CHECK(var > 1e-3);
    for (double v : bg.rgb.values()) CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK(procedural_background(5).rgb == procedural_background(5).rgb);
}

TEST_CASE("matting_trimap") {
  AlphaMask square(16, 16);
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) square.at(y, x) = 1.0;
  MattingTrimapConfig zero;
  zero.min_radius = 0;
  zero.max_radius = 0;
  // Radii are floored at 1 at this scale: unknown band = dilate1 - erode1.
  CHECK(matting_trimap(square, 3, zero) == make_trimap(square, 1, 1));

  const Trimap full = matting_trimap(AlphaMask(64, 64, 1.0), 5);
  for (int y = 5; y < 59; ++y)
    for (int x = 5; x < 59; ++x) CHECK(full.at(y, x) == 1.0);

  const auto fg = procedural_foreground(11);
  const AlphaMask a = split_rgba(fg.rgba).second;
  CHECK(matting_trimap(a, 42) == matting_trimap(a, 42));
}

TEST_CASE("build_corpus writes a reproducible directory corpus") {
  const fs::path root = fs::temp_directory_path() / "layerforge_corpus_test";
  fs::remove_all(root);
  CorpusOptions opts;
  opts.resolution = 32;
  {
    DirectorySink sink(root / "one");
    const CorpusManifest m = build_corpus(1, 5, sink, opts);
    REQUIRE(m.entries.size() == 1);
    const auto loaded = load_corpus(root / "one");
    REQUIRE(loaded.size() == 1);
    CHECK(recomposition_error(loaded[0]) < 1.0 / 255.0);
    CHECK(fs::exists(root / "one" / "trimap" / "000000.png"));
  }
  DirectorySink s1(root / "a"), s2(root / "b");
  const CorpusManifest m1 = build_corpus(100, 99, s1, opts);
  opts.workers = 3;
  const CorpusManifest m2 = build_corpus(100, 99, s2, opts);
  CHECK(m1.hash() == m2.hash());
  CHECK(read_text_file(root / "a" / "manifest.json") == read_text_file(root / "b" / "manifest.json"));
  CHECK(hash_file(root / "a" / "composite" / "000042.png") ==
        hash_file(root / "b" / "composite" / "000042.png"));
  CHECK(CorpusManifest::from_json(m1.to_json()).hash() == m1.hash());

  MemorySink mem;
  CHECK_THROWS_AS(build_corpus(0, 1, mem, opts), ValueError);
  FailingSink failing;
  try {
    build_corpus(4, 1, failing, CorpusOptions{.resolution = 32});
    FAIL("expected failure");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("sample 2") != std::string::npos);
  }
}

TEST_CASE("generate_samples matches corpus sample seeds") {
  CorpusOptions opts;
  opts.resolution = 32;
  MemorySink mem;
  const auto manifest = build_corpus(3, 8, mem, opts);
  const auto samples = generate_samples(3, 8, opts);
  for (int i = 0; i < 3; ++i) {
    CHECK(samples[i].seed == manifest.entries[i].seed);
    CHECK(samples[i].composite == mem.samples.at(manifest.entries[i].id).composite);
  }
}

TEST_CASE("imported asset directories") {
  const fs::path root = fs::temp_directory_path() / "layerforge_import_test";
  fs::remove_all(root);
  fs::create_directories(root / "fg");
  fs::create_directories(root / "bg");
  for (int i = 0; i < 3; ++i) {
    write_png(root / "fg" / ("f" + std::to_string(i) + ".png"), procedural_foreground(i, {.resolution = 48}).rgba);
    write_png(root / "bg" / ("b" + std::to_string(i) + ".png"), standardize(procedural_background(i).rgb, 40, 40));
  }
  const ImportedSource src(root / "fg", root / "bg", 32);
  CHECK(src.foreground_count() == 3);
  const auto fg = src.foreground(1);
  CHECK(fg.rgba.height() == 32);
  CHECK(fg.rgba.channels() == 4);
  CHECK(src.background(1).rgb.channels() == 3);
  CHECK(import_backgrounds(root / "bg", 32).size() == 3);
  MemorySink mem;
  build_corpus(4, 2, mem, CorpusOptions{.resolution = 32}, &src);
  CHECK(mem.samples.size() == 4);
}
