#include <filesystem>
#include <map>

#include "doctest.h"
#include "layerforge/config.hpp"
#include "layerforge/errors.hpp"
#include "layerforge/util.hpp"

using namespace layerforge;

TEST_CASE("config defaults, file and environment precedence") {
  const auto path = std::filesystem::temp_directory_path() / "layerforge_config_test.json";
  write_text_file(path, R"({"fbdd": {"steps": 40, "lr": 0.002}, "hfa": {"ban_loss": "mse"}})");
  std::map<std::string, std::string> env{{"LAYERFORGE_FBDD_STEPS", "7"}, {"LAYERFORGE_HFA_LAMBDA", "0.5"}};
  auto lookup = [&](const std::string& k) -> std::optional<std::string> {
    auto it = env.find(k);
    if (it == env.end()) return std::nullopt;
    return it->second;
  };
  const Config c = Config::load(path, lookup);
  CHECK(c.get<int>("fbdd", "steps") == 7);
  CHECK(c.get<double>("fbdd", "lr") == 0.002);
  CHECK(c.get<std::string>("hfa", "ban_loss") == "mse");
  CHECK(c.get<double>("hfa", "lambda") == 0.5);
  CHECK(c.get<int>("fbdd", "batch") == 8);
  CHECK(Config::from_defaults().get<double>("hfa", "lambda") == 0.2);
  CHECK(c.hash() != Config::from_defaults().hash());
  CHECK(Config::load(path, lookup).hash() == c.hash());
}

TEST_CASE("config rejects unknown keys and bad types") {
  Config c = Config::from_defaults();
  CHECK_THROWS_AS(c.merge({{"fbdd", {{"stepz", 1}}}}, "test"), ConfigError);
  CHECK_THROWS_AS(c.merge({{"nope", {{"a", 1}}}}, "test"), ConfigError);
  CHECK_THROWS_AS(c.merge({{"fbdd", {{"steps", "many"}}}}, "test"), ConfigError);
  CHECK_THROWS_AS(c.merge({{"fbdd", {{"steps", 1.5}}}}, "test"), ConfigError);
  c.merge({{"fbdd", {{"lr", 1}}}}, "test");
  CHECK(c.get<double>("fbdd", "lr") == 1.0);
  CHECK_THROWS_AS(c.get<int>("fbdd", "missing"), ConfigError);
  auto bad_env = [](const std::string& k) -> std::optional<std::string> {
    if (k == "LAYERFORGE_FBDD_STEPS") return "abc";
    return std::nullopt;
  };
  CHECK_THROWS_AS(c.apply_env(bad_env), ConfigError);
}
