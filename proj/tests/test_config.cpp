#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <doctest.h>

#include "bitsnn/config.hpp"

using namespace bitsnn::config;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const char* name, const std::string& body) {
  const fs::path dir = fs::temp_directory_path() / "bitsnn_test_config";
  fs::create_directories(dir);
  std::ofstream out(dir / name);
  out << body;
  return (dir / name).string();
}

}  // namespace

TEST_CASE("parse_config reads sections, pairs, comments, and blanks") {
  std::istringstream in(
      "# leading comment\n"
      "[train]\n"
      "epochs = 12\n"
      "  learning_rate=0.05  \n"
      "\n"
      "; another comment style\n"
      "[targets]\n"
      "weight_bits = 3\n");
  const ConfigMap cfg = parse_config(in, "<test>");
  CHECK(cfg.size() == 3);
  CHECK(cfg.at("train.epochs") == "12");
  CHECK(cfg.at("train.learning_rate") == "0.05");
  CHECK(cfg.at("targets.weight_bits") == "3");
}

TEST_CASE("parse_config reports the offending line") {
  auto parse = [](const char* text) {
    std::istringstream in(text);
    return parse_config(in, "<test>");
  };
  CHECK_THROWS_WITH_AS(parse("[train]\nnonsense line\n"),
                       doctest::Contains("<test>:2"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse("[train\n"), doctest::Contains("unterminated"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse("[]\n"), doctest::Contains("empty section"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse("orphan = 1\n"),
                       doctest::Contains("before any [section]"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse("[a]\n= 1\n"), doctest::Contains("empty key"),
                       std::invalid_argument);
}

TEST_CASE("load_config overlays the file onto full defaults") {
  const std::string path =
      write_temp("overlay.ini", "[train]\nepochs = 3\nseed = 99\n");
  const ConfigMap cfg = load_config(path);
  CHECK(get_int(cfg, "train.epochs") == 3);
  CHECK(get_int(cfg, "train.seed") == 99);
  // Untouched keys keep their registry defaults.
  CHECK(get_double(cfg, "train.learning_rate") == doctest::Approx(0.1));
  CHECK(get_int(cfg, "renewal.k") == 100);
  CHECK(cfg.size() == config_registry().size());
}

TEST_CASE("load_config rejects unknown keys and missing files") {
  const std::string path = write_temp("typo.ini", "[train]\nepochz = 3\n");
  CHECK_THROWS_WITH_AS(load_config(path),
                       doctest::Contains("unknown config key 'train.epochz'"),
                       std::invalid_argument);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.ini"), std::runtime_error);
}

TEST_CASE("typed getters parse fully or throw naming the key") {
  ConfigMap cfg;
  cfg["a.i"] = "42";
  cfg["a.d"] = "2.5e-3";
  cfg["a.b1"] = "true";
  cfg["a.b2"] = "Off";
  cfg["a.bad"] = "12x";
  CHECK(get_int(cfg, "a.i") == 42);
  CHECK(get_double(cfg, "a.d") == doctest::Approx(2.5e-3));
  CHECK(get_bool(cfg, "a.b1"));
  CHECK_FALSE(get_bool(cfg, "a.b2"));
  CHECK(get_string(cfg, "a.bad") == "12x");
  CHECK_THROWS_WITH_AS(get_int(cfg, "a.bad"), doctest::Contains("'a.bad'"),
                       std::invalid_argument);
  CHECK_THROWS_AS(get_double(cfg, "a.bad"), std::invalid_argument);
  CHECK_THROWS_AS(get_bool(cfg, "a.i"), std::invalid_argument);
  CHECK_THROWS_AS(get_int(cfg, "a.missing"), std::invalid_argument);
}

TEST_CASE("every registry entry has a section, a default, and help text") {
  for (const auto& e : config_registry()) {
    CAPTURE(e.key);
    CHECK(e.key.find('.') != std::string::npos);
    CHECK_FALSE(e.help.empty());
    // Paths may default to empty; everything else must have a usable default.
    if (e.key.find("path") == std::string::npos)
      CHECK_FALSE(e.default_value.empty());
  }
  // Defaults must themselves pass the typed getters used by the trainer.
  const ConfigMap cfg = default_config();
  CHECK(get_int(cfg, "train.epochs") >= 1);
  CHECK(get_int(cfg, "train.batch_size") >= 1);
  CHECK(get_double(cfg, "train.learning_rate") > 0.0);
  CHECK(get_double(cfg, "train.momentum") >= 0.0);
  CHECK(get_bool(cfg, "train.bits_learning"));
  CHECK(get_int(cfg, "bits.init_weight") == 4);
  CHECK(get_int(cfg, "bits.init_spike") == 4);
  CHECK(get_int(cfg, "bits.init_time") == 2);
  CHECK(get_int(cfg, "bits.bound_weight") == 6);
  CHECK(get_int(cfg, "bits.bound_time") == 3);
  CHECK(get_double(cfg, "targets.lambda_weight") == doctest::Approx(0.04));
  CHECK(get_double(cfg, "targets.lambda_spike") == doctest::Approx(0.01));
  CHECK(get_string(cfg, "train.renewal_mode") == "act-only");
  CHECK(get_double(cfg, "renewal.pow") == doctest::Approx(2.4));
}

TEST_CASE("serialization is canonical and feeds a stable hash") {
  ConfigMap a;
  a["zed.k"] = "1";
  a["alpha.b"] = "2";
  a["alpha.a"] = "3";
  const std::string text = serialize_config(a);
  CHECK(text.find("[alpha]") < text.find("[zed]"));
  CHECK(text.find("a = 3") < text.find("b = 2"));

  ConfigMap b = a;
  CHECK(config_hash(a) == config_hash(b));
  b["alpha.a"] = "4";
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).substr(0, 2) == "0x");

  // A serialized config parses back to the same map.
  std::istringstream in(text);
  CHECK(parse_config(in, "<echo>") == a);
}
