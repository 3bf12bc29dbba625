#include "bitsnn/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <zlib.h>

namespace bitsnn::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace((unsigned char)s[a])) ++a;
  while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
  return s.substr(a, b - a);
}

}  // namespace

const std::vector<ConfigEntry>& config_registry() {
  static const std::vector<ConfigEntry> entries = {
      {"train.epochs", "40", "training epochs"},
      {"train.batch_size", "32", "mini-batch size"},
      {"train.learning_rate", "0.1", "SGD learning rate, constant"},
      {"train.momentum", "0.9", "SGD momentum"},
      {"train.seed", "1", "master seed for init, shuffling, and data"},
      {"train.renewal_mode", "act-only",
       "step-size renewal scope: off | act-only | weight-only | bilateral"},
      {"train.bits_learning", "true",
       "learn bit widths and timesteps; false freezes them at bits.init_*"},
      {"data.train_path", "",
       "training set path; empty generates the synthetic digit corpus"},
      {"data.eval_path", "",
       "evaluation set path; empty generates the synthetic digit corpus"},
      {"data.format", "idx", "dataset file format: idx | csv"},
      {"data.train_samples", "640",
       "synthetic corpus size when data.train_path is empty"},
      {"data.eval_samples", "320",
       "synthetic corpus size when data.eval_path is empty"},
      {"targets.weight_bits", "2", "target average weight bits"},
      {"targets.spike_bits", "2", "target average spike bits"},
      {"targets.timesteps", "1", "target average timesteps"},
      {"targets.lambda_weight", "0.04", "weight-bit regulating strength"},
      {"targets.lambda_time", "0.04", "timestep regulating strength"},
      {"targets.lambda_spike", "0.01", "spike-bit regulating strength"},
      {"bits.init_weight", "4", "initial weight bits, all layers"},
      {"bits.init_spike", "4", "initial spike bits, all slots"},
      {"bits.init_time", "2", "initial timesteps"},
      {"bits.bound_weight", "6", "weight-bit upper bound"},
      {"bits.bound_spike", "6", "spike-bit upper bound"},
      {"bits.bound_time", "3", "timestep upper bound"},
      {"neuron.tau", "2", "membrane leak divisor, 1 or 2"},
      {"neuron.round_shift", "true",
       "half-step shift before truncation in firing; false floors instead"},
      {"renewal.k", "100", "grid-search candidate count"},
      {"renewal.pow", "2.4", "grid-search error exponent"},
      {"renewal.relatch", "false",
       "re-arm a shut renewal observer if the bit gap regrows"},
      {"model.channels", "8", "first conv width; later convs use twice this"},
      {"model.batch_norm", "true", "per-channel batch norm on conv drive"},
  };
  return entries;
}

ConfigMap default_config() {
  ConfigMap cfg;
  for (const auto& e : config_registry()) cfg[e.key] = e.default_value;
  return cfg;
}

ConfigMap parse_config(std::istream& in, const std::string& origin) {
  ConfigMap cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                    ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                    ": empty section name");
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": empty key");
    if (section.empty())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": key '" + key +
                                  "' appears before any [section]");
    cfg[section + "." + key] = trim(t.substr(eq + 1));
  }
  return cfg;
}

ConfigMap load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const ConfigMap file = parse_config(in, path);
  ConfigMap cfg = default_config();
  for (const auto& [key, value] : file) {
    if (!cfg.count(key))
      throw std::invalid_argument("unknown config key '" + key + "' in " +
                                  path);
    cfg[key] = value;
  }
  return cfg;
}

namespace {

const std::string& fetch(const ConfigMap& cfg, const std::string& key) {
  const auto it = cfg.find(key);
  if (it == cfg.end())
    throw std::invalid_argument("missing config key '" + key + "'");
  return it->second;
}

}  // namespace

int get_int(const ConfigMap& cfg, const std::string& key) {
  const std::string& raw = fetch(cfg, key);
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(raw, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != raw.size() || raw.empty())
    throw std::invalid_argument("config key '" + key + "' wants an integer, got '" +
                                raw + "'");
  return int(v);
}

double get_double(const ConfigMap& cfg, const std::string& key) {
  const std::string& raw = fetch(cfg, key);
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(raw, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != raw.size() || raw.empty())
    throw std::invalid_argument("config key '" + key + "' wants a number, got '" +
                                raw + "'");
  return v;
}

bool get_bool(const ConfigMap& cfg, const std::string& key) {
  std::string raw = fetch(cfg, key);
  std::transform(raw.begin(), raw.end(), raw.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off")
    return false;
  throw std::invalid_argument("config key '" + key + "' wants a boolean, got '" +
                              fetch(cfg, key) + "'");
}

std::string get_string(const ConfigMap& cfg, const std::string& key) {
  return fetch(cfg, key);
}

std::string serialize_config(const ConfigMap& cfg) {
  // std::map iterates in key order, which groups sections alphabetically.
  std::ostringstream out;
  std::string section;
  for (const auto& [key, value] : cfg) {
    const std::size_t dot = key.find('.');
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    if (sec != section) {
      if (!section.empty() || !out.str().empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << value << "\n";
  }
  return out.str();
}

std::string config_hash(const ConfigMap& cfg) {
  const std::string text = serialize_config(cfg);
  const auto crc = ::crc32(::crc32(0L, Z_NULL, 0),
                           reinterpret_cast<const Bytef*>(text.data()),
                           uInt(text.size()));
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08lx", (unsigned long)crc);
  return buf;
}

}  // namespace bitsnn::config
