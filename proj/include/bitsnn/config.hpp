#pragma once
// Run configuration as flat key-value text with [section] headers whose
// names mirror the modules they feed. Every tunable lives in a registry with
// its default and a help line, so loading overlays a file onto the defaults,
// unknown keys are typos by definition, and the CLI can enumerate the full
// surface under --help. Validation failures throw std::invalid_argument,
// IO failures std::runtime_error.

#include <istream>
#include <map>
#include <string>
#include <vector>

namespace bitsnn::config {

// Keys are flattened to "section.key".
using ConfigMap = std::map<std::string, std::string>;

struct ConfigEntry {
  std::string key;
  std::string default_value;
  std::string help;
};

const std::vector<ConfigEntry>& config_registry();
ConfigMap default_config();

// Parses `[section]` headers, `key = value` pairs, blank lines, and full-line
// comments starting with '#' or ';'. Does not apply defaults and accepts any
// key; use load_config for the validated overlay. Errors name `origin` and
// the line number.
ConfigMap parse_config(std::istream& in, const std::string& origin);

// Defaults overlaid with the file, every file key checked against the
// registry.
ConfigMap load_config(const std::string& path);

// Typed getters; the key must be present (load_config guarantees every
// registry key is) and the value must parse fully.
int get_int(const ConfigMap& cfg, const std::string& key);
double get_double(const ConfigMap& cfg, const std::string& key);
bool get_bool(const ConfigMap& cfg, const std::string& key);
std::string get_string(const ConfigMap& cfg, const std::string& key);

// Canonical serialization (sections and keys sorted) and its crc32 in hex,
// used for provenance records.
std::string serialize_config(const ConfigMap& cfg);
std::string config_hash(const ConfigMap& cfg);

}  // namespace bitsnn::config
