#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emonet/experiment.hpp"

namespace emonet::runio {

// Minimal INI: `[section]` headers, `key = value` pairs, `#`/`;` comments.
struct Ini {
  std::map<std::string, std::map<std::string, std::string>> sections;

  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) const;
};

Ini parse_ini(const std::string& text);
Ini read_ini_file(const std::string& path);

// Fills the run config from sections [data], [model], [train], [sweep];
// unknown keys are an error so typos never silently fall back to defaults.
void apply_run_config(experiment::RunConfig& config, const Ini& ini);

std::string read_file(const std::string& path);

// Write to a sibling temp file, then rename over the target, so failed runs
// never leave partial artifacts behind.
void atomic_write_file(const std::string& path, const std::string& content);

// FNV-1a 64-bit, printed as 16 hex digits; used for manifest fingerprints.
std::string fingerprint(const std::string& content);

struct ManifestEntry {
  std::string name;
  std::string value;
};

// `manifest.json` describing one reproducible run: command, seed, config
// hash, and a fingerprint per input and output artifact.
std::string make_manifest(const std::string& command,
                          const std::vector<ManifestEntry>& entries);

}  // namespace emonet::runio
