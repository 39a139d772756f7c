#include "emonet/runio.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace emonet::runio {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(parse_long(item, key)));
  }
  if (out.empty()) throw Error("config: empty list for " + key);
  return out;
}

}  // namespace

std::optional<std::string> Ini::get(const std::string& section,
                                    const std::string& key) const {
  auto s = sections.find(section);
  if (s == sections.end()) return std::nullopt;
  auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

Ini parse_ini(const std::string& text) {
  Ini ini;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    lineno += 1;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error("config line " + std::to_string(lineno) + ": unterminated section");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw Error("config line " + std::to_string(lineno) + ": empty section name");
      }
      ini.sections[section];
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw Error("config line " + std::to_string(lineno) + ": empty key");
    }
    ini.sections[section][key] = value;
  }
  return ini;
}

Ini read_ini_file(const std::string& path) { return parse_ini(read_file(path)); }

void apply_run_config(experiment::RunConfig& config, const Ini& ini) {
  for (const auto& [section, kv] : ini.sections) {
    for (const auto& [key, value] : kv) {
      const std::string where = section + "." + key;
      if (section == "data") {
        if (key == "target") config.target = value;
        else if (key == "mix") config.mix = parse_double(value, where);
        else throw Error("config: unknown key " + where);
      } else if (section == "model") {
        if (key == "models") {
          config.kinds.clear();
          std::stringstream ss(value);
          std::string item;
          while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) config.kinds.push_back(models::model_kind_from_string(item));
          }
        } else if (key == "graph_size") config.w = static_cast<int>(parse_long(value, where));
        else if (key == "seq_len") config.seq_len = static_cast<int>(parse_long(value, where));
        else if (key == "gcn_widths") config.gcn_widths = parse_int_list(value, where);
        else if (key == "lstm_hidden") config.lstm_hidden = static_cast<int>(parse_long(value, where));
        else if (key == "conv_channels") config.conv_channels = static_cast<int>(parse_long(value, where));
        else if (key == "conv_kernel") config.conv_kernel = static_cast<int>(parse_long(value, where));
        else if (key == "dense_widths") config.dense_widths = parse_int_list(value, where);
        else if (key == "dropout") config.dropout_rate = parse_double(value, where);
        else throw Error("config: unknown key " + where);
      } else if (section == "train") {
        if (key == "trials") config.trials = static_cast<int>(parse_long(value, where));
        else if (key == "seed") config.seed = static_cast<unsigned>(parse_long(value, where));
        else if (key == "lr") config.lr = parse_double(value, where);
        else if (key == "max_epochs") config.max_epochs = static_cast<int>(parse_long(value, where));
        else if (key == "patience") config.patience = static_cast<int>(parse_long(value, where));
        else if (key == "early_stop_delta") config.early_stop_delta = parse_double(value, where);
        else if (key == "train_frac") config.train_frac = parse_double(value, where);
        else if (key == "val_frac") config.val_frac = parse_double(value, where);
        else if (key == "test_frac") config.test_frac = parse_double(value, where);
        else throw Error("config: unknown key " + where);
      } else if (section == "sweep") {
        if (key == "vary") config.sweep_vary = value;
        else if (key == "values") config.sweep_values = parse_int_list(value, where);
        else throw Error("config: unknown key " + where);
      } else {
        throw Error("config: unknown section [" + section + "]");
      }
    }
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
  }
}

std::string fingerprint(const std::string& content) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : content) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string make_manifest(const std::string& command,
                          const std::vector<ManifestEntry>& entries) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["precedence"] = "flags override config file values";
  for (const auto& e : entries) j[e.name] = e.value;
  return j.dump(2) + "\n";
}

}  // namespace emonet::runio
