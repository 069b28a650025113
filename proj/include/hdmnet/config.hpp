#pragma once

// Human-readable run configuration: UTF-8 text with one `key = value` per
// line. Keys are dotted paths into the scene, model and train sections,
// e.g. `train.epochs = 30` or `scene.lights.1.intensity = 0.8`. Values are
// JSON literals (numbers, true/false, [lists], {objects}, "strings"); a
// bare word is read as a string. `#` starts a comment.

#include <filesystem>
#include <string>
#include <vector>

#include "hdmnet/io.hpp"
#include "hdmnet/scene.hpp"
#include "hdmnet/trainer.hpp"

namespace hdmnet {

struct ConfigEntry {
  std::string key;
  nlohmann::json value;
  std::string origin;  // "file:line" or "flag"
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

/// Parses one `key = value` assignment.
inline ConfigEntry parse_assignment(const std::string& text, const std::string& origin) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError(origin + ": expected 'key = value', got '" + text + "'");
  ConfigEntry e{trim(text.substr(0, eq)), {}, origin};
  const auto raw = trim(text.substr(eq + 1));
  if (e.key.empty()) throw ConfigError(origin + ": empty key");
  if (raw.empty()) throw ConfigError(origin + ": empty value for '" + e.key + "'");
  e.value = nlohmann::json::parse(raw, nullptr, false);
  if (e.value.is_discarded()) e.value = raw;
  return e;
}

inline std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& source = "config") {
  std::vector<ConfigEntry> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    // Comments start at a '#' outside double quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    out.push_back(parse_assignment(line, source + ":" + std::to_string(n)));
  }
  return out;
}

inline std::vector<ConfigEntry> read_config_file(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config file: " + std::string(e.what()));
  }
  return parse_config_text(std::string(bytes.begin(), bytes.end()), path.string());
}

/// Fully resolved configuration of a run.
struct RunConfig {
  SceneConfig scene = SceneConfig::desk();
  ModelConfig model = ModelConfig::desk();
  TrainConfig train = TrainConfig::for_scene(SceneConfig::desk());

  nlohmann::json to_json() const { return {{"scene", scene.to_json()}, {"model", model.to_json()}, {"train", train.to_json()}}; }

  /// Key = value listing of every setting, readable by parse_config_text.
  std::string to_text() const {
    std::ostringstream os;
    std::function<void(const std::string&, const nlohmann::json&)> walk = [&](const std::string& prefix,
                                                                            const nlohmann::json& v) {
      if (v.is_object()) {
        for (auto it = v.begin(); it != v.end(); ++it) walk(prefix.empty() ? it.key() : prefix + "." + it.key(), it.value());
      } else {
        os << prefix << " = " << v.dump() << '\n';
      }
    };
    walk("", to_json());
    return os.str();
  }
};

namespace detail {

inline void assign_path(nlohmann::json& doc, const ConfigEntry& e) {
  nlohmann::json* node = &doc;
  std::stringstream ss(e.key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& p = parts[k];
    nlohmann::json* next = nullptr;
    if (node->is_object() && node->contains(p)) {
      next = &(*node)[p];
    } else if (node->is_array() && !p.empty() && p.find_first_not_of("0123456789") == std::string::npos &&
               std::stoul(p) < node->size()) {
      next = &(*node)[std::stoul(p)];
    }
    if (!next) throw ConfigError(e.origin + ": unknown configuration key '" + e.key + "'");
    node = next;
  }
  if (node->is_structured() != e.value.is_structured() && !(node->is_array() && e.value.is_array())) {
    throw ConfigError(e.origin + ": '" + e.key + "' expects " + node->type_name() + ", got " + e.value.type_name());
  }
  *node = e.value;
}

inline bool sets(const std::vector<ConfigEntry>& entries, const std::string& prefix) {
  for (const auto& e : entries)
    if (e.key == prefix || e.key.rfind(prefix + ".", 0) == 0) return true;
  return false;
}

}  // namespace detail

/// Applies entries (later ones win) on top of `base` and validates the
/// result. Model input/grid sizes follow the scene and skips follow the
/// widths unless set explicitly; the loss raster follows the image size
/// unless any raster key is set.
inline RunConfig resolve_config(const std::vector<ConfigEntry>& entries, const RunConfig& base = {}) {
  auto doc = base.to_json();
  for (const auto& e : entries) detail::assign_path(doc, e);
  RunConfig out;
  out.scene = SceneConfig::from_json(doc.at("scene"));
  out.model = ModelConfig::from_json(doc.at("model"));
  out.train = TrainConfig::from_json(doc.at("train"));
  if (!detail::sets(entries, "model.input_side")) out.model.input_side = out.scene.image_side;
  if (!detail::sets(entries, "model.grid_side")) out.model.grid_side = out.scene.grid_side;
  if (!detail::sets(entries, "model.skips")) out.model.skips = ModelConfig::mirrored_skips(out.model.widths.size());
  if (!detail::sets(entries, "train.loss.raster_side")) out.train.loss.raster_side = raster_side_for(out.scene.image_side);
  if (!detail::sets(entries, "train.loss.raster_scale")) out.train.loss.fit_raster_to_image(out.scene.image_side);
  out.scene.validate();
  out.model.validate();
  out.train.validate();
  return out;
}

}  // namespace hdmnet
