#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "layerkit/core.hpp"
#include "layerkit/metrics.hpp"

namespace layerkit {

struct ManifestEntry {
  std::string image_path;
  std::string layers_path;
  std::string semantic_path;  // may be empty
  std::string split;          // train, val, or test
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
};

namespace detail {

// Readers reject malformed input outright; messages carry the byte offset
// or line number of the first problem.
[[noreturn]] inline void pgm_error(const std::string& path, std::size_t offset,
                                   const std::string& what) {
  throw std::runtime_error(path + ": " + what + " at byte offset " +
                           std::to_string(offset));
}

inline int pgm_read_number(const std::string& buf, std::size_t& pos,
                           const std::string& path) {
  // Skip whitespace and '#' comment lines between header tokens.
  while (pos < buf.size()) {
    char c = buf[pos];
    if (c == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9') {
    pgm_error(path, pos, "expected numeric header field");
  }
  long value = 0;
  while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
    value = value * 10 + (buf[pos] - '0');
    if (value > 1 << 30) pgm_error(path, pos, "header number out of range");
    ++pos;
  }
  return static_cast<int>(value);
}

struct PgmData {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
};

inline PgmData read_pgm_raw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') {
    pgm_error(path, 0, "not a binary PGM (missing P5 magic)");
  }
  std::size_t pos = 2;
  PgmData out;
  out.width = pgm_read_number(buf, pos, path);
  out.height = pgm_read_number(buf, pos, path);
  int maxval = pgm_read_number(buf, pos, path);
  if (maxval != 255) pgm_error(path, pos, "maxval must be 255, got " + std::to_string(maxval));
  if (pos >= buf.size()) pgm_error(path, pos, "missing pixel payload");
  ++pos;  // single whitespace byte after maxval
  if (out.width <= 0 || out.height <= 0) pgm_error(path, 2, "non-positive dimensions");
  const std::size_t need = static_cast<std::size_t>(out.width) * out.height;
  if (buf.size() - pos < need) {
    pgm_error(path, buf.size(), "truncated payload, expected " + std::to_string(need) +
                                    " bytes, got " + std::to_string(buf.size() - pos));
  }
  out.pixels.assign(buf.begin() + pos, buf.begin() + pos + need);
  return out;
}

/// Writes to a temp file next to the target, then renames over it.
inline void atomic_write(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline Radargram read_pgm_radargram(const std::string& path) {
  auto raw = detail::read_pgm_raw(path);
  Radargram out;
  out.width = raw.width;
  out.height = raw.height;
  out.pixels = std::move(raw.pixels);
  return out;
}

inline SemanticMap read_pgm_semantic(const std::string& path) {
  auto raw = detail::read_pgm_raw(path);
  SemanticMap out;
  out.width = raw.width;
  out.height = raw.height;
  out.classes = std::move(raw.pixels);
  return out;
}

inline void write_pgm(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& data) {
  if (data.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("pixel buffer does not match dimensions");
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(data.data()), data.size());
  detail::atomic_write(path, out);
}

inline void write_pgm(const std::string& path, const Radargram& r) {
  write_pgm(path, r.width, r.height, r.pixels);
}

inline void write_pgm(const std::string& path, const SemanticMap& s) {
  write_pgm(path, s.width, s.height, s.classes);
}

/// Layer-curve CSV: header `layer_id,col,row`, a `# width=N` comment line,
/// then one row per annotated (layer, column), sorted by (layer_id, col).
/// Columns with no annotation are simply omitted.
inline void write_layers_csv(const std::string& path, const LayerMap& m) {
  std::string out = "layer_id,col,row\n# width=" + std::to_string(m.width) + "\n";
  for (const auto& [id, curve] : m.layers) {
    for (int col = 0; col < static_cast<int>(curve.size()); ++col) {
      if (curve[col]) {
        out += std::to_string(id) + "," + std::to_string(col) + "," +
               std::to_string(*curve[col]) + "\n";
      }
    }
  }
  detail::atomic_write(path, out);
}

inline LayerMap read_layers_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  auto fail = [&](int lineno, const std::string& what) -> void {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + what);
  };
  std::string line;
  int lineno = 1;
  if (!std::getline(f, line) || line != "layer_id,col,row") {
    fail(1, "expected header 'layer_id,col,row'");
  }
  ++lineno;
  if (!std::getline(f, line) || line.rfind("# width=", 0) != 0) {
    fail(2, "expected '# width=N' comment line");
  }
  LayerMap out;
  try {
    out.width = std::stoi(line.substr(8));
  } catch (const std::exception&) {
    fail(2, "malformed width value");
  }
  if (out.width <= 0) fail(2, "width must be positive");

  int prev_id = -1, prev_col = -1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    int id, col, row;
    if (std::sscanf(line.c_str(), "%d,%d,%d", &id, &col, &row) != 3) {
      fail(lineno, "malformed row '" + line + "'");
    }
    if (id < 1) fail(lineno, "layer id must be >= 1");
    if (col < 0 || col >= out.width) fail(lineno, "column out of bounds");
    if (row < 0) fail(lineno, "row must be non-negative");
    if (id < prev_id || (id == prev_id && col <= prev_col)) {
      if (id == prev_id && col == prev_col) {
        fail(lineno, "duplicate (layer_id, col)");
      }
      fail(lineno, "rows must be sorted by (layer_id, col)");
    }
    auto [it, ignored] = out.layers.try_emplace(id, LayerMap::Curve(out.width));
    it->second[col] = row;
    prev_id = id;
    prev_col = col;
  }
  return out;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["mean_iou"] = r.mean_iou;
  j["thickness_mae_px"] = r.thickness_mae_px;
  j["k_classes_used"] = r.k_classes_used;
  j["filters_applied"] = r.filters_applied;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.mean_iou = j.at("mean_iou").get<double>();
  r.thickness_mae_px = j.at("thickness_mae_px").get<double>();
  r.k_classes_used = j.at("k_classes_used").get<int>();
  r.filters_applied = j.at("filters_applied").get<std::string>();
  return r;
}

/// Aggregate report plus the per-image array, fixed key order.
inline void write_report_json(const std::string& path, const EvalReport& aggregate,
                              const std::vector<EvalReport>& per_image) {
  nlohmann::ordered_json j = report_to_json(aggregate);
  j["per_image"] = nlohmann::ordered_json::array();
  for (const EvalReport& r : per_image) j["per_image"].push_back(report_to_json(r));
  detail::atomic_write(path, j.dump(2) + "\n");
}

inline std::pair<EvalReport, std::vector<EvalReport>> read_report_json(
    const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  std::vector<EvalReport> per_image;
  for (const auto& item : j.at("per_image")) per_image.push_back(report_from_json(item));
  return {report_from_json(j), per_image};
}

inline void write_manifest(const std::string& path, const CorpusManifest& m) {
  std::string out = "image,layers,semantic,split\n";
  for (const ManifestEntry& e : m.entries) {
    out += e.image_path + "," + e.layers_path + "," + e.semantic_path + "," + e.split +
           "\n";
  }
  detail::atomic_write(path, out);
}

inline CorpusManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  auto fail = [&](int lineno, const std::string& what) -> void {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + what);
  };
  std::string line;
  int lineno = 1;
  if (!std::getline(f, line) || line != "image,layers,semantic,split") {
    fail(1, "expected header 'image,layers,semantic,split'");
  }
  CorpusManifest out;
  std::set<std::string> seen;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    ManifestEntry e;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 3 || fields.size() > 4) fail(lineno, "expected 4 fields");
    e.image_path = fields[0];
    e.layers_path = fields[1];
    e.semantic_path = fields[2];
    e.split = fields.size() == 4 ? fields[3] : "";
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      fail(lineno, "invalid split tag '" + e.split + "'");
    }
    if (!seen.insert(e.image_path).second) {
      fail(lineno, "duplicate image path '" + e.image_path + "'");
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

}  // namespace layerkit
