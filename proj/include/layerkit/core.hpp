#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace layerkit {

/// 2-D grayscale radar echogram. Rows are depth (increasing downward),
/// columns are along-track position.
struct Radargram {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, height*width
  double vertical_resolution_cm = 4.0;

  std::uint8_t at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }
  std::uint8_t& at(int row, int col) {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }

  bool valid() const {
    return height > 0 && width > 0 && vertical_resolution_cm > 0.0 &&
           pixels.size() == static_cast<std::size_t>(height) * width;
  }
};

/// Sparse per-layer boundary curves: for each layer id, an optional row
/// index per column. Layer ids are >= 1 and curves never cross.
struct LayerMap {
  using Curve = std::vector<std::optional<int>>;

  int width = 0;
  std::map<int, Curve> layers;

  bool has_layer(int id) const { return layers.count(id) != 0; }
};

/// Dense per-pixel class-id grid. Class 0 is background.
struct SemanticMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> classes;  // row-major

  std::uint8_t at(int row, int col) const {
    return classes[static_cast<std::size_t>(row) * width + col];
  }
  std::uint8_t& at(int row, int col) {
    return classes[static_cast<std::size_t>(row) * width + col];
  }

  bool operator==(const SemanticMap& o) const {
    return height == o.height && width == o.width && classes == o.classes;
  }
};

/// Rectangular crop region; x = column, y = row, lower/right bounds exclusive.
struct CropBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }

  bool operator==(const CropBox& o) const {
    return x1 == o.x1 && y1 == o.y1 && x2 == o.x2 && y2 == o.y2;
  }
};

struct LabelSchema {
  int num_classes = 28;  // including background (class 0)
  int background_id = 0;
};

/// One broken LayerMap invariant; violations are data, not exceptions.
struct LayerMapViolation {
  int layer_a = 0;
  int layer_b = 0;   // 0 when the violation concerns a single layer
  int column = -1;   // -1 when not column specific
  std::string message;
};

/// Checks every LayerMap invariant: positive ids, curve lengths matching
/// the map width, at least one annotated column per layer, and strict
/// top-to-bottom ordering wherever two layers are both annotated.
inline std::vector<LayerMapViolation> validate_layer_map(const LayerMap& m) {
  std::vector<LayerMapViolation> out;
  if (m.width <= 0) {
    out.push_back({0, 0, -1, "width must be positive"});
    return out;
  }
  for (const auto& [id, curve] : m.layers) {
    if (id < 1) {
      out.push_back({id, 0, -1, "layer id " + std::to_string(id) + " is not positive"});
    }
    if (static_cast<int>(curve.size()) != m.width) {
      out.push_back({id, 0, -1,
                     "layer " + std::to_string(id) + " has " +
                         std::to_string(curve.size()) + " columns, expected " +
                         std::to_string(m.width)});
      continue;
    }
    bool any = false;
    for (int c = 0; c < m.width; ++c) {
      if (curve[c]) {
        any = true;
        if (*curve[c] < 0) {
          out.push_back({id, 0, c, "layer " + std::to_string(id) +
                                       " has negative row at column " +
                                       std::to_string(c)});
        }
      }
    }
    if (!any) {
      out.push_back({id, 0, -1, "layer " + std::to_string(id) + " has no annotated columns"});
    }
  }
  // Pairwise ordering: larger id must sit strictly deeper at every shared column.
  for (auto a = m.layers.begin(); a != m.layers.end(); ++a) {
    auto b = std::next(a);
    for (; b != m.layers.end(); ++b) {
      if (a->second.size() != b->second.size()) continue;
      for (int c = 0; c < static_cast<int>(a->second.size()); ++c) {
        const auto& ra = a->second[c];
        const auto& rb = b->second[c];
        if (ra && rb && *rb <= *ra) {
          out.push_back({a->first, b->first, c,
                         "layers " + std::to_string(a->first) + " and " +
                             std::to_string(b->first) + " cross or touch at column " +
                             std::to_string(c)});
        }
      }
    }
  }
  return out;
}

/// True iff the layer has a row at every column of the map.
inline bool is_complete(const LayerMap& m, int layer_id) {
  auto it = m.layers.find(layer_id);
  if (it == m.layers.end()) {
    throw std::invalid_argument("unknown layer id " + std::to_string(layer_id));
  }
  for (const auto& row : it->second) {
    if (!row) return false;
  }
  return static_cast<int>(it->second.size()) == m.width;
}

}  // namespace layerkit
