#pragma once

#include <map>
#include <stdexcept>
#include <vector>

#include "layerkit/core.hpp"

namespace layerkit {

/// Mean thickness per layer class, in pixels: class pixel count divided by
/// the image width. Background is excluded.
struct ThicknessReport {
  std::map<int, double> per_layer;
  int width = 0;
  double unit_cm_per_pixel = 4.0;
};

/// Collapses a dense class map back to discrete curves: per column, each
/// non-background class keeps only its topmost pixel.
inline LayerMap semantic_to_layers(const SemanticMap& s) {
  LayerMap out;
  out.width = s.width;
  for (int col = 0; col < s.width; ++col) {
    for (int row = 0; row < s.height; ++row) {
      int id = s.at(row, col);
      if (id == 0) continue;
      auto [it, inserted] = out.layers.try_emplace(id, LayerMap::Curve(s.width));
      if (!it->second[col]) it->second[col] = row;  // duplicates below are dropped
    }
  }
  return out;
}

inline ThicknessReport mean_thickness(const SemanticMap& s) {
  if (s.width <= 0) throw std::invalid_argument("semantic map width must be positive");
  ThicknessReport out;
  out.width = s.width;
  std::map<int, long long> counts;
  for (std::uint8_t c : s.classes) {
    if (c != 0) ++counts[c];
  }
  for (const auto& [id, n] : counts) {
    out.per_layer[id] = static_cast<double>(n) / s.width;
  }
  return out;
}

inline std::map<int, double> thickness_cm(const ThicknessReport& r) {
  if (r.unit_cm_per_pixel <= 0.0) {
    throw std::invalid_argument("unit_cm_per_pixel must be positive");
  }
  std::map<int, double> out;
  for (const auto& [id, t] : r.per_layer) out[id] = t * r.unit_cm_per_pixel;
  return out;
}

}  // namespace layerkit
