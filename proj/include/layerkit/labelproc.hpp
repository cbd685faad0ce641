#pragma once

#include <algorithm>
#include <stdexcept>
#include <utility>
#include <vector>

#include "layerkit/core.hpp"

namespace layerkit {

inline constexpr int kCropMargin = 5;

/// Maximal run of consecutive layer ids (step 1), length >= 2.
struct ConsecutiveSet {
  std::vector<int> layer_ids;

  int top_id() const { return layer_ids.front(); }
  int bottom_id() const { return layer_ids.back(); }

  bool operator==(const ConsecutiveSet& o) const { return layer_ids == o.layer_ids; }
};

/// One cropped training sample: the box, the image patch, the retained
/// layers re-based to the crop's top edge, and the set they came from.
struct CropResult {
  CropBox box;
  Radargram image;
  LayerMap layers;
  ConsecutiveSet source_set;
};

/// Drops every layer that is not annotated at all columns.
inline LayerMap remove_incomplete(const LayerMap& m) {
  LayerMap out;
  out.width = m.width;
  for (const auto& [id, curve] : m.layers) {
    if (is_complete(m, id)) out.layers.emplace(id, curve);
  }
  return out;
}

/// Partitions the present layer ids into maximal step-1 runs, discarding
/// singletons. Input layers must all be complete.
inline std::vector<ConsecutiveSet> consecutive_sets(const LayerMap& m) {
  std::vector<ConsecutiveSet> out;
  ConsecutiveSet run;
  for (const auto& [id, curve] : m.layers) {
    (void)curve;
    if (!run.layer_ids.empty() && id != run.layer_ids.back() + 1) {
      if (run.layer_ids.size() >= 2) out.push_back(std::move(run));
      run = {};
    }
    run.layer_ids.push_back(id);
  }
  if (run.layer_ids.size() >= 2) out.push_back(std::move(run));
  return out;
}

/// Bounding box for one consecutive set: full image width, and rows from
/// the top layer's shallowest point to the bottom layer's deepest point,
/// padded by kCropMargin and clamped to the image.
inline CropBox crop_box(const ConsecutiveSet& s, const LayerMap& m,
                        int image_height, int image_width) {
  auto top = m.layers.find(s.top_id());
  auto bottom = m.layers.find(s.bottom_id());
  if (top == m.layers.end() || bottom == m.layers.end()) {
    throw std::invalid_argument("consecutive set refers to absent layers");
  }
  int peak = image_height;    // min row of top layer
  int valley = -1;            // max row of bottom layer
  for (const auto& r : top->second) {
    if (r) peak = std::min(peak, *r);
  }
  for (const auto& r : bottom->second) {
    if (r) valley = std::max(valley, *r);
  }
  if (peak >= valley && s.top_id() != s.bottom_id()) {
    throw std::invalid_argument("peak row " + std::to_string(peak) +
                                " is not above valley row " + std::to_string(valley));
  }
  CropBox box;
  box.x1 = 0;
  box.x2 = image_width;
  box.y1 = std::max(0, peak - kCropMargin);
  box.y2 = std::min(image_height, valley + kCropMargin + 1);
  return box;
}

/// Copies the box region from the image and re-bases the set's layer rows
/// to the crop's top edge. Layers outside the set are dropped.
inline CropResult crop(const Radargram& image, const LayerMap& m,
                       const CropBox& box, const ConsecutiveSet& s) {
  if (box.x1 < 0 || box.y1 < 0 || box.x2 > image.width || box.y2 > image.height ||
      box.x1 >= box.x2 || box.y1 >= box.y2) {
    throw std::invalid_argument("crop box out of image bounds");
  }
  CropResult out;
  out.box = box;
  out.source_set = s;

  out.image.height = box.height();
  out.image.width = box.width();
  out.image.vertical_resolution_cm = image.vertical_resolution_cm;
  out.image.pixels.resize(static_cast<std::size_t>(box.height()) * box.width());
  for (int r = box.y1; r < box.y2; ++r) {
    for (int c = box.x1; c < box.x2; ++c) {
      out.image.at(r - box.y1, c - box.x1) = image.at(r, c);
    }
  }

  out.layers.width = box.width();
  for (int id : s.layer_ids) {
    auto it = m.layers.find(id);
    if (it == m.layers.end()) {
      throw std::invalid_argument("layer " + std::to_string(id) + " absent from map");
    }
    LayerMap::Curve curve(box.width());
    for (int c = box.x1; c < box.x2; ++c) {
      const auto& row = it->second[c];
      if (row) {
        if (*row < box.y1 || *row >= box.y2) {
          throw std::invalid_argument("layer " + std::to_string(id) + " row " +
                                      std::to_string(*row) + " outside crop box");
        }
        curve[c - box.x1] = *row - box.y1;
      }
    }
    out.layers.layers.emplace(id, std::move(curve));
  }
  return out;
}

/// Fills the crop into a dense class map: pixels above the top layer stay
/// background, pixels from each layer down to the next take the upper
/// layer's id, and pixels below the bottom layer take the bottom id.
inline SemanticMap semantic_fill(const CropResult& c) {
  SemanticMap out;
  out.height = c.image.height;
  out.width = c.image.width;
  out.classes.assign(static_cast<std::size_t>(out.height) * out.width, 0);

  for (int col = 0; col < out.width; ++col) {
    // (row, id) pairs, already in ascending row order because layers never cross
    std::vector<std::pair<int, int>> bands;
    for (const auto& [id, curve] : c.layers.layers) {
      if (!curve[col]) {
        throw std::invalid_argument("incomplete layer " + std::to_string(id) +
                                    " in semantic_fill");
      }
      bands.emplace_back(*curve[col], id);
    }
    for (std::size_t i = 0; i < bands.size(); ++i) {
      int from = bands[i].first;
      int to = (i + 1 < bands.size()) ? bands[i + 1].first : out.height;
      for (int r = from; r < to; ++r) {
        out.at(r, col) = static_cast<std::uint8_t>(bands[i].second);
      }
    }
  }
  return out;
}

/// Full label-processing pipeline: drop incomplete layers, group the rest
/// into consecutive sets, crop each set with its margin, and fill dense
/// semantic labels. Returns one (crop, labels) pair per set, top to bottom.
inline std::vector<std::pair<CropResult, SemanticMap>> preprocess(
    const Radargram& image, const LayerMap& m) {
  if (image.width != m.width) {
    throw std::invalid_argument("image and layer map widths differ");
  }
  std::vector<std::pair<CropResult, SemanticMap>> out;
  LayerMap clean = remove_incomplete(m);
  for (const ConsecutiveSet& s : consecutive_sets(clean)) {
    CropBox box = crop_box(s, clean, image.height, image.width);
    CropResult cr = crop(image, clean, box, s);
    SemanticMap sem = semantic_fill(cr);
    out.emplace_back(std::move(cr), std::move(sem));
  }
  return out;
}

}  // namespace layerkit
