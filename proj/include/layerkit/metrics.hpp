#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "layerkit/core.hpp"
#include "layerkit/layerize.hpp"

namespace layerkit {

/// One-vs-rest pixel counts per class.
struct ConfusionCounts {
  struct Counts {
    long long tp = 0, tn = 0, fp = 0, fn = 0;
    long long total() const { return tp + tn + fp + fn; }
  };
  std::map<int, Counts> per_class;
};

struct EvalReport {
  double accuracy = 0.0;
  double mean_iou = 0.0;
  double thickness_mae_px = 0.0;
  int k_classes_used = 0;
  std::string filters_applied = "none";
};

inline ConfusionCounts confusion(const SemanticMap& pred, const SemanticMap& gt,
                                 const std::set<int>& classes) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument("prediction and ground truth dimensions differ");
  }
  if (classes.empty()) throw std::invalid_argument("empty class set");
  ConfusionCounts cc;
  const long long total = static_cast<long long>(pred.height) * pred.width;
  for (int c : classes) cc.per_class[c] = {};
  for (std::size_t i = 0; i < pred.classes.size(); ++i) {
    int p = pred.classes[i];
    int g = gt.classes[i];
    if (p == g) {
      auto it = cc.per_class.find(p);
      if (it != cc.per_class.end()) ++it->second.tp;
    } else {
      auto ip = cc.per_class.find(p);
      if (ip != cc.per_class.end()) ++ip->second.fp;
      auto ig = cc.per_class.find(g);
      if (ig != cc.per_class.end()) ++ig->second.fn;
    }
  }
  for (auto& [c, k] : cc.per_class) k.tn = total - k.tp - k.fp - k.fn;
  return cc;
}

/// Mean over classes of per-class binary accuracy (tp+tn)/total.
inline double accuracy(const ConfusionCounts& cc) {
  if (cc.per_class.empty()) throw std::invalid_argument("empty confusion counts");
  double sum = 0.0;
  for (const auto& [c, k] : cc.per_class) {
    sum += static_cast<double>(k.tp + k.tn) / static_cast<double>(k.total());
  }
  return sum / static_cast<double>(cc.per_class.size());
}

/// Mean over eligible classes of tp/(tp+fp+fn). A class absent from both
/// maps (tp+fp+fn = 0) has no defined IoU and is left out of the mean.
inline double mean_iou(const ConfusionCounts& cc) {
  double sum = 0.0;
  int eligible = 0;
  for (const auto& [c, k] : cc.per_class) {
    long long denom = k.tp + k.fp + k.fn;
    if (denom == 0) continue;
    sum += static_cast<double>(k.tp) / static_cast<double>(denom);
    ++eligible;
  }
  if (eligible == 0) throw std::invalid_argument("no class has a defined IoU");
  return sum / eligible;
}

/// Mean absolute thickness error over the ground truth's layers. Layers
/// the prediction dropped count with thickness 0.
inline double thickness_mae(const ThicknessReport& pred, const ThicknessReport& gt) {
  if (gt.per_layer.empty()) throw std::invalid_argument("ground truth has no layers");
  double sum = 0.0;
  for (const auto& [id, t] : gt.per_layer) {
    auto it = pred.per_layer.find(id);
    double p = (it == pred.per_layer.end()) ? 0.0 : it->second;
    sum += std::abs(p - t);
  }
  return sum / static_cast<double>(gt.per_layer.size());
}

/// Layers present in the prediction but absent from the ground truth.
/// These do not enter the MAE.
inline std::vector<int> spurious_layers(const ThicknessReport& pred,
                                        const ThicknessReport& gt) {
  std::vector<int> out;
  for (const auto& [id, t] : pred.per_layer) {
    if (!gt.per_layer.count(id)) out.push_back(id);
  }
  return out;
}

inline std::set<int> layer_classes(const SemanticMap& s) {
  std::set<int> out;
  for (std::uint8_t c : s.classes) {
    if (c != 0) out.insert(c);
  }
  return out;
}

/// Keeps pairs whose ground truth has strictly more than min_layers
/// distinct layer classes.
inline std::vector<std::pair<SemanticMap, SemanticMap>> filter_by_layer_count(
    const std::vector<std::pair<SemanticMap, SemanticMap>>& items, int min_layers) {
  std::vector<std::pair<SemanticMap, SemanticMap>> out;
  for (const auto& item : items) {
    if (static_cast<int>(layer_classes(item.second).size()) > min_layers) {
      out.push_back(item);
    }
  }
  return out;
}

/// Restricts both maps to the n shallowest layer classes of the ground
/// truth (shallowest = smallest topmost row); everything else becomes
/// background in both maps.
inline std::pair<SemanticMap, SemanticMap> restrict_top_n(const SemanticMap& pred,
                                                          const SemanticMap& gt,
                                                          int n) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  std::map<int, int> first_row;  // class -> topmost gt row
  for (int row = 0; row < gt.height; ++row) {
    for (int col = 0; col < gt.width; ++col) {
      int c = gt.at(row, col);
      if (c != 0) first_row.try_emplace(c, row);
    }
  }
  std::vector<std::pair<int, int>> by_depth(first_row.begin(), first_row.end());
  std::sort(by_depth.begin(), by_depth.end(),
            [](const auto& a, const auto& b) {
              return a.second != b.second ? a.second < b.second : a.first < b.first;
            });
  std::set<int> keep;
  for (int i = 0; i < std::min<int>(n, by_depth.size()); ++i) {
    keep.insert(by_depth[i].first);
  }
  auto mask = [&](SemanticMap s) {
    for (auto& c : s.classes) {
      if (c != 0 && !keep.count(c)) c = 0;
    }
    return s;
  };
  return {mask(pred), mask(gt)};
}

struct EvalOptions {
  int min_layers = 0;       // strict lower bound on gt layer count (0 = no filter)
  int top_n = 0;            // 0 = keep all layers
  bool fixed_universe = false;  // average Eqs. over all schema classes, not gt classes
  LabelSchema schema;
};

/// Per-image report: accuracy and mean IoU over the ground truth's classes
/// (background included), thickness MAE over its layer classes.
inline EvalReport evaluate_pair(const SemanticMap& pred, const SemanticMap& gt,
                                const EvalOptions& opt = {}) {
  SemanticMap p = pred, g = gt;
  std::string filters = "none";
  if (opt.top_n > 0) {
    auto [rp, rg] = restrict_top_n(pred, gt, opt.top_n);
    p = std::move(rp);
    g = std::move(rg);
    filters = "top-" + std::to_string(opt.top_n);
  }
  std::set<int> classes;
  if (opt.fixed_universe) {
    for (int c = 0; c < opt.schema.num_classes; ++c) classes.insert(c);
  } else {
    classes = layer_classes(g);
    classes.insert(opt.schema.background_id);
  }
  ConfusionCounts cc = confusion(p, g, classes);
  EvalReport r;
  r.accuracy = accuracy(cc);
  r.mean_iou = mean_iou(cc);
  r.thickness_mae_px = thickness_mae(mean_thickness(p), mean_thickness(g));
  r.k_classes_used = static_cast<int>(classes.size());
  r.filters_applied = filters;
  return r;
}

/// Unweighted per-image mean of each metric.
inline EvalReport aggregate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to aggregate");
  EvalReport out;
  for (const EvalReport& r : reports) {
    out.accuracy += r.accuracy;
    out.mean_iou += r.mean_iou;
    out.thickness_mae_px += r.thickness_mae_px;
    out.k_classes_used = std::max(out.k_classes_used, r.k_classes_used);
  }
  const double n = static_cast<double>(reports.size());
  out.accuracy /= n;
  out.mean_iou /= n;
  out.thickness_mae_px /= n;
  out.filters_applied = reports.front().filters_applied;
  return out;
}

}  // namespace layerkit
