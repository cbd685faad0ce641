// layerkit command-line front end: synthetic data generation, label
// preprocessing, layer reconstruction, thickness estimation, evaluation,
// schedule tables, and toy training/prediction.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "layerkit/core.hpp"
#include "layerkit/dataio.hpp"
#include "layerkit/labelproc.hpp"
#include "layerkit/layerize.hpp"
#include "layerkit/metrics.hpp"
#include "layerkit/parallel.hpp"
#include "layerkit/sched.hpp"
#include "layerkit/synth.hpp"
#include "layerkit/tinyseg.hpp"

namespace fs = std::filesystem;
using namespace layerkit;

namespace {

/// Plain decimal rendering with trailing zeros trimmed (schedule CSVs must
/// not use scientific notation).
std::string decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12f", v);
  std::string s(buf);
  while (s.size() > 1 && s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

std::string index_name(const std::string& stem, int index, const std::string& suffix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return stem + "_" + buf + suffix;
}

struct SynthArgs {
  std::string out_dir;
  int count = 1;
  std::string split = "train";
  SynthConfig cfg;
};

int run_synth(const SynthArgs& a) {
  fs::create_directories(a.out_dir);
  CorpusManifest manifest;
  manifest.entries.resize(a.count);
  std::mutex err_mutex;
  std::string first_error;
  parallel_for(a.count, [&](std::size_t i) {
    try {
      SynthConfig cfg = a.cfg;
      cfg.seed = a.cfg.seed + i;
      SynthResult r = generate(cfg);
      const std::string image = index_name("image", static_cast<int>(i), ".pgm");
      const std::string layers = index_name("layers", static_cast<int>(i), ".csv");
      const std::string full = index_name("layers_full", static_cast<int>(i), ".csv");
      write_pgm((fs::path(a.out_dir) / image).string(), r.image);
      write_layers_csv((fs::path(a.out_dir) / layers).string(), r.annotation);
      write_layers_csv((fs::path(a.out_dir) / full).string(), r.ground_truth);
      manifest.entries[i] = {image, layers, "", a.split};
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (first_error.empty()) first_error = e.what();
    }
  });
  if (!first_error.empty()) throw std::runtime_error(first_error);
  write_manifest((fs::path(a.out_dir) / "manifest.csv").string(), manifest);
  std::cout << "wrote " << a.count << " images to " << a.out_dir << "\n";
  return 0;
}

struct PreprocessArgs {
  std::string image_path, layers_path, manifest_path;
  std::string out_dir;
};

void preprocess_one(const std::string& image_path, const std::string& layers_path,
                    const std::string& out_dir, const std::string& stem,
                    const std::string& split, CorpusManifest& crops_manifest,
                    std::mutex& manifest_mutex) {
  Radargram image = read_pgm_radargram(image_path);
  LayerMap layers = read_layers_csv(layers_path);
  auto pairs = preprocess(image, layers);
  std::vector<ManifestEntry> local;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    char idx[16];
    std::snprintf(idx, sizeof(idx), "%02zu", k);
    const std::string base = stem + "_crop" + idx;
    const std::string img = base + "_image.pgm";
    const std::string lay = base + "_layers.csv";
    const std::string sem = base + "_semantic.pgm";
    write_pgm((fs::path(out_dir) / img).string(), pairs[k].first.image);
    write_layers_csv((fs::path(out_dir) / lay).string(), pairs[k].first.layers);
    write_pgm((fs::path(out_dir) / sem).string(), pairs[k].second);
    local.push_back({img, lay, sem, split});
  }
  std::lock_guard<std::mutex> lock(manifest_mutex);
  crops_manifest.entries.insert(crops_manifest.entries.end(), local.begin(),
                                local.end());
}

int run_preprocess(const PreprocessArgs& a) {
  fs::create_directories(a.out_dir);
  CorpusManifest crops;
  std::mutex manifest_mutex;
  if (!a.manifest_path.empty()) {
    CorpusManifest m = read_manifest(a.manifest_path);
    const fs::path base = fs::path(a.manifest_path).parent_path();
    std::mutex err_mutex;
    std::string first_error;
    parallel_for(m.entries.size(), [&](std::size_t i) {
      try {
        const ManifestEntry& e = m.entries[i];
        const std::string stem = fs::path(e.image_path).stem().string();
        preprocess_one((base / e.image_path).string(), (base / e.layers_path).string(),
                       a.out_dir, stem, e.split, crops, manifest_mutex);
      } catch (const std::exception& ex) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (first_error.empty()) first_error = ex.what();
      }
    });
    if (!first_error.empty()) throw std::runtime_error(first_error);
  } else {
    const std::string stem = fs::path(a.image_path).stem().string();
    preprocess_one(a.image_path, a.layers_path, a.out_dir, stem, "train", crops,
                   manifest_mutex);
  }
  // Deterministic manifest order regardless of worker interleaving.
  std::sort(crops.entries.begin(), crops.entries.end(),
            [](const ManifestEntry& x, const ManifestEntry& y) {
              return x.image_path < y.image_path;
            });
  write_manifest((fs::path(a.out_dir) / "crops_manifest.csv").string(), crops);
  std::cout << "wrote " << crops.entries.size() << " crops to " << a.out_dir << "\n";
  return 0;
}

int run_evaluate(const std::vector<std::string>& pred_paths,
                 const std::vector<std::string>& gt_paths, int min_layers, int top_n,
                 const std::string& units, double cm_per_px, bool fixed_universe,
                 const std::string& out_path) {
  if (pred_paths.size() != gt_paths.size() || pred_paths.empty()) {
    throw std::runtime_error("--pred and --gt must list the same number of files");
  }
  std::vector<std::pair<SemanticMap, SemanticMap>> pairs;
  for (std::size_t i = 0; i < pred_paths.size(); ++i) {
    pairs.emplace_back(read_pgm_semantic(pred_paths[i]),
                       read_pgm_semantic(gt_paths[i]));
  }
  if (min_layers > 0) pairs = filter_by_layer_count(pairs, min_layers);
  if (pairs.empty()) throw std::runtime_error("no image pairs left after filtering");

  EvalOptions opt;
  opt.top_n = top_n;
  opt.fixed_universe = fixed_universe;
  std::vector<EvalReport> per_image(pairs.size());
  std::mutex err_mutex;
  std::string first_error;
  parallel_for(pairs.size(), [&](std::size_t i) {
    try {
      per_image[i] = evaluate_pair(pairs[i].first, pairs[i].second, opt);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (first_error.empty()) first_error = e.what();
    }
  });
  if (!first_error.empty()) throw std::runtime_error(first_error);

  EvalReport agg = aggregate(per_image);
  std::string filters = "min-layers=" + std::to_string(min_layers);
  if (top_n > 0) filters += ";top-" + std::to_string(top_n);
  agg.filters_applied = filters;
  for (EvalReport& r : per_image) r.filters_applied = filters;
  if (!out_path.empty()) write_report_json(out_path, agg, per_image);

  const double mae =
      units == "cm" ? agg.thickness_mae_px * cm_per_px : agg.thickness_mae_px;
  std::cout << "images: " << pairs.size() << "\naccuracy: " << agg.accuracy
            << "\nmean_iou: " << agg.mean_iou << "\nthickness_mae: " << mae << " "
            << units << "\n";
  return 0;
}

int run_schedule(const std::string& policy_name, int steps, double base_lr,
                 double power, const std::string& shape_name, double warmup,
                 const std::string& out_path) {
  SchedParams params;
  params.poly.base_lr = base_lr;
  params.poly.power = power;
  params.onecycle.base_lr = base_lr;
  params.onecycle.warmup_fraction = warmup;
  params.onecycle.shape = shape_name == "cosine" ? RampShape::cosine : RampShape::linear;
  Policy policy = policy_name == "onecycle" ? Policy::onecycle : Policy::poly;

  std::string csv = "step,fraction,lr,momentum\n";
  for (const SchedulePoint& p : tabulate(policy, steps, params)) {
    csv += std::to_string(p.step) + "," + decimal(p.fraction) + "," +
           decimal(p.learning_rate) + "," + decimal(p.momentum) + "\n";
  }
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    detail::atomic_write(out_path, csv);
  }
  return 0;
}

struct TrainArgs {
  std::string manifest_path, out_path, history_path;
  int num_classes = 28;
  TrainConfig cfg;
};

int run_train(const TrainArgs& a) {
  CorpusManifest m = read_manifest(a.manifest_path);
  const fs::path base = fs::path(a.manifest_path).parent_path();
  std::vector<std::pair<Radargram, SemanticMap>> corpus;
  for (const ManifestEntry& e : m.entries) {
    if (e.semantic_path.empty()) {
      throw std::runtime_error("manifest entry " + e.image_path +
                               " has no semantic label path; run preprocess first");
    }
    corpus.emplace_back(read_pgm_radargram((base / e.image_path).string()),
                        read_pgm_semantic((base / e.semantic_path).string()));
  }
  TinyNet net = init(a.num_classes, a.cfg.seed);
  std::vector<double> history = train(net, corpus, a.cfg);
  save_weights(net, a.out_path);
  if (!a.history_path.empty()) {
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
      csv += std::to_string(i) + "," + decimal(history[i]) + "\n";
    }
    detail::atomic_write(a.history_path, csv);
  }
  std::cout << "trained " << history.size() << " steps, final loss "
            << (history.empty() ? 0.0 : history.back()) << "\n";
  return 0;
}

std::string svg_polyline(const std::vector<std::pair<double, double>>& pts,
                         const std::string& color) {
  std::string s = "  <polyline fill=\"none\" stroke=\"" + color +
                  "\" stroke-width=\"1\" points=\"";
  for (const auto& [x, y] : pts) s += decimal(x) + "," + decimal(y) + " ";
  s += "\"/>\n";
  return s;
}

void write_svg(const std::string& path, double width, double height,
               const std::vector<std::vector<std::pair<double, double>>>& series) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                  decimal(width) + "\" height=\"" + decimal(height) + "\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    s += svg_polyline(series[i], colors[i % 8]);
  }
  s += "</svg>\n";
  detail::atomic_write(path, s);
}

int run_plot_data(const std::string& kind, const std::string& policy, int steps,
                  double base_lr, const std::string& semantic_path,
                  const std::string& layers_path, const std::string& out_path,
                  const std::string& svg_path, double cm_per_px) {
  if (kind == "schedule") {
    int rc = run_schedule(policy, steps, base_lr, 1.0, "linear", 0.3, out_path);
    if (!svg_path.empty()) {
      SchedParams params;
      params.poly.base_lr = base_lr;
      params.onecycle.base_lr = base_lr;
      Policy pol = policy == "onecycle" ? Policy::onecycle : Policy::poly;
      std::vector<std::pair<double, double>> lr_pts, mom_pts;
      for (const SchedulePoint& p : tabulate(pol, steps, params)) {
        lr_pts.emplace_back(p.fraction * 400.0, 200.0 - p.learning_rate / base_lr * 180.0);
        mom_pts.emplace_back(p.fraction * 400.0, 200.0 - p.momentum * 180.0);
      }
      write_svg(svg_path, 400, 200, {lr_pts, mom_pts});
    }
    return rc;
  }
  if (kind == "thickness-per-layer") {
    SemanticMap s = read_pgm_semantic(semantic_path);
    ThicknessReport r = mean_thickness(s);
    r.unit_cm_per_pixel = cm_per_px;
    auto cm = thickness_cm(r);
    std::string csv = "layer_id,thickness_px,thickness_cm\n";
    for (const auto& [id, t] : r.per_layer) {
      csv += std::to_string(id) + "," + decimal(t) + "," + decimal(cm.at(id)) + "\n";
    }
    detail::atomic_write(out_path, csv);
    return 0;
  }
  if (kind == "layer-overlay") {
    LayerMap m = read_layers_csv(layers_path);
    std::string csv = "layer_id,col,row\n";
    std::vector<std::vector<std::pair<double, double>>> series;
    for (const auto& [id, curve] : m.layers) {
      std::vector<std::pair<double, double>> pts;
      for (int col = 0; col < m.width; ++col) {
        if (curve[col]) {
          csv += std::to_string(id) + "," + std::to_string(col) + "," +
                 std::to_string(*curve[col]) + "\n";
          pts.emplace_back(col, *curve[col]);
        }
      }
      series.push_back(std::move(pts));
    }
    detail::atomic_write(out_path, csv);
    if (!svg_path.empty()) {
      double max_row = 1.0;
      for (const auto& s : series) {
        for (const auto& [x, y] : s) max_row = std::max(max_row, y);
      }
      write_svg(svg_path, m.width, max_row + 10.0, series);
    }
    return 0;
  }
  throw std::runtime_error("unknown plot kind '" + kind + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layerkit: radar echogram layer pipeline"};
  app.require_subcommand(1);

  // synth
  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic radargrams");
  synth_cmd->add_option("--out", synth_args.out_dir, "output directory")->required();
  synth_cmd->add_option("--count", synth_args.count, "number of images");
  synth_cmd->add_option("--seed", synth_args.cfg.seed, "base seed");
  synth_cmd->add_option("--height", synth_args.cfg.height, "image height");
  synth_cmd->add_option("--width", synth_args.cfg.width, "image width");
  synth_cmd->add_option("--layers", synth_args.cfg.num_layers, "layer count");
  synth_cmd->add_option("--mean-spacing", synth_args.cfg.mean_spacing_px, "mean spacing px");
  synth_cmd->add_option("--spacing-jitter", synth_args.cfg.spacing_jitter, "spacing jitter");
  synth_cmd->add_option("--undulation-amp", synth_args.cfg.undulation_amplitude_px,
                        "undulation amplitude px");
  synth_cmd->add_option("--undulation-wavelength",
                        synth_args.cfg.undulation_wavelength_px, "undulation wavelength px");
  synth_cmd->add_option("--contrast-decay", synth_args.cfg.contrast_decay,
                        "band amplitude decay per layer");
  synth_cmd->add_option("--noise", synth_args.cfg.noise_level, "speckle noise level");
  synth_cmd->add_option("--perturbation-rate", synth_args.cfg.perturbation_rate,
                        "vertical streak probability");
  synth_cmd->add_option("--dropout", synth_args.cfg.annotation_dropout,
                        "probability a layer annotation is truncated");
  synth_cmd->add_option("--split", synth_args.split, "manifest split tag");

  // preprocess
  PreprocessArgs pre_args;
  auto* pre_cmd = app.add_subcommand("preprocess", "clean labels, crop sets, fill semantics");
  pre_cmd->add_option("--image", pre_args.image_path, "radargram PGM");
  pre_cmd->add_option("--layers", pre_args.layers_path, "layer annotation CSV");
  pre_cmd->add_option("--manifest", pre_args.manifest_path, "corpus manifest CSV");
  pre_cmd->add_option("--out", pre_args.out_dir, "output directory")->required();

  // layerize
  std::string lz_semantic, lz_out;
  auto* lz_cmd = app.add_subcommand("layerize", "semantic map -> discrete layer curves");
  lz_cmd->add_option("--semantic", lz_semantic, "semantic PGM")->required();
  lz_cmd->add_option("--out", lz_out, "output layers CSV")->required();

  // thickness
  std::string th_semantic, th_out, th_units = "px";
  double cm_per_px = 4.0;
  auto* th_cmd = app.add_subcommand("thickness", "per-layer mean thickness");
  th_cmd->add_option("--semantic", th_semantic, "semantic PGM")->required();
  th_cmd->add_option("--out", th_out, "output CSV")->required();
  th_cmd->add_option("--units", th_units, "px or cm")->check(CLI::IsMember({"px", "cm"}));
  th_cmd->add_option("--cm-per-pixel", cm_per_px, "vertical resolution");

  // evaluate
  std::vector<std::string> ev_pred, ev_gt;
  int ev_min_layers = 0, ev_top_n = 0;
  std::string ev_units = "px", ev_out;
  bool ev_fixed = false;
  auto* ev_cmd = app.add_subcommand("evaluate", "accuracy, mean IoU, thickness MAE");
  ev_cmd->add_option("--pred", ev_pred, "predicted semantic PGMs")->required();
  ev_cmd->add_option("--gt", ev_gt, "ground truth semantic PGMs")->required();
  ev_cmd->add_option("--min-layers", ev_min_layers,
                     "keep images with strictly more layers than this");
  ev_cmd->add_option("--top-n", ev_top_n, "restrict to the n shallowest layers");
  ev_cmd->add_option("--units", ev_units, "px or cm")->check(CLI::IsMember({"px", "cm"}));
  ev_cmd->add_option("--cm-per-pixel", cm_per_px, "vertical resolution");
  ev_cmd->add_flag("--fixed-universe", ev_fixed, "average over all 28 classes");
  ev_cmd->add_option("--out", ev_out, "report JSON path");

  // schedule
  std::string sc_policy = "poly", sc_shape = "linear", sc_out;
  int sc_steps = 200;
  double sc_base_lr = 0.01, sc_power = 1.0, sc_warmup = 0.3;
  auto* sc_cmd = app.add_subcommand("schedule", "emit lr/momentum schedule CSV");
  sc_cmd->add_option("--policy", sc_policy, "poly or onecycle")
      ->check(CLI::IsMember({"poly", "onecycle"}));
  sc_cmd->add_option("--steps", sc_steps, "table length")->check(CLI::Range(2, 1 << 24));
  sc_cmd->add_option("--base-lr", sc_base_lr, "peak learning rate");
  sc_cmd->add_option("--power", sc_power, "poly decay power");
  sc_cmd->add_option("--shape", sc_shape, "linear or cosine")
      ->check(CLI::IsMember({"linear", "cosine"}));
  sc_cmd->add_option("--warmup", sc_warmup, "onecycle warmup fraction");
  sc_cmd->add_option("--out", sc_out, "output CSV (default stdout)");

  // train
  TrainArgs tr_args;
  std::string tr_sched = "poly";
  auto* tr_cmd = app.add_subcommand("train", "train the toy per-pixel classifier");
  tr_cmd->add_option("--manifest", tr_args.manifest_path, "crops manifest CSV")->required();
  tr_cmd->add_option("--out", tr_args.out_path, "weights output path")->required();
  tr_cmd->add_option("--history", tr_args.history_path, "loss history CSV");
  tr_cmd->add_option("--classes", tr_args.num_classes, "class count incl. background");
  tr_cmd->add_option("--epochs", tr_args.cfg.epochs, "epochs");
  tr_cmd->add_option("--batch", tr_args.cfg.batch_size, "mini-batch size");
  tr_cmd->add_option("--lr", tr_args.cfg.base_lr, "base learning rate");
  tr_cmd->add_option("--weight-decay", tr_args.cfg.weight_decay, "weight decay");
  tr_cmd->add_option("--momentum", tr_args.cfg.momentum, "momentum (poly policy)");
  tr_cmd->add_option("--scheduler", tr_sched, "poly or onecycle")
      ->check(CLI::IsMember({"poly", "onecycle"}));
  tr_cmd->add_option("--seed", tr_args.cfg.seed, "init + shuffle seed");
  tr_cmd->add_flag("--ignore-background", tr_args.cfg.ignore_background,
                   "exclude background pixels from the loss");

  // predict
  std::string pd_weights, pd_image, pd_out;
  auto* pd_cmd = app.add_subcommand("predict", "per-pixel argmax prediction");
  pd_cmd->add_option("--weights", pd_weights, "TSEG1 weights file")->required();
  pd_cmd->add_option("--image", pd_image, "radargram PGM")->required();
  pd_cmd->add_option("--out", pd_out, "semantic PGM output")->required();

  // plot-data
  std::string pl_kind, pl_policy = "poly", pl_semantic, pl_layers, pl_out, pl_svg;
  int pl_steps = 200;
  double pl_base_lr = 0.01;
  auto* pl_cmd = app.add_subcommand("plot-data", "plot-ready CSV/SVG series");
  pl_cmd->add_option("--kind", pl_kind, "schedule | thickness-per-layer | layer-overlay")
      ->required();
  pl_cmd->add_option("--policy", pl_policy, "schedule policy");
  pl_cmd->add_option("--steps", pl_steps, "schedule table length");
  pl_cmd->add_option("--base-lr", pl_base_lr, "schedule peak lr");
  pl_cmd->add_option("--semantic", pl_semantic, "semantic PGM");
  pl_cmd->add_option("--layers", pl_layers, "layers CSV");
  pl_cmd->add_option("--out", pl_out, "output CSV")->required();
  pl_cmd->add_option("--svg", pl_svg, "optional SVG output");
  pl_cmd->add_option("--cm-per-pixel", cm_per_px, "vertical resolution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (pre_cmd->parsed()) {
      if (pre_args.manifest_path.empty() &&
          (pre_args.image_path.empty() || pre_args.layers_path.empty())) {
        std::cerr << "preprocess needs --manifest or both --image and --layers\n";
        return 1;
      }
      return run_preprocess(pre_args);
    }
    if (lz_cmd->parsed()) {
      write_layers_csv(lz_out, semantic_to_layers(read_pgm_semantic(lz_semantic)));
      return 0;
    }
    if (th_cmd->parsed()) {
      ThicknessReport r = mean_thickness(read_pgm_semantic(th_semantic));
      r.unit_cm_per_pixel = cm_per_px;
      std::string csv = "layer_id,thickness_" + th_units + "\n";
      auto values = th_units == "cm" ? thickness_cm(r) : r.per_layer;
      for (const auto& [id, t] : values) {
        csv += std::to_string(id) + "," + decimal(t) + "\n";
      }
      detail::atomic_write(th_out, csv);
      return 0;
    }
    if (ev_cmd->parsed()) {
      return run_evaluate(ev_pred, ev_gt, ev_min_layers, ev_top_n, ev_units, cm_per_px,
                          ev_fixed, ev_out);
    }
    if (sc_cmd->parsed()) {
      return run_schedule(sc_policy, sc_steps, sc_base_lr, sc_power, sc_shape,
                          sc_warmup, sc_out);
    }
    if (tr_cmd->parsed()) {
      tr_args.cfg.scheduler = tr_sched == "onecycle" ? Policy::onecycle : Policy::poly;
      return run_train(tr_args);
    }
    if (pd_cmd->parsed()) {
      TinyNet net = load_weights(pd_weights);
      write_pgm(pd_out, predict(net, read_pgm_radargram(pd_image)));
      return 0;
    }
    if (pl_cmd->parsed()) {
      return run_plot_data(pl_kind, pl_policy, pl_steps, pl_base_lr, pl_semantic,
                           pl_layers, pl_out, pl_svg, cm_per_px);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
