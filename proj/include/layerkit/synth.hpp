#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "layerkit/core.hpp"
#include "layerkit/rng.hpp"

namespace layerkit {

/// Knobs for the synthetic radargram generator. Defaults give a small,
/// clearly layered image with mild speckle.
struct SynthConfig {
  int height = 256;
  int width = 256;
  int num_layers = 8;
  double mean_spacing_px = 20.0;
  double spacing_jitter = 0.2;            // relative spread of layer spacings
  double undulation_amplitude_px = 3.0;
  double undulation_wavelength_px = 96.0;
  double contrast_decay = 0.85;           // band amplitude factor per layer
  double noise_level = 0.15;              // multiplicative speckle amplitude
  double perturbation_rate = 0.02;        // per-column vertical streak probability
  double annotation_dropout = 0.0;        // probability a layer is emitted incomplete
  std::uint64_t seed = 0;

  bool valid() const {
    return height > 0 && width > 0 && num_layers > 0 && mean_spacing_px > 0.0 &&
           spacing_jitter >= 0.0 && undulation_amplitude_px >= 0.0 &&
           undulation_wavelength_px > 0.0 && contrast_decay >= 0.0 &&
           contrast_decay <= 1.0 && noise_level >= 0.0 &&
           perturbation_rate >= 0.0 && perturbation_rate <= 1.0 &&
           annotation_dropout >= 0.0 && annotation_dropout < 1.0 &&
           num_layers * mean_spacing_px < height;
  }
};

struct SynthResult {
  Radargram image;
  LayerMap ground_truth;  // every layer complete
  LayerMap annotation;    // some layers truncated, per annotation_dropout
};

namespace detail {

inline constexpr double kBandAmplitude = 200.0;
inline constexpr double kBandSigmaPx = 1.2;
inline constexpr double kGlowFactor = 0.35;   // scattering below each reflector
inline constexpr double kBackgroundLevel = 5.0;

}  // namespace detail

/// Generates one radargram with its full ground truth and a degraded
/// annotation. Layer curves are jittered cumulative spacings plus a
/// three-sinusoid undulation; each layer paints a bright band whose
/// amplitude decays with depth, with a dimmer glow filling the region
/// down to the next layer. Fully deterministic per seed.
inline SynthResult generate(const SynthConfig& cfg) {
  if (!cfg.valid()) throw std::invalid_argument("invalid synth config");
  Rng rng(cfg.seed);

  // Base depths: cumulative jittered spacings from the top of the image.
  std::vector<double> depth(cfg.num_layers);
  double d = 0.0;
  for (int i = 0; i < cfg.num_layers; ++i) {
    d += cfg.mean_spacing_px * (1.0 + cfg.spacing_jitter * rng.symmetric());
    depth[i] = d;
  }

  // Undulation: three sinusoids at wavelengths w, w/2, w/3 with random
  // phases per layer.
  struct Wave {
    double amp, freq, phase;
  };
  std::vector<std::array<Wave, 3>> waves(cfg.num_layers);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int i = 0; i < cfg.num_layers; ++i) {
    const double split[3] = {0.5, 0.3, 0.2};
    for (int k = 0; k < 3; ++k) {
      waves[i][k] = {cfg.undulation_amplitude_px * split[k],
                     two_pi * (k + 1) / cfg.undulation_wavelength_px,
                     rng.uniform(0.0, two_pi)};
    }
  }

  // Integer curves, forced strictly increasing down the stack.
  std::vector<std::vector<int>> rows(cfg.num_layers, std::vector<int>(cfg.width));
  for (int col = 0; col < cfg.width; ++col) {
    int prev = -1;
    for (int i = 0; i < cfg.num_layers; ++i) {
      double y = depth[i];
      for (const Wave& w : waves[i]) y += w.amp * std::sin(w.freq * col + w.phase);
      int r = std::clamp(static_cast<int>(std::lround(y)), 0, cfg.height - 1);
      r = std::max(r, prev + 1);
      if (r > cfg.height - 1) {
        throw std::runtime_error("layers overflow image height");
      }
      rows[i][col] = r;
      prev = r;
    }
  }

  // Paint: background level, per-layer Gaussian band plus trailing glow.
  std::vector<double> img(static_cast<std::size_t>(cfg.height) * cfg.width,
                          detail::kBackgroundLevel);
  auto px = [&](int r, int c) -> double& {
    return img[static_cast<std::size_t>(r) * cfg.width + c];
  };
  for (int i = 0; i < cfg.num_layers; ++i) {
    const double amp = detail::kBandAmplitude * std::pow(cfg.contrast_decay, i);
    for (int col = 0; col < cfg.width; ++col) {
      const int r0 = rows[i][col];
      for (int dr = -3; dr <= 3; ++dr) {
        int r = r0 + dr;
        if (r < 0 || r >= cfg.height) continue;
        px(r, col) += amp * std::exp(-0.5 * dr * dr /
                                     (detail::kBandSigmaPx * detail::kBandSigmaPx));
      }
      const int glow_end = (i + 1 < cfg.num_layers) ? rows[i + 1][col] : cfg.height;
      for (int r = r0 + 1; r < glow_end; ++r) {
        px(r, col) += detail::kGlowFactor * amp;
      }
    }
  }

  // Multiplicative speckle, then per-column streak anomalies.
  for (double& v : img) v *= 1.0 + cfg.noise_level * rng.symmetric();
  for (int col = 0; col < cfg.width; ++col) {
    if (rng.bernoulli(cfg.perturbation_rate)) {
      double gain = rng.uniform(0.6, 1.4);
      for (int r = 0; r < cfg.height; ++r) px(r, col) *= gain;
    }
  }

  SynthResult out;
  out.image.height = cfg.height;
  out.image.width = cfg.width;
  out.image.pixels.resize(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    out.image.pixels[i] =
        static_cast<std::uint8_t>(std::clamp(std::lround(img[i]), 0l, 255l));
  }

  out.ground_truth.width = cfg.width;
  for (int i = 0; i < cfg.num_layers; ++i) {
    LayerMap::Curve curve(cfg.width);
    for (int col = 0; col < cfg.width; ++col) curve[col] = rows[i][col];
    out.ground_truth.layers.emplace(i + 1, std::move(curve));
  }

  // Degrade: each layer independently loses a random column span. The span
  // never covers the whole width, so every emitted layer stays representable.
  out.annotation = out.ground_truth;
  if (cfg.width > 1) {
    for (auto& [id, curve] : out.annotation.layers) {
      if (!rng.bernoulli(cfg.annotation_dropout)) continue;
      int span = 1 + static_cast<int>(rng.below(cfg.width - 1));
      int start = static_cast<int>(rng.below(cfg.width - span + 1));
      for (int col = start; col < start + span; ++col) curve[col].reset();
    }
  }
  return out;
}

/// `count` independent instances; instance j uses seed cfg.seed + j.
inline std::vector<SynthResult> generate_corpus(const SynthConfig& cfg, int count) {
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  std::vector<SynthResult> out;
  out.reserve(count);
  for (int j = 0; j < count; ++j) {
    SynthConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(j);
    out.push_back(generate(c));
  }
  return out;
}

}  // namespace layerkit
