#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "layerkit/core.hpp"

namespace layerkit {

struct SchedulePoint {
  int step = 0;
  double fraction = 0.0;
  double learning_rate = 0.0;
  double momentum = 0.0;
};

enum class RampShape { linear, cosine };

struct PolyParams {
  double base_lr = 0.01;
  double power = 1.0;
  double momentum = 0.9;
};

struct OneCycleParams {
  double base_lr = 0.01;
  double warmup_fraction = 0.3;
  double start_div = 10.0;
  double final_div = 4.0;
  double momentum_high = 0.9;
  double momentum_low = 0.8;
  RampShape shape = RampShape::linear;
};

namespace detail {
inline double interpolate(double from, double to, double t, RampShape shape) {
  if (shape == RampShape::cosine) {
    t = (1.0 - std::cos(std::numbers::pi * t)) / 2.0;
  }
  return from + (to - from) * t;
}
}  // namespace detail

/// Polynomial decay: lr = base_lr * (1 - fraction)^power, constant momentum.
/// power 1 is the straight linear ramp to zero.
inline std::pair<double, double> poly(double fraction, const PolyParams& p = {}) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw std::invalid_argument("fraction must be in [0,1]");
  }
  if (p.base_lr <= 0.0 || p.power <= 0.0) {
    throw std::invalid_argument("base_lr and power must be positive");
  }
  return {p.base_lr * std::pow(1.0 - fraction, p.power), p.momentum};
}

/// One-cycle policy: lr ramps from base/start_div up to base over the
/// warmup fraction of training, then back down to base/final_div; momentum
/// mirrors it (high -> low -> high).
inline std::pair<double, double> onecycle(double fraction, const OneCycleParams& p = {}) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw std::invalid_argument("fraction must be in [0,1]");
  }
  if (p.base_lr <= 0.0 || p.start_div < 1.0 || p.final_div < 1.0 ||
      p.warmup_fraction <= 0.0 || p.warmup_fraction >= 1.0) {
    throw std::invalid_argument("invalid one-cycle parameters");
  }
  if (fraction <= p.warmup_fraction) {
    double t = fraction / p.warmup_fraction;
    return {detail::interpolate(p.base_lr / p.start_div, p.base_lr, t, p.shape),
            detail::interpolate(p.momentum_high, p.momentum_low, t, p.shape)};
  }
  double t = (fraction - p.warmup_fraction) / (1.0 - p.warmup_fraction);
  return {detail::interpolate(p.base_lr, p.base_lr / p.final_div, t, p.shape),
          detail::interpolate(p.momentum_low, p.momentum_high, t, p.shape)};
}

enum class Policy { poly, onecycle };

struct SchedParams {
  PolyParams poly;
  OneCycleParams onecycle;
};

inline std::pair<double, double> evaluate_policy(Policy policy, double fraction,
                                                 const SchedParams& params = {}) {
  return policy == Policy::poly ? poly(fraction, params.poly)
                                : onecycle(fraction, params.onecycle);
}

/// Renders a policy as a per-step table; fraction = step / (total_steps - 1).
inline std::vector<SchedulePoint> tabulate(Policy policy, int total_steps,
                                           const SchedParams& params = {}) {
  if (total_steps < 2) throw std::invalid_argument("total_steps must be >= 2");
  std::vector<SchedulePoint> out;
  out.reserve(total_steps);
  for (int step = 0; step < total_steps; ++step) {
    double fraction = static_cast<double>(step) / (total_steps - 1);
    auto [lr, momentum] = evaluate_policy(policy, fraction, params);
    out.push_back({step, fraction, lr, momentum});
  }
  return out;
}

}  // namespace layerkit
