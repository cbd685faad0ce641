#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "layerkit/core.hpp"
#include "layerkit/rng.hpp"
#include "layerkit/sched.hpp"

namespace layerkit {

/// Channel-major feature map: data[c][y][x] flattened.
template <typename T>
struct FeatureMap {
  int channels = 0, height = 0, width = 0;
  std::vector<T> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, T(0)) {}

  T& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  T at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

template <typename T>
struct ConvLayer {
  int out_channels = 0, in_channels = 0, kernel = 0;
  std::vector<T> weights;  // [out][in][ky][kx]
  std::vector<T> biases;   // [out]

  ConvLayer() = default;
  ConvLayer(int out, int in, int k)
      : out_channels(out), in_channels(in), kernel(k),
        weights(static_cast<std::size_t>(out) * in * k * k, T(0)),
        biases(out, T(0)) {}

  T& w(int oc, int ic, int ky, int kx) {
    return weights[((static_cast<std::size_t>(oc) * in_channels + ic) * kernel + ky) *
                       kernel + kx];
  }
  T w(int oc, int ic, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(oc) * in_channels + ic) * kernel + ky) *
                       kernel + kx];
  }
};

/// Three-layer fully convolutional per-pixel classifier:
/// 3x3 conv 1->8 + ReLU, 3x3 conv 8->16 + ReLU, 1x1 conv 16->num_classes.
/// All convolutions zero-padded, so output dims equal input dims.
/// The same struct shape doubles as the gradient and velocity container.
template <typename T>
struct TinyNetT {
  static constexpr int kHidden1 = 8;
  static constexpr int kHidden2 = 16;

  ConvLayer<T> conv1, conv2, conv3;
  int num_classes = 0;

  static TinyNetT zeros(int num_classes) {
    TinyNetT n;
    n.num_classes = num_classes;
    n.conv1 = ConvLayer<T>(kHidden1, 1, 3);
    n.conv2 = ConvLayer<T>(kHidden2, kHidden1, 3);
    n.conv3 = ConvLayer<T>(num_classes, kHidden2, 1);
    return n;
  }
};

using TinyNet = TinyNetT<float>;

struct TrainConfig {
  double base_lr = 0.01;
  double weight_decay = 1e-4;
  double momentum = 0.9;       // used when the policy momentum is fixed
  int batch_size = 8;
  int epochs = 200;
  Policy scheduler = Policy::poly;
  std::uint64_t seed = 0;
  bool ignore_background = false;
};

namespace detail {

/// Fan-in-scaled uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)),
/// weights drawn in declaration order, biases zero.
template <typename T>
void init_conv(ConvLayer<T>& layer, Rng& rng) {
  const double fan_in =
      static_cast<double>(layer.in_channels) * layer.kernel * layer.kernel;
  const double limit = std::sqrt(6.0 / fan_in);
  for (T& w : layer.weights) w = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
void conv_forward(const ConvLayer<T>& layer, const FeatureMap<T>& in,
                  FeatureMap<T>& out) {
  const int pad = layer.kernel / 2;
  out = FeatureMap<T>(layer.out_channels, in.height, in.width);
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    for (int y = 0; y < in.height; ++y) {
      for (int x = 0; x < in.width; ++x) {
        T acc = layer.biases[oc];
        for (int ic = 0; ic < layer.in_channels; ++ic) {
          for (int ky = 0; ky < layer.kernel; ++ky) {
            int sy = y + ky - pad;
            if (sy < 0 || sy >= in.height) continue;
            for (int kx = 0; kx < layer.kernel; ++kx) {
              int sx = x + kx - pad;
              if (sx < 0 || sx >= in.width) continue;
              acc += layer.w(oc, ic, ky, kx) * in.at(ic, sy, sx);
            }
          }
        }
        out.at(oc, y, x) = acc;
      }
    }
  }
}

/// Accumulates weight/bias gradients and the gradient w.r.t. the input.
template <typename T>
void conv_backward(const ConvLayer<T>& layer, const FeatureMap<T>& in,
                   const FeatureMap<T>& d_out, ConvLayer<T>& d_layer,
                   FeatureMap<T>& d_in) {
  const int pad = layer.kernel / 2;
  d_in = FeatureMap<T>(in.channels, in.height, in.width);
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    for (int y = 0; y < in.height; ++y) {
      for (int x = 0; x < in.width; ++x) {
        const T g = d_out.at(oc, y, x);
        if (g == T(0)) continue;
        d_layer.biases[oc] += g;
        for (int ic = 0; ic < layer.in_channels; ++ic) {
          for (int ky = 0; ky < layer.kernel; ++ky) {
            int sy = y + ky - pad;
            if (sy < 0 || sy >= in.height) continue;
            for (int kx = 0; kx < layer.kernel; ++kx) {
              int sx = x + kx - pad;
              if (sx < 0 || sx >= in.width) continue;
              d_layer.w(oc, ic, ky, kx) += g * in.at(ic, sy, sx);
              d_in.at(ic, sy, sx) += g * layer.w(oc, ic, ky, kx);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void relu_inplace(FeatureMap<T>& m) {
  for (T& v : m.data) v = std::max(v, T(0));
}

template <typename T>
FeatureMap<T> to_input(const Radargram& image) {
  FeatureMap<T> in(1, image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    in.data[i] = static_cast<T>(image.pixels[i]) / T(255);  // scale to [0,1]
  }
  return in;
}

template <typename T>
struct ForwardCache {
  FeatureMap<T> input, act1, act2, scores;  // act1/act2 are post-ReLU
};

template <typename T>
ForwardCache<T> forward_cached(const TinyNetT<T>& net, const Radargram& image) {
  ForwardCache<T> c;
  c.input = to_input<T>(image);
  conv_forward(net.conv1, c.input, c.act1);
  relu_inplace(c.act1);
  conv_forward(net.conv2, c.act1, c.act2);
  relu_inplace(c.act2);
  conv_forward(net.conv3, c.act2, c.scores);
  return c;
}

}  // namespace detail

template <typename T>
TinyNetT<T> init(int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  TinyNetT<T> net = TinyNetT<T>::zeros(num_classes);
  Rng rng(seed);
  detail::init_conv(net.conv1, rng);
  detail::init_conv(net.conv2, rng);
  detail::init_conv(net.conv3, rng);
  return net;
}

inline TinyNet init(int num_classes, std::uint64_t seed) {
  return init<float>(num_classes, seed);
}

/// Per-pixel class scores, shape [num_classes, height, width].
template <typename T>
FeatureMap<T> forward(const TinyNetT<T>& net, const Radargram& image) {
  return detail::forward_cached(net, image).scores;
}

/// Mean softmax cross-entropy over counted pixels, with gradients for
/// every parameter via backpropagation.
template <typename T>
std::pair<double, TinyNetT<T>> loss_and_grad(const TinyNetT<T>& net,
                                             const Radargram& image,
                                             const SemanticMap& target,
                                             bool ignore_background = false) {
  if (target.height != image.height || target.width != image.width) {
    throw std::invalid_argument("target dimensions do not match image");
  }
  auto cache = detail::forward_cached(net, image);
  const int C = net.num_classes;
  const int H = image.height, W = image.width;

  long long counted = 0;
  for (std::uint8_t c : target.classes) {
    if (!(ignore_background && c == 0)) ++counted;
  }
  if (counted == 0) throw std::invalid_argument("no counted pixels in target");

  double loss = 0.0;
  FeatureMap<T> d_scores(C, H, W);
  std::vector<double> prob(C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int t = target.at(y, x);
      if (ignore_background && t == 0) continue;
      if (t >= C) throw std::invalid_argument("target class exceeds num_classes");
      double mx = cache.scores.at(0, y, x);
      for (int c = 1; c < C; ++c) mx = std::max<double>(mx, cache.scores.at(c, y, x));
      double denom = 0.0;
      for (int c = 0; c < C; ++c) {
        prob[c] = std::exp(static_cast<double>(cache.scores.at(c, y, x)) - mx);
        denom += prob[c];
      }
      loss -= std::log(prob[t] / denom);
      for (int c = 0; c < C; ++c) {
        double p = prob[c] / denom;
        d_scores.at(c, y, x) =
            static_cast<T>((p - (c == t ? 1.0 : 0.0)) / static_cast<double>(counted));
      }
    }
  }
  loss /= static_cast<double>(counted);

  TinyNetT<T> grads = TinyNetT<T>::zeros(C);
  FeatureMap<T> d_act2, d_act1, d_input;
  detail::conv_backward(net.conv3, cache.act2, d_scores, grads.conv3, d_act2);
  for (std::size_t i = 0; i < d_act2.data.size(); ++i) {
    if (cache.act2.data[i] <= T(0)) d_act2.data[i] = T(0);
  }
  detail::conv_backward(net.conv2, cache.act1, d_act2, grads.conv2, d_act1);
  for (std::size_t i = 0; i < d_act1.data.size(); ++i) {
    if (cache.act1.data[i] <= T(0)) d_act1.data[i] = T(0);
  }
  detail::conv_backward(net.conv1, cache.input, d_act1, grads.conv1, d_input);
  return {loss, std::move(grads)};
}

/// SGD with momentum and weight decay. Velocity update:
///   v = momentum * v - lr * (grad + weight_decay * w);  w += v
/// Biases are exempt from weight decay.
template <typename T>
void sgd_step(TinyNetT<T>& net, const TinyNetT<T>& grads, double lr, double momentum,
              double weight_decay, TinyNetT<T>& velocity) {
  auto step_layer = [&](ConvLayer<T>& w, const ConvLayer<T>& g, ConvLayer<T>& v) {
    if (w.weights.size() != g.weights.size() || w.weights.size() != v.weights.size()) {
      throw std::invalid_argument("parameter shape mismatch in sgd_step");
    }
    for (std::size_t i = 0; i < w.weights.size(); ++i) {
      v.weights[i] = static_cast<T>(momentum * v.weights[i] -
                                    lr * (g.weights[i] + weight_decay * w.weights[i]));
      w.weights[i] += v.weights[i];
    }
    for (std::size_t i = 0; i < w.biases.size(); ++i) {
      v.biases[i] = static_cast<T>(momentum * v.biases[i] - lr * g.biases[i]);
      w.biases[i] += v.biases[i];
    }
  };
  step_layer(net.conv1, grads.conv1, velocity.conv1);
  step_layer(net.conv2, grads.conv2, velocity.conv2);
  step_layer(net.conv3, grads.conv3, velocity.conv3);
}

/// Mini-batch SGD over the corpus. The learning rate and momentum follow
/// the configured policy at fraction step/(total_steps-1); shuffling is a
/// seeded Fisher-Yates, so runs are deterministic per seed.
template <typename T>
std::vector<double> train(TinyNetT<T>& net,
                          const std::vector<std::pair<Radargram, SemanticMap>>& corpus,
                          const TrainConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("empty training corpus");
  if (cfg.batch_size < 1 || cfg.epochs < 1) {
    throw std::invalid_argument("batch_size and epochs must be >= 1");
  }
  const int n = static_cast<int>(corpus.size());
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long long total_steps = static_cast<long long>(cfg.epochs) * steps_per_epoch;

  SchedParams sched;
  sched.poly.base_lr = cfg.base_lr;
  sched.poly.momentum = cfg.momentum;
  sched.onecycle.base_lr = cfg.base_lr;

  Rng rng(cfg.seed);
  TinyNetT<T> velocity = TinyNetT<T>::zeros(net.num_classes);
  std::vector<double> history;
  history.reserve(total_steps);

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  long long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (int b = 0; b < steps_per_epoch; ++b, ++step) {
      const int begin = b * cfg.batch_size;
      const int end = std::min(n, begin + cfg.batch_size);
      TinyNetT<T> grads = TinyNetT<T>::zeros(net.num_classes);
      double batch_loss = 0.0;
      for (int i = begin; i < end; ++i) {
        const auto& [image, target] = corpus[order[i]];
        auto [loss, g] = loss_and_grad(net, image, target, cfg.ignore_background);
        batch_loss += loss;
        auto add = [](ConvLayer<T>& a, const ConvLayer<T>& b) {
          for (std::size_t k = 0; k < a.weights.size(); ++k) a.weights[k] += b.weights[k];
          for (std::size_t k = 0; k < a.biases.size(); ++k) a.biases[k] += b.biases[k];
        };
        add(grads.conv1, g.conv1);
        add(grads.conv2, g.conv2);
        add(grads.conv3, g.conv3);
      }
      const T inv = T(1) / static_cast<T>(end - begin);
      auto scale = [&](ConvLayer<T>& a) {
        for (T& w : a.weights) w *= inv;
        for (T& bb : a.biases) bb *= inv;
      };
      scale(grads.conv1);
      scale(grads.conv2);
      scale(grads.conv3);

      const double fraction =
          total_steps > 1 ? static_cast<double>(step) / (total_steps - 1) : 0.0;
      auto [lr, momentum] = evaluate_policy(cfg.scheduler, fraction, sched);
      sgd_step(net, grads, lr, momentum, cfg.weight_decay, velocity);
      history.push_back(batch_loss / (end - begin));
    }
  }
  return history;
}

/// Per-pixel argmax of the class scores; ties break toward the smaller id.
template <typename T>
SemanticMap predict(const TinyNetT<T>& net, const Radargram& image) {
  FeatureMap<T> scores = forward(net, image);
  SemanticMap out;
  out.height = image.height;
  out.width = image.width;
  out.classes.resize(static_cast<std::size_t>(out.height) * out.width);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      int best = 0;
      T best_score = scores.at(0, y, x);
      for (int c = 1; c < net.num_classes; ++c) {
        if (scores.at(c, y, x) > best_score) {
          best_score = scores.at(c, y, x);
          best = c;
        }
      }
      out.at(y, x) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

/// Weights file: text header "TSEG1", one "name shape..." line per tensor,
/// a blank line, then the little-endian 32-bit floats in declaration order.
inline void save_weights(const TinyNet& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "TSEG1\n";
  auto header = [&](const char* name, const ConvLayer<float>& l) {
    f << name << ".weights " << l.out_channels << ' ' << l.in_channels << ' '
      << l.kernel << ' ' << l.kernel << '\n';
    f << name << ".biases " << l.out_channels << '\n';
  };
  header("conv1", net.conv1);
  header("conv2", net.conv2);
  header("conv3", net.conv3);
  f << '\n';
  auto dump = [&](const ConvLayer<float>& l) {
    f.write(reinterpret_cast<const char*>(l.weights.data()),
            static_cast<std::streamsize>(l.weights.size() * sizeof(float)));
    f.write(reinterpret_cast<const char*>(l.biases.data()),
            static_cast<std::streamsize>(l.biases.size() * sizeof(float)));
  };
  dump(net.conv1);
  dump(net.conv2);
  dump(net.conv3);
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline TinyNet load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "TSEG1") {
    throw std::runtime_error(path + ": bad magic, expected TSEG1");
  }
  struct TensorDecl {
    std::string name;
    std::vector<int> shape;
  };
  std::vector<TensorDecl> decls;
  while (std::getline(f, line) && !line.empty()) {
    std::istringstream ss(line);
    TensorDecl d;
    ss >> d.name;
    int dim;
    while (ss >> dim) d.shape.push_back(dim);
    if (d.name.empty() || d.shape.empty()) {
      throw std::runtime_error(path + ": malformed tensor header '" + line + "'");
    }
    decls.push_back(std::move(d));
  }
  if (decls.size() != 6 || decls[4].name != "conv3.weights") {
    throw std::runtime_error(path + ": unexpected tensor list");
  }
  const int num_classes = decls[4].shape.at(0);
  TinyNet net = TinyNet::zeros(num_classes);
  auto read_layer = [&](ConvLayer<float>& l) {
    f.read(reinterpret_cast<char*>(l.weights.data()),
           static_cast<std::streamsize>(l.weights.size() * sizeof(float)));
    f.read(reinterpret_cast<char*>(l.biases.data()),
           static_cast<std::streamsize>(l.biases.size() * sizeof(float)));
    if (!f) throw std::runtime_error(path + ": truncated weight payload");
  };
  read_layer(net.conv1);
  read_layer(net.conv2);
  read_layer(net.conv3);
  return net;
}

}  // namespace layerkit
