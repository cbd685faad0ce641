#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "layerkit/tinyseg.hpp"
#include "test_support.hpp"

using namespace layerkit;

namespace {

Radargram constant_image(int w, int h, std::uint8_t value) {
  Radargram img;
  img.width = w;
  img.height = h;
  img.pixels.assign(static_cast<std::size_t>(w) * h, value);
  return img;
}

SemanticMap constant_target(int w, int h, std::uint8_t cls) {
  SemanticMap s;
  s.width = w;
  s.height = h;
  s.classes.assign(static_cast<std::size_t>(w) * h, cls);
  return s;
}

template <typename T>
std::vector<std::pair<std::string, std::vector<T>*>> tensors(TinyNetT<T>& net) {
  return {{"conv1.w", &net.conv1.weights}, {"conv1.b", &net.conv1.biases},
          {"conv2.w", &net.conv2.weights}, {"conv2.b", &net.conv2.biases},
          {"conv3.w", &net.conv3.weights}, {"conv3.b", &net.conv3.biases}};
}

}  // namespace

TEST(Init, DeterministicPerSeed) {
  TinyNet a = init(5, 123);
  TinyNet b = init(5, 123);
  EXPECT_EQ(a.conv1.weights, b.conv1.weights);
  EXPECT_EQ(a.conv2.weights, b.conv2.weights);
  EXPECT_EQ(a.conv3.weights, b.conv3.weights);
}

TEST(Init, DifferentSeedsDiffer) {
  TinyNet a = init(5, 1);
  TinyNet b = init(5, 2);
  EXPECT_NE(a.conv1.weights, b.conv1.weights);
}

TEST(Init, FanInBound) {
  TinyNet net = init(28, 7);
  auto check = [](const ConvLayer<float>& l) {
    const double limit =
        std::sqrt(6.0 / (static_cast<double>(l.in_channels) * l.kernel * l.kernel));
    for (float w : l.weights) {
      EXPECT_LE(std::abs(w), limit);
    }
    for (float b : l.biases) EXPECT_EQ(b, 0.0f);
  };
  check(net.conv1);
  check(net.conv2);
  check(net.conv3);
}

TEST(Init, TooFewClassesThrows) {
  EXPECT_THROW(init(1, 0), std::invalid_argument);
}

TEST(Forward, ZeroNetworkGivesZeroScores) {
  TinyNet net = TinyNet::zeros(4);
  Radargram img = constant_image(6, 6, 128);
  auto scores = forward(net, img);
  for (float v : scores.data) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, SinglePixelHandComputation) {
  // 1x1 image: only the kernel centers see the pixel, so the net reduces
  // to a chain of scalar affine maps with ReLU.
  TinyNetT<double> net = TinyNetT<double>::zeros(2);
  for (int oc = 0; oc < 8; ++oc) net.conv1.w(oc, 0, 1, 1) = 0.5;
  for (int oc = 0; oc < 8; ++oc) net.conv1.biases[oc] = 0.1;
  for (int oc = 0; oc < 16; ++oc) {
    for (int ic = 0; ic < 8; ++ic) net.conv2.w(oc, ic, 1, 1) = 0.25;
  }
  for (int oc = 0; oc < 2; ++oc) {
    for (int ic = 0; ic < 16; ++ic) net.conv3.w(oc, ic, 0, 0) = oc == 0 ? 1.0 : -1.0;
  }
  Radargram img = constant_image(1, 1, 255);
  auto scores = forward(net, img);
  // input 1.0 -> conv1: 0.6 each of 8 channels -> conv2: 8*0.25*0.6 = 1.2
  // -> conv3: +-16*1.2
  EXPECT_NEAR(scores.at(0, 0, 0), 19.2, 1e-12);
  EXPECT_NEAR(scores.at(1, 0, 0), -19.2, 1e-12);
}

TEST(Forward, ShiftEquivarianceAwayFromBorders) {
  TinyNet net = init(3, 99);
  std::mt19937_64 gen(107);
  Radargram img = constant_image(12, 12, 50);
  std::uniform_int_distribution<int> px(0, 255);
  // random patch in the interior
  for (int y = 3; y < 7; ++y) {
    for (int x = 3; x < 7; ++x) img.at(y, x) = static_cast<std::uint8_t>(px(gen));
  }
  Radargram shifted = constant_image(12, 12, 50);
  for (int y = 3; y < 7; ++y) {
    for (int x = 3; x < 7; ++x) shifted.at(y + 2, x + 2) = img.at(y, x);
  }
  auto a = forward(net, img);
  auto b = forward(net, shifted);
  // scores over the shifted patch interior match (2-pixel receptive margin)
  for (int c = 0; c < 3; ++c) {
    for (int y = 3; y < 7; ++y) {
      for (int x = 3; x < 7; ++x) {
        EXPECT_NEAR(a.at(c, y, x), b.at(c, y + 2, x + 2), 1e-5);
      }
    }
  }
}

TEST(LossAndGrad, UniformSoftmaxLoss) {
  TinyNet net = TinyNet::zeros(28);
  Radargram img = constant_image(4, 4, 100);
  SemanticMap target = constant_target(4, 4, 3);
  auto [loss, grads] = loss_and_grad(net, img, target);
  EXPECT_NEAR(loss, std::log(28.0), 1e-6);
}

TEST(LossAndGrad, PerfectScoresDriveLossToZero) {
  TinyNetT<double> net = TinyNetT<double>::zeros(2);
  // large positive score for class 1 everywhere via conv3 bias
  net.conv3.biases[1] = 50.0;
  Radargram img = constant_image(4, 4, 0);
  SemanticMap target = constant_target(4, 4, 1);
  auto [loss, grads] = loss_and_grad(net, img, target);
  EXPECT_LT(loss, 1e-12);
}

TEST(LossAndGrad, NoCountedPixelsThrows) {
  TinyNet net = TinyNet::zeros(3);
  Radargram img = constant_image(2, 2, 0);
  SemanticMap target = constant_target(2, 2, 0);
  EXPECT_THROW(loss_and_grad(net, img, target, /*ignore_background=*/true),
               std::invalid_argument);
}

TEST(LossAndGrad, FiniteDifferenceOracle) {
  std::mt19937_64 gen(109);
  std::uniform_int_distribution<int> px(0, 255);
  std::uniform_int_distribution<int> cls(0, 3);
  const double step = 1e-4;
  // The check is only valid where the loss is smooth in the probe interval:
  // skip draws where a pre-activation sits within reach of the ReLU kink.
  auto min_abs_preactivation = [](const TinyNetT<double>& net, const Radargram& im) {
    FeatureMap<double> in = detail::to_input<double>(im), pre1, pre2;
    detail::conv_forward(net.conv1, in, pre1);
    double m = 1e300;
    for (double v : pre1.data) m = std::min(m, std::abs(v));
    detail::relu_inplace(pre1);
    detail::conv_forward(net.conv2, pre1, pre2);
    for (double v : pre2.data) m = std::min(m, std::abs(v));
    return m;
  };
  int done = 0;
  for (std::uint64_t attempt = 0; done < 5; ++attempt) {
    ASSERT_LT(attempt, 100u);
    TinyNetT<double> net = init<double>(4, 1000 + attempt);
    Radargram img = constant_image(6, 6, 0);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(px(gen));
    SemanticMap target = constant_target(6, 6, 0);
    for (auto& c : target.classes) c = static_cast<std::uint8_t>(cls(gen));
    if (min_abs_preactivation(net, img) < 1e-3) continue;
    ++done;

    auto [loss, grads] = loss_and_grad(net, img, target);
    auto net_tensors = tensors(net);
    auto grad_tensors = tensors(grads);
    for (std::size_t t = 0; t < net_tensors.size(); ++t) {
      auto& params = *net_tensors[t].second;
      auto& analytic = *grad_tensors[t].second;
      double max_rel = 0.0;
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        double lp = loss_and_grad(net, img, target).first;
        params[i] = saved - step;
        double lm = loss_and_grad(net, img, target).first;
        params[i] = saved;
        const double fd = (lp - lm) / (2.0 * step);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        max_rel = std::max(max_rel, std::abs(fd - analytic[i]) / denom);
      }
      EXPECT_LT(max_rel, 1e-4) << net_tensors[t].first;
    }
  }
}

TEST(SgdStep, PlainGradientDescent) {
  TinyNetT<double> net = TinyNetT<double>::zeros(2);
  TinyNetT<double> grads = TinyNetT<double>::zeros(2);
  TinyNetT<double> vel = TinyNetT<double>::zeros(2);
  net.conv1.weights[0] = 1.0;
  grads.conv1.weights[0] = 0.5;
  sgd_step(net, grads, 0.1, 0.0, 0.0, vel);
  EXPECT_DOUBLE_EQ(net.conv1.weights[0], 1.0 - 0.1 * 0.5);
}

TEST(SgdStep, DecayOnlyShrinksWeights) {
  TinyNetT<double> net = TinyNetT<double>::zeros(2);
  TinyNetT<double> grads = TinyNetT<double>::zeros(2);
  TinyNetT<double> vel = TinyNetT<double>::zeros(2);
  net.conv1.weights[0] = 2.0;
  sgd_step(net, grads, 0.1, 0.0, 0.01, vel);
  EXPECT_NEAR(net.conv1.weights[0], 2.0 * (1.0 - 0.1 * 0.01), 1e-12);
}

TEST(SgdStep, BiasesExemptFromDecay) {
  TinyNetT<double> net = TinyNetT<double>::zeros(2);
  TinyNetT<double> grads = TinyNetT<double>::zeros(2);
  TinyNetT<double> vel = TinyNetT<double>::zeros(2);
  net.conv1.biases[0] = 2.0;
  sgd_step(net, grads, 0.1, 0.0, 0.5, vel);
  EXPECT_DOUBLE_EQ(net.conv1.biases[0], 2.0);
}

TEST(SgdStep, ScalarRecurrenceTwoSteps) {
  TinyNetT<double> net = TinyNetT<double>::zeros(2);
  TinyNetT<double> grads = TinyNetT<double>::zeros(2);
  TinyNetT<double> vel = TinyNetT<double>::zeros(2);
  const double w0 = 1.0, g = 0.2, lr = 0.1, mu = 0.9, wd = 0.01;
  net.conv1.weights[0] = w0;
  grads.conv1.weights[0] = g;
  // closed-form recurrence
  double v = 0.0, w = w0;
  for (int i = 0; i < 2; ++i) {
    v = mu * v - lr * (g + wd * w);
    w += v;
  }
  sgd_step(net, grads, lr, mu, wd, vel);
  sgd_step(net, grads, lr, mu, wd, vel);
  EXPECT_NEAR(net.conv1.weights[0], w, 1e-12);
}

TEST(Train, OneStepWhenBatchCoversCorpus) {
  TinyNet net = init(3, 5);
  std::vector<std::pair<Radargram, SemanticMap>> corpus = {
      {constant_image(4, 4, 80), constant_target(4, 4, 1)}};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  auto history = train(net, corpus, cfg);
  EXPECT_EQ(history.size(), 1u);
}

TEST(Train, DeterministicHistory) {
  std::vector<std::pair<Radargram, SemanticMap>> corpus;
  std::mt19937_64 gen(113);
  for (int i = 0; i < 4; ++i) {
    corpus.emplace_back(testsupport::random_image(gen, 6, 6),
                        constant_target(6, 6, static_cast<std::uint8_t>(i % 3)));
  }
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.seed = 77;
  TinyNet a = init(3, 77);
  TinyNet b = init(3, 77);
  auto ha = train(a, corpus, cfg);
  auto hb = train(b, corpus, cfg);
  EXPECT_EQ(ha, hb);
  EXPECT_EQ(a.conv3.weights, b.conv3.weights);
}

TEST(Train, LossDropsOnSeparableCorpus) {
  // two classes split by intensity: dark pixels class 0, bright class 1
  std::vector<std::pair<Radargram, SemanticMap>> corpus;
  std::mt19937_64 gen(127);
  std::uniform_int_distribution<int> dark(0, 60), bright(180, 255);
  for (int i = 0; i < 8; ++i) {
    Radargram img = constant_image(8, 8, 0);
    SemanticMap target = constant_target(8, 8, 0);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        bool hot = (y + i) % 2 == 0;
        img.at(y, x) = static_cast<std::uint8_t>(hot ? bright(gen) : dark(gen));
        target.at(y, x) = hot ? 1 : 0;
      }
    }
    corpus.emplace_back(std::move(img), std::move(target));
  }
  TinyNet net = init(2, 3);
  TrainConfig cfg;
  cfg.epochs = 25;
  cfg.batch_size = 1;
  cfg.seed = 3;
  auto history = train(net, corpus, cfg);  // 25 * 8 = 200 steps
  ASSERT_EQ(history.size(), 200u);
  double early = history[0];
  double late = history.back();
  EXPECT_LT(late, early * 0.5);
}

TEST(Train, ZeroLearningRateIsIdentity) {
  TinyNet net = init(3, 9);
  TinyNet before = net;
  std::vector<std::pair<Radargram, SemanticMap>> corpus = {
      {constant_image(4, 4, 90), constant_target(4, 4, 2)}};
  TrainConfig cfg;
  cfg.base_lr = 1e-30;
  cfg.epochs = 2;
  cfg.batch_size = 1;
  auto history = train(net, corpus, cfg);
  for (std::size_t i = 0; i < net.conv1.weights.size(); ++i) {
    EXPECT_NEAR(net.conv1.weights[i], before.conv1.weights[i], 1e-12);
  }
}

TEST(Predict, ZeroNetworkTiesToBackground) {
  TinyNet net = TinyNet::zeros(4);
  SemanticMap out = predict(net, constant_image(5, 5, 10));
  for (auto c : out.classes) EXPECT_EQ(c, 0);
}

TEST(Predict, HandSetScoresArgmax) {
  TinyNetT<double> net = TinyNetT<double>::zeros(3);
  net.conv3.biases[2] = 1.0;  // class 2 wins everywhere
  SemanticMap out = predict(net, constant_image(3, 3, 0));
  for (auto c : out.classes) EXPECT_EQ(c, 2);
}

TEST(Weights, SaveLoadRoundTrip) {
  TinyNet net = init(6, 21);
  const std::string path =
      (std::filesystem::temp_directory_path() / "tseg_roundtrip.bin").string();
  save_weights(net, path);
  TinyNet back = load_weights(path);
  EXPECT_EQ(back.num_classes, 6);
  EXPECT_EQ(back.conv1.weights, net.conv1.weights);
  EXPECT_EQ(back.conv2.weights, net.conv2.weights);
  EXPECT_EQ(back.conv3.weights, net.conv3.weights);
  EXPECT_EQ(back.conv3.biases, net.conv3.biases);
  std::filesystem::remove(path);
}

TEST(Weights, BadMagicRejected) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "tseg_badmagic.bin").string();
  {
    std::ofstream f(path);
    f << "NOPE\n";
  }
  EXPECT_THROW(load_weights(path), std::runtime_error);
  std::filesystem::remove(path);
}
