#include <gtest/gtest.h>

#include "layerkit/labelproc.hpp"
#include "layerkit/layerize.hpp"
#include "test_support.hpp"

using namespace layerkit;

TEST(SemanticToLayers, SingleLabelColumn) {
  SemanticMap s;
  s.width = 1;
  s.height = 4;
  s.classes = {7, 7, 7, 7};
  LayerMap m = semantic_to_layers(s);
  ASSERT_EQ(m.layers.size(), 1u);
  EXPECT_EQ(*m.layers.at(7)[0], 0);
}

TEST(SemanticToLayers, DuplicateSuppressionKeepsTopmost) {
  SemanticMap s;
  s.width = 1;
  s.height = 4;
  s.classes = {3, 0, 3, 5};
  LayerMap m = semantic_to_layers(s);
  ASSERT_EQ(m.layers.size(), 2u);
  EXPECT_EQ(*m.layers.at(3)[0], 0);
  EXPECT_EQ(*m.layers.at(5)[0], 3);
}

TEST(SemanticToLayers, NeverInventsClasses) {
  std::mt19937_64 gen(53);
  for (int trial = 0; trial < 50; ++trial) {
    SemanticMap s = testsupport::random_semantic(gen, 12, 12, 6);
    LayerMap m = semantic_to_layers(s);
    auto hist = testsupport::oracle_histogram(s);
    for (const auto& [id, curve] : m.layers) {
      EXPECT_TRUE(hist.count(id));
      int entries = 0;
      for (const auto& r : curve) {
        if (r) ++entries;
      }
      EXPECT_LE(entries, s.width);  // at most one row per (class, column)
    }
  }
}

TEST(SemanticToLayers, RoundTripWithSemanticFill) {
  std::mt19937_64 gen(59);
  for (int trial = 0; trial < 100; ++trial) {
    CropResult c = testsupport::random_crop_result(gen, 8, 24);
    LayerMap back = semantic_to_layers(semantic_fill(c));
    ASSERT_EQ(back.layers.size(), c.layers.layers.size());
    for (const auto& [id, curve] : c.layers.layers) {
      EXPECT_EQ(back.layers.at(id), curve);
    }
  }
}

TEST(MeanThickness, UniformBand) {
  SemanticMap s;
  s.width = 10;
  s.height = 8;
  s.classes.assign(80, 0);
  for (int row = 2; row <= 5; ++row) {
    for (int col = 0; col < 10; ++col) s.at(row, col) = 3;
  }
  ThicknessReport r = mean_thickness(s);
  EXPECT_DOUBLE_EQ(r.per_layer.at(3), 4.0);
}

TEST(MeanThickness, AveragesOverAllColumns) {
  // class present in half the columns, 2 rows each -> thickness 1.0
  SemanticMap s;
  s.width = 8;
  s.height = 6;
  s.classes.assign(48, 0);
  for (int col = 0; col < 4; ++col) {
    s.at(1, col) = 2;
    s.at(2, col) = 2;
  }
  ThicknessReport r = mean_thickness(s);
  EXPECT_DOUBLE_EQ(r.per_layer.at(2), 1.0);
}

TEST(MeanThickness, MatchesHistogramOracle) {
  std::mt19937_64 gen(61);
  for (int trial = 0; trial < 50; ++trial) {
    SemanticMap s = testsupport::random_semantic(gen, 16, 16, 9);
    ThicknessReport r = mean_thickness(s);
    auto hist = testsupport::oracle_histogram(s);
    ASSERT_EQ(r.per_layer.size(), hist.size());
    for (const auto& [id, count] : hist) {
      EXPECT_DOUBLE_EQ(r.per_layer.at(id), static_cast<double>(count) / s.width);
    }
    // totals: sum of class counts + background = all pixels
    long long classified = 0;
    for (const auto& [id, count] : hist) classified += count;
    long long background = 0;
    for (auto c : s.classes) {
      if (c == 0) ++background;
    }
    EXPECT_EQ(classified + background,
              static_cast<long long>(s.height) * s.width);
  }
}

TEST(ThicknessCm, ScalesLinearly) {
  ThicknessReport r;
  r.width = 10;
  r.unit_cm_per_pixel = 4.0;
  r.per_layer = {{1, 4.0}, {2, 0.0}, {3, 2.5}};
  auto cm = thickness_cm(r);
  EXPECT_DOUBLE_EQ(cm.at(1), 16.0);
  EXPECT_DOUBLE_EQ(cm.at(2), 0.0);
  EXPECT_DOUBLE_EQ(cm.at(3), 10.0);
}

TEST(ThicknessCm, NonPositiveUnitThrows) {
  ThicknessReport r;
  r.unit_cm_per_pixel = 0.0;
  EXPECT_THROW(thickness_cm(r), std::invalid_argument);
}
