#include <gtest/gtest.h>

#include <random>

#include "churnstack/imaging.hpp"

using namespace churnstack;

namespace {
Grid grid_of(std::size_t r, std::size_t c, std::vector<double> px) {
  Grid g(r, c);
  g.pixels = std::move(px);
  return g;
}
}  // namespace

TEST(Plan, OrangeWidth) { EXPECT_EQ(plan_grid(230), (GridPlan{15, 16, 10})); }
TEST(Plan, SeventySeven) { EXPECT_EQ(plan_grid(77), (GridPlan{9, 9, 4})); }
TEST(Plan, PerfectSquare) { EXPECT_EQ(plan_grid(4), (GridPlan{2, 2, 0})); }

TEST(Plan, FormulaOverRange) {
  for (std::size_t d = 1; d <= 5000; ++d) {
    const auto p = plan_grid(d);
    ASSERT_GE(p.cols * p.cols, d);
    ASSERT_LT((p.cols - 1) * (p.cols - 1), d);
    ASSERT_EQ(p.rows, (d + p.cols - 1) / p.cols);
    ASSERT_EQ(p.rows * p.cols - p.pad, d);
  }
}

TEST(Grid, RowMajorFill) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_EQ(vector_to_grid(v, plan_grid(4)).pixels, v);
}

TEST(Grid, ZeroPad) {
  const std::vector<double> v{1, 2, 3};
  EXPECT_EQ(vector_to_grid(v, plan_grid(3)).pixels, (std::vector<double>{1, 2, 3, 0}));
}

TEST(Grid, FlattenPrefixIsInput) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  for (std::size_t d = 1; d < 200; ++d) {
    std::vector<double> v(d);
    for (auto& x : v) x = u(rng);
    const auto g = vector_to_grid(v, plan_grid(d));
    ASSERT_TRUE(std::equal(v.begin(), v.end(), g.pixels.begin()));
  }
}

TEST(Resize, ConstantStaysConstant) {
  const auto out = resize_bilinear(Grid(3, 5, 0.37), 32, 32);
  for (double p : out.pixels) ASSERT_EQ(p, 0.37);
}

TEST(Resize, SameSizeIsIdentity) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  Grid g(7, 7);
  for (auto& p : g.pixels) p = u(rng);
  EXPECT_EQ(resize_bilinear(g, 7, 7), g);
}

TEST(Resize, HandEvaluatedUpsample) {
  // Independent evaluation of the corner-aligned formula: output (i,j) samples
  // input position (i/2, j/2); all four neighbours weigh 1/4 at the centre.
  const auto out = resize_bilinear(grid_of(2, 2, {0, 1, 1, 0}), 3, 3);
  const std::vector<double> expected{0, 0.5, 1, 0.5, 0.5, 0.5, 1, 0.5, 0};
  for (std::size_t k = 0; k < 9; ++k) EXPECT_NEAR(out.pixels[k], expected[k], 1e-15);
}

TEST(Resize, CornersAreFixedPoints) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 2 + rng() % 10, c = 2 + rng() % 10;
    Grid g(r, c);
    for (auto& p : g.pixels) p = u(rng);
    const std::size_t k = std::max(r, c) + rng() % 20;
    const auto back = resize_bilinear(resize_bilinear(g, k, k), r, c);
    EXPECT_EQ(back.at(0, 0), g.at(0, 0));
    EXPECT_EQ(back.at(0, c - 1), g.at(0, c - 1));
    EXPECT_EQ(back.at(r - 1, 0), g.at(r - 1, 0));
    EXPECT_EQ(back.at(r - 1, c - 1), g.at(r - 1, c - 1));
  }
}

TEST(Resize, UnitRangePreserved) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 100; ++trial) {
    Grid g(1 + rng() % 16, 1 + rng() % 16);
    for (auto& p : g.pixels) p = u(rng) < 0.3 ? (u(rng) < 0.5 ? 0.0 : 1.0) : u(rng);
    for (double p : resize_bilinear(g, 32, 32).pixels) {
      ASSERT_GE(p, 0.0);
      ASSERT_LE(p, 1.0);
    }
  }
}

TEST(Convert, ShapeAndSourceIndex) {
  Matrix m(3, 4, 0.5);
  const auto imgs = convert_dataset(m);
  ASSERT_EQ(imgs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(imgs[i].grid.rows, 32u);
    EXPECT_EQ(imgs[i].grid.cols, 32u);
    EXPECT_EQ(imgs[i].source_index, i);
  }
}

TEST(Convert, IdenticalRowsIdenticalImages) {
  Matrix m(2, 10);
  for (std::size_t j = 0; j < 10; ++j) m(0, j) = m(1, j) = 0.1 * static_cast<double>(j);
  const auto imgs = convert_dataset(m);
  EXPECT_EQ(imgs[0].grid, imgs[1].grid);
}

TEST(Convert, ZeroRowGivesZeroImage) {
  const auto imgs = convert_dataset(Matrix(1, 230, 0.0));
  for (double p : imgs[0].grid.pixels) ASSERT_EQ(p, 0.0);
}

TEST(Convert, InjectiveWhenGridMatchesTarget) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u;
  Matrix m(50, 1024);
  for (auto& x : m.data) x = u(rng);
  for (std::size_t i = 1; i < 50; ++i) m(i, (i * 37) % 1024) = m(0, (i * 37) % 1024);
  const auto imgs = convert_dataset(m);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(imgs[i].grid.pixels, m.row(i));
    for (std::size_t j = i + 1; j < 50; ++j) ASSERT_NE(imgs[i].grid, imgs[j].grid);
  }
}

TEST(Pgm, HeaderAndScaling) {
  const auto text = to_pgm(grid_of(1, 3, {0.0, 0.5, 1.0}));
  EXPECT_EQ(text, "P2\n3 1\n255\n0 128 255\n");
  EXPECT_EQ(pgm_filename("orange", 7), "orange_7.pgm");
}
