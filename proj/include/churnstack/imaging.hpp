#ifndef CHURNSTACK_IMAGING_HPP
#define CHURNSTACK_IMAGING_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "churnstack/common.hpp"

namespace churnstack {

/// Near-square row-major layout of a length-d feature vector.
struct GridPlan {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t pad = 0;
  bool operator==(const GridPlan&) const = default;
};

/// Row-major grid of real values.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pixels;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), pixels(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return pixels[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
  bool operator==(const Grid&) const = default;
};

struct FeatureImage {
  Grid grid;  // square, target_size x target_size, values in [0, 1]
  std::size_t source_index = 0;
};

inline GridPlan plan_grid(std::size_t d) {
  if (d == 0) throw Error("cannot lay out an empty feature vector");
  auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
  // guard sqrt rounding for large perfect squares
  while (cols * cols < d) ++cols;
  while (cols > 1 && (cols - 1) * (cols - 1) >= d) --cols;
  const std::size_t rows = (d + cols - 1) / cols;
  return {rows, cols, rows * cols - d};
}

inline Grid vector_to_grid(std::span<const double> v, const GridPlan& plan) {
  if (v.size() + plan.pad != plan.rows * plan.cols)
    throw Error("feature vector of length " + std::to_string(v.size()) +
                " does not fit a " + std::to_string(plan.rows) + "x" +
                std::to_string(plan.cols) + " grid with pad " +
                std::to_string(plan.pad));
  Grid g(plan.rows, plan.cols, 0.0);
  std::copy(v.begin(), v.end(), g.pixels.begin());
  return g;
}

/// Corner-aligned bilinear resampling; output clamped to [0, 1].
inline Grid resize_bilinear(const Grid& in, std::size_t out_rows,
                            std::size_t out_cols) {
  if (in.rows == 0 || in.cols == 0) throw Error("cannot resize an empty grid");
  Grid out(out_rows, out_cols);
  auto scale = [](std::size_t in_n, std::size_t out_n) {
    return out_n > 1 ? static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1)
                     : 0.0;
  };
  const double sy = scale(in.rows, out_rows);
  const double sx = scale(in.cols, out_cols);
  for (std::size_t i = 0; i < out_rows; ++i) {
    const double y = static_cast<double>(i) * sy;
    const auto y0 = std::min(static_cast<std::size_t>(y), in.rows - 1);
    const auto y1 = std::min(y0 + 1, in.rows - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < out_cols; ++j) {
      const double x = static_cast<double>(j) * sx;
      const auto x0 = std::min(static_cast<std::size_t>(x), in.cols - 1);
      const auto x1 = std::min(x0 + 1, in.cols - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = in.at(y0, x0) + fx * (in.at(y0, x1) - in.at(y0, x0));
      const double bot = in.at(y1, x0) + fx * (in.at(y1, x1) - in.at(y1, x0));
      out.at(i, j) = std::clamp(top + fy * (bot - top), 0.0, 1.0);
    }
  }
  return out;
}

inline FeatureImage row_to_image(std::span<const double> row, const GridPlan& plan,
                                 std::size_t target_size, std::size_t source_index) {
  return {resize_bilinear(vector_to_grid(row, plan), target_size, target_size),
          source_index};
}

/// One square image per matrix row.
inline std::vector<FeatureImage> convert_dataset(const Matrix& features,
                                                 std::size_t target_size = 32) {
  if (target_size == 0) throw Error("image size must be positive");
  const auto plan = plan_grid(features.cols);
  std::vector<FeatureImage> out;
  out.reserve(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i) {
    const std::span<const double> row(features.data.data() + i * features.cols,
                                      features.cols);
    out.push_back(row_to_image(row, plan, target_size, i));
  }
  return out;
}

/// Plain (P2) graymap, pixels scaled by round(p * 255).
inline std::string to_pgm(const Grid& g) {
  std::string out = "P2\n" + std::to_string(g.cols) + " " + std::to_string(g.rows) +
                    "\n255\n";
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      const auto v = static_cast<int>(std::lround(std::clamp(g.at(r, c), 0.0, 1.0) * 255.0));
      if (c) out += ' ';
      out += std::to_string(v);
    }
    out += '\n';
  }
  return out;
}

inline std::string pgm_filename(std::string_view dataset, std::size_t row) {
  return std::string(dataset) + "_" + std::to_string(row) + ".pgm";
}

}  // namespace churnstack

#endif  // CHURNSTACK_IMAGING_HPP
