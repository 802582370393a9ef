#include "trident/tiling.hpp"

#include <algorithm>
#include <string>

#include "trident/errors.hpp"

namespace trident {
namespace {

std::vector<Index> axis_origins(Index extent, Index window, Index stride) {
  const Index span = extent - window;
  const Index count = (span + stride - 1) / stride + 1;
  std::vector<Index> origins;
  origins.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) origins.push_back(std::min(i * stride, span));
  return origins;
}

void check_window_inputs(std::span<const FeatureMap> windows, const WindowLayout& layout, const char* what) {
  if (windows.size() != layout.window_count())
    throw ShapeError(std::string(what) + ": " + std::to_string(windows.size()) + " windows for a layout of " +
                     std::to_string(layout.window_count()));
  if (!layout.patch_aligned()) throw ShapeError(std::string(what) + ": layout is not aligned to the patch grid");
  const Index side = layout.tokens_per_side();
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].rows != side || windows[i].cols != side)
      throw ShapeError(std::string(what) + ": window " + std::to_string(i) + " grid is " +
                       std::to_string(windows[i].rows) + "x" + std::to_string(windows[i].cols) + ", expected " +
                       std::to_string(side) + "x" + std::to_string(side));
    if (windows[i].channels() != windows.front().channels())
      throw ShapeError(std::string(what) + ": window " + std::to_string(i) + " channel count differs");
  }
}

/// Row-parallel accumulation: each worker owns a band of output rows and walks
/// every window in index order, so the result is independent of worker count.
template <typename CellValue>
GridMap<float> accumulate(const WindowLayout& layout, Index channels, std::size_t window_count,
                          const ExecutionPolicy& policy, CellValue&& value_of) {
  const Index rows = layout.grid_rows();
  const Index cols = layout.grid_cols();
  const Index side = layout.tokens_per_side();
  GridMap<float> out(rows, cols, channels);
  parallel_for(rows, policy, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    RowMatrix<double> sum = RowMatrix<double>::Zero(cols, channels);
    std::vector<int> count(static_cast<std::size_t>(cols));
    Eigen::Matrix<double, 1, Eigen::Dynamic> cell(channels);
    for (Index y = begin; y < end; ++y) {
      sum.setZero();
      std::fill(count.begin(), count.end(), 0);
      for (std::size_t w = 0; w < window_count; ++w) {
        const Index oy = layout.origins[w].y / layout.patch;
        const Index ox = layout.origins[w].x / layout.patch;
        if (y < oy || y >= oy + side) continue;
        for (Index lx = 0; lx < side; ++lx) {
          value_of(w, y - oy, lx, cell);
          sum.row(ox + lx) += cell;
          ++count[static_cast<std::size_t>(ox + lx)];
        }
      }
      for (Index x = 0; x < cols; ++x) {
        const int n = count[static_cast<std::size_t>(x)];
        if (n == 0)
          throw Error("splice: grid cell (" + std::to_string(y) + ", " + std::to_string(x) +
                      ") is not covered by any window");
        out.cell(y, x) = (sum.row(x) / static_cast<double>(n)).cast<float>();
      }
    }
  });
  return out;
}

}  // namespace

bool WindowLayout::patch_aligned() const {
  if (patch <= 0 || image_height % patch != 0 || image_width % patch != 0 || window % patch != 0) return false;
  return std::all_of(origins.begin(), origins.end(),
                     [&](const WindowOrigin& o) { return o.y % patch == 0 && o.x % patch == 0; });
}

WindowLayout plan_windows(Index image_height, Index image_width, Index window, Index stride, Index patch) {
  if (patch <= 0) throw ConfigError("plan_windows: patch size must be positive");
  if (window <= 0 || window % patch != 0)
    throw ConfigError("plan_windows: window " + std::to_string(window) + " is not a positive multiple of patch " +
                      std::to_string(patch));
  if (stride <= 0 || stride > window)
    throw ConfigError("plan_windows: stride must satisfy 0 < stride <= window, got " + std::to_string(stride));
  if (window > std::min(image_height, image_width))
    throw ConfigError("plan_windows: window " + std::to_string(window) + " exceeds image side (" +
                      std::to_string(image_height) + "x" + std::to_string(image_width) +
                      "); resize the shorter side to at least the window size first");
  WindowLayout layout;
  layout.image_height = image_height;
  layout.image_width = image_width;
  layout.window = window;
  layout.stride = stride;
  layout.patch = patch;
  layout.row_origins = axis_origins(image_height, window, stride);
  layout.col_origins = axis_origins(image_width, window, stride);
  for (Index y : layout.row_origins)
    for (Index x : layout.col_origins) layout.origins.push_back({y, x});
  return layout;
}

ImageSize resize_shorter_side(ImageSize source, Index target, Index patch) {
  if (target < 1) throw ConfigError("resize_shorter_side: target must be positive");
  if (patch < 1) throw ConfigError("resize_shorter_side: patch must be positive");
  if (source.height < 1 || source.width < 1) throw ConfigError("resize_shorter_side: empty image");
  const bool tall = source.height > source.width;
  const Index shorter = tall ? source.width : source.height;
  const Index longer = tall ? source.height : source.width;
  if (shorter == longer) return {target, target};
  // round(longer * target / (shorter * patch)) with halves rounding up, in
  // exact integer arithmetic.
  const Index denom = shorter * patch;
  Index multiples = (2 * longer * target + denom) / (2 * denom);
  Index scaled = multiples * patch;
  if (scaled < target) scaled = ((target + patch - 1) / patch) * patch;
  return tall ? ImageSize{scaled, target} : ImageSize{target, scaled};
}

FeatureMap splice_features(std::span<const FeatureMap> windows, const WindowLayout& layout,
                           const ExecutionPolicy& policy) {
  check_window_inputs(windows, layout, "splice_features");
  const Index side = layout.tokens_per_side();
  return accumulate(layout, windows.front().channels(), windows.size(), policy,
                    [&](std::size_t w, Index ly, Index lx, Eigen::Matrix<double, 1, Eigen::Dynamic>& cell) {
                      cell = windows[w].cells.row(ly * side + lx).cast<double>();
                    });
}

ClassScoreMap splice_scores(std::span<const ClassScoreMap> windows, const WindowLayout& layout, SpliceMode mode,
                            const ExecutionPolicy& policy) {
  check_window_inputs(windows, layout, "splice_scores");
  const Index side = layout.tokens_per_side();
  if (mode == SpliceMode::mean) {
    return accumulate(layout, windows.front().channels(), windows.size(), policy,
                      [&](std::size_t w, Index ly, Index lx, Eigen::Matrix<double, 1, Eigen::Dynamic>& cell) {
                        cell = windows[w].cells.row(ly * side + lx).cast<double>();
                      });
  }
  return accumulate(layout, windows.front().channels(), windows.size(), policy,
                    [&](std::size_t w, Index ly, Index lx, Eigen::Matrix<double, 1, Eigen::Dynamic>& cell) {
                      const auto scores = windows[w].cells.row(ly * side + lx);
                      Index best = 0;
                      for (Index j = 1; j < scores.size(); ++j)
                        if (scores(j) > scores(best)) best = j;
                      cell.setZero();
                      cell(best) = 1.0;
                    });
}

}  // namespace trident
