#include <doctest.h>

#include <algorithm>

#include "../oracles.hpp"
#include "trident/errors.hpp"
#include "trident/tiling.hpp"

using namespace trident;

TEST_CASE("plan_windows examples") {
  const auto a = plan_windows(448, 448, 336, 224, 16);
  CHECK(a.row_origins == std::vector<Index>{0, 112});
  CHECK(a.col_origins == std::vector<Index>{0, 112});
  CHECK(a.window_count() == 4);

  const auto b = plan_windows(336, 336, 336, 224, 16);
  CHECK(b.window_count() == 1);
  CHECK(b.origins.front().y == 0);
  CHECK(b.origins.front().x == 0);

  const auto c = plan_windows(688, 1024, 336, 224, 16);
  CHECK(c.row_origins == std::vector<Index>{0, 224, 352});
  CHECK(c.col_origins == std::vector<Index>{0, 224, 448, 672, 688});
  CHECK(c.grid_rows() == 43);
  CHECK(c.grid_cols() == 64);
}

TEST_CASE("plan_windows rejects bad inputs") {
  CHECK_THROWS_AS(plan_windows(300, 500, 336, 224, 16), ConfigError);
  CHECK_THROWS_AS(plan_windows(448, 448, 330, 224, 16), ConfigError);
  CHECK_THROWS_AS(plan_windows(448, 448, 336, 0, 16), ConfigError);
  CHECK_THROWS_AS(plan_windows(448, 448, 336, 400, 16), ConfigError);
  try {
    plan_windows(300, 500, 336, 224, 16);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("resize") != std::string::npos);
  }
}

TEST_CASE("plan_windows covers every pixel") {
  for (Index window = 1; window <= 16; ++window)
    for (Index stride = 1; stride <= window; ++stride)
      for (Index h = window; h <= 64; h += 3)
        for (Index w = window; w <= 64; w += 5) {
          const auto layout = plan_windows(h, w, window, stride, 1);
          std::vector<char> covered(static_cast<std::size_t>(h * w), 0);
          for (const auto& o : layout.origins) {
            REQUIRE(o.y + window <= h);
            REQUIRE(o.x + window <= w);
            for (Index y = o.y; y < o.y + window; ++y)
              for (Index x = o.x; x < o.x + window; ++x) covered[static_cast<std::size_t>(y * w + x)] = 1;
          }
          REQUIRE(std::all_of(covered.begin(), covered.end(), [](char c) { return c == 1; }));
          const Index count_y = (h - window + stride - 1) / stride + 1;
          REQUIRE(static_cast<Index>(layout.row_origins.size()) == count_y);
        }
}

TEST_CASE("resize_shorter_side") {
  CHECK(resize_shorter_side({500, 375}, 448) == ImageSize{592, 448});
  CHECK(resize_shorter_side({375, 500}, 448) == ImageSize{448, 592});
  CHECK(resize_shorter_side({900, 900}, 336) == ImageSize{336, 336});
  CHECK(resize_shorter_side({1024, 2048}, 688) == ImageSize{688, 1376});
  // 600 * 336 / 400 = 504 = 31.5 patches: the half rounds up.
  CHECK(resize_shorter_side({400, 600}, 336) == ImageSize{336, 512});
  CHECK_THROWS_AS(resize_shorter_side({0, 10}, 336), ConfigError);
}

namespace {

std::vector<FeatureMap> constant_windows(const WindowLayout& layout, const std::vector<float>& values) {
  std::vector<FeatureMap> out;
  const Index side = layout.tokens_per_side();
  for (float v : values) out.emplace_back(side, side, RowMatrix<float>::Constant(side * side, 1, v));
  return out;
}

}  // namespace

TEST_CASE("splice_features examples") {
  const auto grid = plan_windows(4, 4, 2, 2, 1);
  REQUIRE(grid.window_count() == 4);
  std::vector<FeatureMap> windows;
  for (int w = 0; w < 4; ++w) {
    FeatureMap f(2, 2, 1);
    for (Index i = 0; i < 4; ++i) f.cells(i, 0) = static_cast<float>(10 * w + i);
    windows.push_back(f);
  }
  const auto placed = splice_features(windows, grid);
  for (std::size_t w = 0; w < 4; ++w)
    for (Index y = 0; y < 2; ++y)
      for (Index x = 0; x < 2; ++x)
        CHECK(placed.cell(grid.origins[w].y + y, grid.origins[w].x + x)(0) == windows[w].cells(y * 2 + x, 0));

  const auto strip = plan_windows(2, 3, 2, 1, 1);
  REQUIRE(strip.window_count() == 2);
  const auto s = splice_features(constant_windows(strip, {0.0f, 2.0f}), strip);
  CHECK(s.cell(0, 0)(0) == 0.0f);
  CHECK(s.cell(0, 1)(0) == 1.0f);
  CHECK(s.cell(1, 1)(0) == 1.0f);
  CHECK(s.cell(0, 2)(0) == 2.0f);

  const auto many = plan_windows(7, 9, 3, 2, 1);
  const auto c = splice_features(constant_windows(many, std::vector<float>(many.window_count(), 1.5f)), many);
  CHECK((c.cells.array() == 1.5f).all());
}

TEST_CASE("splice_features matches the brute-force oracle") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<Index> side(2, 6), mult(1, 4);
  for (int trial = 0; trial < 60; ++trial) {
    const Index patch = mult(rng);
    const Index window = side(rng) * patch;
    const Index stride = std::uniform_int_distribution<Index>(1, window / patch)(rng) * patch;
    const Index h = window + std::uniform_int_distribution<Index>(0, 6)(rng) * patch;
    const Index w = window + std::uniform_int_distribution<Index>(0, 6)(rng) * patch;
    const auto layout = plan_windows(h, w, window, stride, patch);
    const Index t = layout.tokens_per_side();
    std::vector<FeatureMap> windows;
    for (std::size_t i = 0; i < layout.window_count(); ++i)
      windows.emplace_back(t, t, oracle::random_matrix(t * t, 3, rng));
    const auto spliced = splice_features(windows, layout);
    CHECK((spliced.cells.cast<double>() - oracle::brute_splice(windows, layout)).cwiseAbs().maxCoeff() <= 1e-6);

    ExecutionPolicy threaded;
    threaded.workers = 3;
    CHECK(splice_features(windows, layout, threaded).cells == spliced.cells);

    // Reversing window order (together with the origins) changes nothing.
    WindowLayout reversed = layout;
    std::reverse(reversed.origins.begin(), reversed.origins.end());
    std::vector<FeatureMap> rev(windows.rbegin(), windows.rend());
    CHECK(splice_features(rev, reversed).cells == spliced.cells);

    if (stride == window && h % window == 0 && w % window == 0) {
      for (std::size_t i = 0; i < windows.size(); ++i)
        for (Index y = 0; y < t; ++y)
          for (Index x = 0; x < t; ++x)
            CHECK(spliced.cell(layout.origins[i].y / patch + y, layout.origins[i].x / patch + x) ==
                  windows[i].cells.row(y * t + x));
    }
  }
}

TEST_CASE("splice_scores") {
  const auto one = plan_windows(2, 2, 2, 2, 1);
  std::mt19937_64 rng(10);
  const FeatureMap only(2, 2, oracle::random_matrix(4, 3, rng));
  CHECK(splice_scores(std::vector<FeatureMap>{only}, one).cells == only.cells);

  ClassScoreMap a(1, 1, 2), b(1, 1, 2);
  a.cells << 0.9f, 0.1f;
  b.cells << 0.4f, 0.6f;
  // Two windows stacked on the same single cell.
  WindowLayout same = plan_windows(1, 1, 1, 1, 1);
  same.origins.push_back(same.origins.front());
  const auto mean = splice_scores(std::vector<ClassScoreMap>{a, b}, same);
  CHECK(mean.cells(0, 0) == doctest::Approx(0.65));
  CHECK(mean.cells(0, 1) == doctest::Approx(0.35));
  const auto vote = splice_scores(std::vector<ClassScoreMap>{a, b}, same, SpliceMode::vote);
  CHECK(vote.cells(0, 0) == 0.5f);
  CHECK(vote.cells(0, 1) == 0.5f);

  CHECK_THROWS_AS(splice_scores(std::vector<ClassScoreMap>{a}, same), ShapeError);
}
