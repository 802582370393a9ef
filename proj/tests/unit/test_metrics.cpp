#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "../oracles.hpp"
#include "../temp_dir.hpp"
#include "trident/ablation.hpp"
#include "trident/errors.hpp"
#include "trident/metrics.hpp"
#include "trident/synth.hpp"

using namespace trident;

namespace {

LabelMap random_labels(Index r, Index c, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  LabelMap m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("miou hand case") {
  LabelMap gt(1, 2), pred(1, 2);
  gt << 0, 1;
  pred << 0, 0;
  const auto cm = accumulate(pred, gt, 2);
  CHECK(*miou(cm) == doctest::Approx(0.25));
  const auto ious = class_iou(cm);
  CHECK(*ious[0] == doctest::Approx(0.5));
  CHECK(*ious[1] == 0.0);
  CHECK(*pixel_accuracy(cm) == doctest::Approx(0.5));
}

TEST_CASE("empty unions are skipped") {
  const LabelMap zeros = LabelMap::Zero(2, 2);
  const auto cm = accumulate(zeros, zeros, 3);
  CHECK(*miou(cm) == 1.0);
  CHECK_FALSE(class_iou(cm)[2].has_value());
  const LabelMap ignored = LabelMap::Constant(2, 2, kDefaultIgnoreIndex);
  const auto none = accumulate(zeros, ignored, 3);
  CHECK(none.total() == 0);
  CHECK_FALSE(miou(none).has_value());
  CHECK_FALSE(pixel_accuracy(none).has_value());
}

TEST_CASE("confusion and miou match the double loop") {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 100; ++trial) {
    const int classes = 2 + trial % 6;
    const auto pred = random_labels(17, 23, classes, rng);
    LabelMap gt = random_labels(17, 23, classes, rng);
    for (Index i = 0; i < gt.size(); i += 7) gt.data()[i] = kDefaultIgnoreIndex;
    const auto cm = accumulate(pred, gt, static_cast<std::size_t>(classes));
    const auto ref = oracle::confusion(pred, gt, classes, kDefaultIgnoreIndex);
    for (int g = 0; g < classes; ++g)
      for (int p = 0; p < classes; ++p) CHECK(cm.counts()(g, p) == ref[g][p]);
    CHECK(*miou(cm) == doctest::Approx(*oracle::miou(ref)).epsilon(1e-12));
  }
}

TEST_CASE("ignore handling") {
  LabelMap gt(1, 3), pred(1, 3);
  gt << 0, kDefaultIgnoreIndex, 1;
  pred << 0, 1, 1;
  CHECK(*miou(accumulate(pred, gt, 2)) == 1.0);
  // Without an ignore index the 255 label is out of range.
  CHECK_THROWS_AS(trident::accumulate(pred, gt, 2, std::nullopt), ValidationError);
  pred(0, 0) = 5;
  CHECK_THROWS_AS(accumulate(pred, gt, 2), ValidationError);
  CHECK_THROWS_AS(accumulate(LabelMap::Zero(2, 2), gt, 2), ShapeError);
}

TEST_CASE("miou is invariant to relabeling both maps") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int classes = 5;
    const auto pred = random_labels(12, 12, classes, rng);
    const auto gt = random_labels(12, 12, classes, rng);
    std::vector<int> perm(classes);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const LabelMap pp = pred.unaryExpr([&](std::int32_t v) { return perm[v]; });
    const LabelMap pg = gt.unaryExpr([&](std::int32_t v) { return perm[v]; });
    CHECK(*miou(accumulate(pp, pg, classes)) == doctest::Approx(*miou(accumulate(pred, gt, classes))));
  }
}

TEST_CASE("confusion matrices add across images") {
  std::mt19937_64 rng(22);
  ConfusionMatrix total(4);
  LabelMap all_pred(20, 9), all_gt(20, 9);
  for (int part = 0; part < 4; ++part) {
    const auto p = random_labels(5, 9, 4, rng);
    const auto g = random_labels(5, 9, 4, rng);
    all_pred.middleRows(part * 5, 5) = p;
    all_gt.middleRows(part * 5, 5) = g;
    total.merge(accumulate(p, g, 4));
  }
  CHECK(total == accumulate(all_pred, all_gt, 4));
  CHECK_THROWS_AS(total.merge(ConfusionMatrix(3)), ShapeError);
}

TEST_CASE("seam_disagreement") {
  const auto layout = plan_windows(4, 4, 2, 2, 1);
  LabelMap flat = LabelMap::Zero(4, 4);
  CHECK(seam_disagreement(flat, layout) == 0.0);

  // Left half 0, right half 1: every pair across the vertical edge differs.
  LabelMap halves = LabelMap::Zero(4, 4);
  halves.rightCols(2).setConstant(1);
  CHECK(seam_disagreement(halves, layout) == doctest::Approx(0.5));
  // When the truth has the same boundary, those pairs are not counted.
  CHECK(seam_disagreement(halves, layout, &halves) == 0.0);
  CHECK(seam_disagreement(flat, layout, &halves) == 0.0);
  CHECK(seam_disagreement(halves, layout, &flat) == doctest::Approx(0.5));

  const auto single = plan_windows(4, 4, 4, 4, 1);
  CHECK(seam_disagreement(halves, single) == 0.0);
  CHECK_THROWS_AS(seam_disagreement(LabelMap::Zero(3, 4), layout), ShapeError);
}

TEST_CASE("resolution settings") {
  const auto r = parse_resolution("448-336-224");
  CHECK(r == ResolutionSetting{448, 336, 224});
  CHECK(r.label() == "448-336-224");
  CHECK(standard_resolutions().size() == 3);
  CHECK_THROWS_AS(parse_resolution("448x336"), ConfigError);
}

TEST_CASE("ablation grid") {
  TempDir tmp;
  generate_bundle(seam_scene(), tmp.path / "seam");
  const auto cells = ablation_grid({Paradigm::segment_then_splice, Paradigm::splice_then_segment},
                                   {CorrelationKind::cosine, CorrelationKind::attention, CorrelationKind::affinity},
                                   {}, tmp.path);
  REQUIRE(cells.size() == 6);
  const auto rows = ablation_run(cells, PipelineConfig{});
  for (const auto& row : rows) {
    CHECK(row.available);
    CHECK(row.images == 1);
    CHECK(row.miou.has_value());
  }
  const auto table = ablation_table(rows);
  CHECK(std::count(table.begin(), table.end(), '\n') >= 7);
  CHECK(ablation_json(rows).size() == 6);

  CHECK(ablation_table({}).find("paradigm") != std::string::npos);
  CHECK(ablation_run({}, PipelineConfig{}).empty());

  const auto missing = ablation_grid({Paradigm::splice_then_segment}, {CorrelationKind::affinity},
                                     standard_resolutions(), tmp.path);
  REQUIRE(missing.size() == 3);
  const auto missing_rows = ablation_run(missing, PipelineConfig{});
  for (const auto& row : missing_rows) {
    CHECK_FALSE(row.available);
    CHECK_FALSE(row.reason.empty());
  }
  CHECK(ablation_table(missing_rows).find("unavailable") != std::string::npos);
}
