#include <algorithm>
#include <set>

#include "trident/errors.hpp"
#include "trident/metrics.hpp"

namespace trident {

ConfusionMatrix::ConfusionMatrix(std::size_t class_count, std::optional<std::int32_t> ignore_index)
    : counts_(Counts::Zero(static_cast<Index>(class_count), static_cast<Index>(class_count))), ignore_(ignore_index) {}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw ShapeError("accumulate: prediction is " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                     ", ground truth " + std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
  const auto c = static_cast<std::int32_t>(class_count());
  for (Index i = 0; i < gt.size(); ++i) {
    const auto g = gt.data()[i];
    if (ignore_ && g == *ignore_) continue;
    const auto p = pred.data()[i];
    if (g < 0 || g >= c) throw ValidationError("accumulate: ground-truth label " + std::to_string(g) + " out of range");
    if (p < 0 || p >= c) throw ValidationError("accumulate: predicted label " + std::to_string(p) + " out of range");
    ++counts_(g, p);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.class_count() != class_count()) throw ShapeError("ConfusionMatrix::merge: class counts differ");
  counts_ += other.counts_;
}

ConfusionMatrix accumulate(const LabelMap& pred, const LabelMap& gt, std::size_t class_count,
                           std::optional<std::int32_t> ignore_index) {
  ConfusionMatrix cm(class_count, ignore_index);
  cm.add(pred, gt);
  return cm;
}

std::vector<std::optional<double>> class_iou(const ConfusionMatrix& cm) {
  const auto& m = cm.counts();
  std::vector<std::optional<double>> out(cm.class_count());
  for (Index k = 0; k < m.rows(); ++k) {
    const std::int64_t tp = m(k, k);
    const std::int64_t fn = m.row(k).sum() - tp;
    const std::int64_t fp = m.col(k).sum() - tp;
    const std::int64_t uni = tp + fp + fn;
    if (uni > 0) out[static_cast<std::size_t>(k)] = static_cast<double>(tp) / static_cast<double>(uni);
  }
  return out;
}

std::optional<double> miou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int n = 0;
  for (const auto& iou : class_iou(cm)) {
    if (!iou) continue;
    sum += *iou;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::optional<double> pixel_accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) return std::nullopt;
  return static_cast<double>(cm.counts().trace()) / static_cast<double>(total);
}

double seam_disagreement(const LabelMap& labels, const WindowLayout& layout, const LabelMap* gt,
                         std::optional<std::int32_t> ignore_index) {
  if (labels.rows() != layout.image_height || labels.cols() != layout.image_width)
    throw ShapeError("seam_disagreement: label map does not match the layout's image size");
  if (gt && (gt->rows() != labels.rows() || gt->cols() != labels.cols()))
    throw ShapeError("seam_disagreement: ground truth does not match the label map");
  std::set<Index> row_edges;
  std::set<Index> col_edges;
  for (Index y : layout.row_origins)
    for (Index e : {y, y + layout.window})
      if (e > 0 && e < layout.image_height) row_edges.insert(e);
  for (Index x : layout.col_origins)
    for (Index e : {x, x + layout.window})
      if (e > 0 && e < layout.image_width) col_edges.insert(e);

  std::int64_t pairs = 0;
  std::int64_t differing = 0;
  auto visit = [&](Index y0, Index x0, Index y1, Index x1) {
    if (gt) {
      const auto a = (*gt)(y0, x0);
      const auto b = (*gt)(y1, x1);
      if (a != b) return;
      if (ignore_index && a == *ignore_index) return;
    }
    ++pairs;
    if (labels(y0, x0) != labels(y1, x1)) ++differing;
  };
  for (Index e : col_edges)
    for (Index y = 0; y < labels.rows(); ++y) visit(y, e - 1, y, e);
  for (Index e : row_edges)
    for (Index x = 0; x < labels.cols(); ++x) visit(e - 1, x, e, x);
  return pairs == 0 ? 0.0 : static_cast<double>(differing) / static_cast<double>(pairs);
}

}  // namespace trident
