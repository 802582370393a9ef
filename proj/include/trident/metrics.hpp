#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "trident/tiling.hpp"
#include "trident/types.hpp"

namespace trident {

inline constexpr std::int32_t kDefaultIgnoreIndex = 255;

/// counts(g, p): pixels with ground truth g predicted as p.
class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit ConfusionMatrix(std::size_t class_count = 0,
                           std::optional<std::int32_t> ignore_index = kDefaultIgnoreIndex);

  std::size_t class_count() const { return static_cast<std::size_t>(counts_.rows()); }
  std::optional<std::int32_t> ignore_index() const { return ignore_; }
  const Counts& counts() const { return counts_; }
  std::int64_t total() const { return counts_.sum(); }

  void add(const LabelMap& pred, const LabelMap& gt);
  void merge(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix& a, const ConfusionMatrix& b) {
    return a.ignore_ == b.ignore_ && a.counts_ == b.counts_;
  }

 private:
  Counts counts_;
  std::optional<std::int32_t> ignore_;
};

ConfusionMatrix accumulate(const LabelMap& pred, const LabelMap& gt, std::size_t class_count,
                           std::optional<std::int32_t> ignore_index = kDefaultIgnoreIndex);

/// Per-class TP / (TP + FP + FN); nullopt for classes with empty union.
std::vector<std::optional<double>> class_iou(const ConfusionMatrix& cm);

/// Mean IoU over classes with a nonempty union; nullopt when there are none.
std::optional<double> miou(const ConfusionMatrix& cm);

std::optional<double> pixel_accuracy(const ConfusionMatrix& cm);

/// Fraction of pixel pairs straddling an interior window edge whose predicted
/// labels differ. With ground truth, only pairs whose true labels agree (and
/// are not ignored) are counted, so true object boundaries lying on a window
/// edge do not register as seams. Returns 0 when the layout has no interior
/// edges.
double seam_disagreement(const LabelMap& labels, const WindowLayout& layout, const LabelMap* ground_truth = nullptr,
                         std::optional<std::int32_t> ignore_index = kDefaultIgnoreIndex);

}  // namespace trident
