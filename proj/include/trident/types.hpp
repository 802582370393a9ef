#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace trident {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Boolean keep-mask with the same shape as the matrix it masks.
using RowMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-pixel class indices.
using LabelMap = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 0/1 map produced by binarizing a label map.
using BinaryMap = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A dense rows x cols grid of `channels`-dimensional vectors.
///
/// Cells are stored one per matrix row in row-major grid order, so cell (y, x)
/// lives in `cells.row(y * cols + x)`. Feature maps, class score maps and
/// single-channel planes all share this layout.
template <typename Scalar>
struct GridMap {
  Index rows = 0;
  Index cols = 0;
  RowMatrix<Scalar> cells;

  GridMap() = default;
  GridMap(Index r, Index c, Index channels) : rows(r), cols(c), cells(r * c, channels) {}
  GridMap(Index r, Index c, RowMatrix<Scalar> values) : rows(r), cols(c), cells(std::move(values)) {}

  Index channels() const { return cells.cols(); }
  Index size() const { return rows * cols; }

  auto cell(Index y, Index x) { return cells.row(y * cols + x); }
  auto cell(Index y, Index x) const { return cells.row(y * cols + x); }
};

using FeatureMap = GridMap<float>;
using ClassScoreMap = GridMap<float>;

}  // namespace trident
