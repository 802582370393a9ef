#pragma once

// Dense kernels shared by every stage: row normalization, cosine similarity,
// masked softmax and half-pixel bilinear resampling. All functions are pure.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "trident/errors.hpp"
#include "trident/types.hpp"

namespace trident {

inline constexpr double kZeroNormThreshold = 1e-12;

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw ValidationError(std::string(what) + ": non-finite entry");
}

/// Scales every row to unit L2 norm. Rows whose norm is below 1e-12 come back
/// as all-zero rows.
template <typename Derived>
RowMatrix<typename Derived::Scalar> l2_normalize_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  require_finite(m, "l2_normalize_rows");
  RowMatrix<Scalar> out = m;
  for (Index i = 0; i < out.rows(); ++i) {
    const Scalar norm = out.row(i).norm();
    if (static_cast<double>(norm) < kZeroNormThreshold)
      out.row(i).setZero();
    else
      out.row(i) /= norm;
  }
  return out;
}

/// Pairwise cosine similarity between the rows of `a` (n x d) and `b` (m x d).
/// Zero-norm rows yield zero entries.
template <typename DerivedA, typename DerivedB>
RowMatrix<typename DerivedA::Scalar> cosine_matrix(const Eigen::MatrixBase<DerivedA>& a,
                                                   const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("cosine_matrix: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()) + ")");
  }
  const auto an = l2_normalize_rows(a);
  const auto bn = l2_normalize_rows(b);
  RowMatrix<typename DerivedA::Scalar> out = an * bn.transpose();
  return out;
}

/// Keep-mask of entries with value >= threshold. For square inputs the
/// diagonal is always kept: self-similarity is 1 by definition, and forcing it
/// keeps rounding (0.99999994 < 1) or zero-norm rows from emptying a row.
template <typename Derived>
RowMask threshold_mask(const Eigen::MatrixBase<Derived>& c, double threshold) {
  using Scalar = typename Derived::Scalar;
  RowMask keep = (c.array() >= static_cast<Scalar>(threshold)).matrix();
  if (c.rows() == c.cols()) keep.diagonal().setConstant(true);
  return keep;
}

/// Row-wise softmax over kept entries only; masked entries are exactly zero.
/// Masked entries are excluded before the max is taken, so no infinities ever
/// enter the arithmetic.
template <typename Derived>
RowMatrix<typename Derived::Scalar> masked_softmax_rows(const Eigen::MatrixBase<Derived>& s, const RowMask& keep) {
  using Scalar = typename Derived::Scalar;
  if (keep.rows() != s.rows() || keep.cols() != s.cols()) throw ShapeError("masked_softmax_rows: mask shape differs");
  require_finite(s, "masked_softmax_rows");
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(s.rows(), s.cols());
  for (Index i = 0; i < s.rows(); ++i) {
    bool any = false;
    Scalar max_value = 0;
    for (Index j = 0; j < s.cols(); ++j) {
      if (!keep(i, j)) continue;
      if (!any || s(i, j) > max_value) max_value = s(i, j);
      any = true;
    }
    if (!any) throw ValidationError("masked_softmax_rows: row " + std::to_string(i) + " is fully masked");
    Scalar total = 0;
    for (Index j = 0; j < s.cols(); ++j) {
      if (!keep(i, j)) continue;
      out(i, j) = std::exp(s(i, j) - max_value);
      total += out(i, j);
    }
    out.row(i) /= total;
  }
  return out;
}

/// Unmasked row softmax of scale * s.
template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& s,
                                                 typename Derived::Scalar scale = 1) {
  using Scalar = typename Derived::Scalar;
  require_finite(s, "softmax_rows");
  RowMatrix<Scalar> out = s * scale;
  for (Index i = 0; i < out.rows(); ++i) {
    const Scalar max_value = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - max_value).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

/// Index of the first maximum in each row.
template <typename Derived>
std::vector<Index> argmax_rows(const Eigen::MatrixBase<Derived>& m) {
  std::vector<Index> labels(static_cast<std::size_t>(m.rows()), 0);
  for (Index i = 0; i < m.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < m.cols(); ++j)
      if (m(i, j) > m(i, best)) best = j;
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

namespace detail {

struct AxisSample {
  Index lo = 0;
  Index hi = 0;
  double frac = 0.0;
};

/// Half-pixel (align-corners = false) source positions for one axis.
inline std::vector<AxisSample> half_pixel_axis(Index in, Index out) {
  std::vector<AxisSample> samples(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<Index>(std::floor(src));
    AxisSample s;
    if (lo >= in - 1) {
      s.lo = s.hi = in - 1;
      s.frac = 0.0;
    } else {
      s.lo = lo;
      s.hi = lo + 1;
      s.frac = src - static_cast<double>(lo);
    }
    samples[static_cast<std::size_t>(o)] = s;
  }
  return samples;
}

inline void check_resize_sizes(Index in_h, Index in_w, Index out_h, Index out_w) {
  if (in_h < 1 || in_w < 1) throw ShapeError("bilinear_resize: empty input grid");
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output size must be positive");
}

/// Interpolates one output cell. Written as a + t(b - a) so that equal
/// neighbours reproduce their value exactly.
template <typename Scalar, typename Out>
void interpolate_cell(const GridMap<Scalar>& src, const AxisSample& ys, const AxisSample& xs, Out&& out) {
  const auto fy = static_cast<Scalar>(ys.frac);
  const auto fx = static_cast<Scalar>(xs.frac);
  const auto p00 = src.cell(ys.lo, xs.lo);
  const auto p01 = src.cell(ys.lo, xs.hi);
  const auto p10 = src.cell(ys.hi, xs.lo);
  const auto p11 = src.cell(ys.hi, xs.hi);
  const auto top = (p00 + fx * (p01 - p00)).eval();
  const auto bottom = (p10 + fx * (p11 - p10)).eval();
  out = top + fy * (bottom - top);
}

}  // namespace detail

/// Per-channel bilinear resampling with half-pixel centers. Returns the input
/// unchanged when the sizes already match.
template <typename Scalar>
GridMap<Scalar> bilinear_resize(const GridMap<Scalar>& src, Index out_h, Index out_w) {
  detail::check_resize_sizes(src.rows, src.cols, out_h, out_w);
  if (out_h == src.rows && out_w == src.cols) return src;
  const auto ys = detail::half_pixel_axis(src.rows, out_h);
  const auto xs = detail::half_pixel_axis(src.cols, out_w);
  GridMap<Scalar> out(out_h, out_w, src.channels());
  for (Index y = 0; y < out_h; ++y)
    for (Index x = 0; x < out_w; ++x)
      detail::interpolate_cell(src, ys[static_cast<std::size_t>(y)], xs[static_cast<std::size_t>(x)], out.cell(y, x));
  return out;
}

/// argmax(bilinear_resize(src, out_h, out_w)) computed pixel by pixel without
/// materializing the full-resolution score volume. Bit-identical to the
/// two-step route.
template <typename Scalar>
LabelMap upsample_argmax(const GridMap<Scalar>& src, Index out_h, Index out_w) {
  detail::check_resize_sizes(src.rows, src.cols, out_h, out_w);
  const auto ys = detail::half_pixel_axis(src.rows, out_h);
  const auto xs = detail::half_pixel_axis(src.cols, out_w);
  const bool same = out_h == src.rows && out_w == src.cols;
  LabelMap labels(out_h, out_w);
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> value(src.channels());
  for (Index y = 0; y < out_h; ++y) {
    for (Index x = 0; x < out_w; ++x) {
      if (same)
        value = src.cell(y, x);
      else
        detail::interpolate_cell(src, ys[static_cast<std::size_t>(y)], xs[static_cast<std::size_t>(x)], value);
      Index best = 0;
      for (Index j = 1; j < value.size(); ++j)
        if (value(j) > value(best)) best = j;
      labels(y, x) = static_cast<std::int32_t>(best);
    }
  }
  return labels;
}

/// One channel of bilinear_resize(src, out_h, out_w), as an out_h x out_w plane.
template <typename Scalar>
RowMatrix<Scalar> upsample_channel(const GridMap<Scalar>& src, Index channel, Index out_h, Index out_w) {
  GridMap<Scalar> single(src.rows, src.cols, RowMatrix<Scalar>(src.cells.col(channel)));
  const auto resized = bilinear_resize(single, out_h, out_w);
  return Eigen::Map<const RowMatrix<Scalar>>(resized.cells.data(), out_h, out_w);
}

}  // namespace trident
