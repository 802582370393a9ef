#pragma once

// Correlation / affinity matrices used to mix patch features: window-local
// DINO correlation, SAM cosine-softmax, head-reduced attention and the hybrid
// affinity that keeps attention weights only where feature cosine clears a
// threshold.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trident/errors.hpp"
#include "trident/log.hpp"
#include "trident/numerics.hpp"
#include "trident/types.hpp"

namespace trident {

enum class CorrelationKind { identity, cosine, attention, affinity };

inline std::string_view to_string(CorrelationKind kind) {
  switch (kind) {
    case CorrelationKind::identity: return "identity";
    case CorrelationKind::cosine: return "cosine";
    case CorrelationKind::attention: return "attention";
    case CorrelationKind::affinity: return "affinity";
  }
  return "?";
}

inline CorrelationKind parse_correlation_kind(std::string_view name) {
  if (name == "identity" || name == "none") return CorrelationKind::identity;
  if (name == "cosine" || name == "cos") return CorrelationKind::cosine;
  if (name == "attention" || name == "attn") return CorrelationKind::attention;
  if (name == "affinity" || name == "aff") return CorrelationKind::affinity;
  throw ConfigError("unknown correlation kind '" + std::string(name) +
                    "' (expected identity, cosine, attention or affinity)");
}

struct AffinityConfig {
  double epsilon = 0.0;  ///< cosine threshold, -1 <= epsilon <= 1
  CorrelationKind kind = CorrelationKind::affinity;

  void validate() const {
    if (!(epsilon >= -1.0 && epsilon <= 1.0))
      throw ConfigError("epsilon must lie in [-1, 1], got " + std::to_string(epsilon));
  }
};

/// Row-stochastic n x n aggregation weights over an h x w token grid.
template <typename Scalar>
struct CorrelationMatrix {
  RowMatrix<Scalar> values;
  CorrelationKind kind = CorrelationKind::identity;
  Index grid_rows = 0;
  Index grid_cols = 0;

  Index size() const { return values.rows(); }
};

inline void check_epsilon(double epsilon) { AffinityConfig{epsilon}.validate(); }

template <typename Scalar>
CorrelationMatrix<Scalar> identity_correlation(Index grid_rows, Index grid_cols) {
  const Index n = grid_rows * grid_cols;
  return {RowMatrix<Scalar>::Identity(n, n), CorrelationKind::identity, grid_rows, grid_cols};
}

namespace detail {

template <typename Derived>
CorrelationMatrix<typename Derived::Scalar> cosine_softmax(const Eigen::MatrixBase<Derived>& tokens, double epsilon,
                                                            Index grid_rows, Index grid_cols) {
  check_epsilon(epsilon);
  if (tokens.rows() < 1) throw ShapeError("correlation: no tokens");
  if (grid_rows * grid_cols != tokens.rows())
    throw ShapeError("correlation: grid " + std::to_string(grid_rows) + "x" + std::to_string(grid_cols) +
                     " does not match " + std::to_string(tokens.rows()) + " tokens");
  const auto c = cosine_matrix(tokens, tokens);
  return {masked_softmax_rows(c, threshold_mask(c, epsilon)), CorrelationKind::cosine, grid_rows, grid_cols};
}

}  // namespace detail

/// Window-local correlation from DINO patch tokens: cosine similarity, entries
/// below epsilon masked, then a row softmax.
template <typename Derived>
CorrelationMatrix<typename Derived::Scalar> proxy_window_correlation(const Eigen::MatrixBase<Derived>& dino_tokens,
                                                                      double epsilon, Index grid_rows,
                                                                      Index grid_cols) {
  return detail::cosine_softmax(dino_tokens, epsilon, grid_rows, grid_cols);
}

/// Global correlation from SAM encoder features, same construction as the
/// window-local one but over the whole image grid.
template <typename Derived>
CorrelationMatrix<typename Derived::Scalar> sam_cosine_affinity(const Eigen::MatrixBase<Derived>& features,
                                                                 double epsilon, Index grid_rows, Index grid_cols) {
  return detail::cosine_softmax(features, epsilon, grid_rows, grid_cols);
}

/// (A V) P reshaped onto the window's token grid.
template <typename Scalar, typename DerivedV, typename DerivedP>
GridMap<Scalar> window_features(const Eigen::MatrixBase<DerivedV>& values, const CorrelationMatrix<Scalar>& a,
                                const Eigen::MatrixBase<DerivedP>& projection) {
  if (a.values.rows() != values.rows() || a.values.cols() != values.rows())
    throw ShapeError("window_features: correlation is " + std::to_string(a.values.rows()) + "x" +
                     std::to_string(a.values.cols()) + " but window has " + std::to_string(values.rows()) +
                     " tokens");
  if (projection.rows() != values.cols())
    throw ShapeError("window_features: projection expects dimension " + std::to_string(projection.rows()) +
                     ", values have " + std::to_string(values.cols()));
  RowMatrix<Scalar> mixed;
  if (a.kind == CorrelationKind::identity)
    mixed = values;
  else
    mixed = a.values * values;
  RowMatrix<Scalar> projected = mixed * projection;
  return GridMap<Scalar>(a.grid_rows, a.grid_cols, std::move(projected));
}

inline constexpr double kHeadStochasticTolerance = 1e-3;

/// Arithmetic mean over attention heads. Every head must be nonnegative; a
/// head row whose sum is off by more than 1e-3 is renormalized with a warning.
template <typename Scalar>
RowMatrix<Scalar> reduce_attention_heads(const std::vector<RowMatrix<Scalar>>& heads) {
  if (heads.empty()) throw ShapeError("reduce_attention_heads: no heads");
  const Index n = heads.front().rows();
  RowMatrix<Scalar> sum = RowMatrix<Scalar>::Zero(n, n);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const auto& head = heads[h];
    if (head.rows() != n || head.cols() != n)
      throw ShapeError("reduce_attention_heads: head " + std::to_string(h) + " is not " + std::to_string(n) + "x" +
                       std::to_string(n));
    require_finite(head, "reduce_attention_heads");
    if ((head.array() < Scalar(0)).any())
      throw ValidationError("reduce_attention_heads: head " + std::to_string(h) + " has negative weights");
    for (Index i = 0; i < n; ++i) {
      const Scalar row_sum = head.row(i).sum();
      if (std::abs(static_cast<double>(row_sum) - 1.0) > kHeadStochasticTolerance) {
        if (row_sum <= Scalar(0))
          throw ValidationError("reduce_attention_heads: head " + std::to_string(h) + " row " + std::to_string(i) +
                                " sums to zero");
        log::warn("attention head " + std::to_string(h) + " row " + std::to_string(i) + " sums to " +
                  std::to_string(static_cast<double>(row_sum)) + "; renormalizing");
        sum.row(i) += head.row(i) / row_sum;
      } else {
        sum.row(i) += head.row(i);
      }
    }
  }
  sum /= static_cast<Scalar>(heads.size());
  return sum;
}

/// Raw attention used directly as the correlation (rows L1-normalized).
template <typename Derived>
CorrelationMatrix<typename Derived::Scalar> attention_correlation(const Eigen::MatrixBase<Derived>& w, Index grid_rows,
                                                                   Index grid_cols) {
  using Scalar = typename Derived::Scalar;
  if (w.rows() != w.cols() || w.rows() != grid_rows * grid_cols)
    throw ShapeError("attention_correlation: attention shape does not match the token grid");
  require_finite(w, "attention_correlation");
  if ((w.array() < Scalar(0)).any()) throw ValidationError("attention_correlation: negative weights");
  RowMatrix<Scalar> a = w;
  for (Index i = 0; i < a.rows(); ++i) {
    const Scalar s = a.row(i).sum();
    if (s <= Scalar(0)) throw ValidationError("attention_correlation: row " + std::to_string(i) + " is all zero");
    a.row(i) /= s;
  }
  return {std::move(a), CorrelationKind::attention, grid_rows, grid_cols};
}

/// Hybrid affinity: W_ij kept where C_ij >= epsilon, zero elsewhere, rows
/// renormalized to sum 1. Rows where nothing was masked are copied verbatim,
/// so epsilon = -1 reproduces W exactly. A row left empty by masking (only
/// possible when W has a zero diagonal) falls back to the self indicator.
template <typename DerivedW, typename DerivedC>
CorrelationMatrix<typename DerivedW::Scalar> hybrid_affinity(const Eigen::MatrixBase<DerivedW>& w,
                                                              const Eigen::MatrixBase<DerivedC>& c, double epsilon,
                                                              Index grid_rows, Index grid_cols) {
  using Scalar = typename DerivedW::Scalar;
  check_epsilon(epsilon);
  if (w.rows() != w.cols() || c.rows() != w.rows() || c.cols() != w.cols())
    throw ShapeError("hybrid_affinity: W and C must be equal-sized square matrices");
  if (w.rows() != grid_rows * grid_cols) throw ShapeError("hybrid_affinity: matrix size does not match the token grid");
  require_finite(w, "hybrid_affinity");
  require_finite(c, "hybrid_affinity");
  if ((w.array() < Scalar(0)).any()) throw ValidationError("hybrid_affinity: attention has negative weights");

  const RowMask keep = threshold_mask(c, epsilon);
  RowMatrix<Scalar> a = RowMatrix<Scalar>::Zero(w.rows(), w.cols());
  for (Index i = 0; i < w.rows(); ++i) {
    if (keep.row(i).all()) {
      a.row(i) = w.row(i);
      continue;
    }
    Scalar total = 0;
    for (Index j = 0; j < w.cols(); ++j) {
      if (keep(i, j)) {
        a(i, j) = w(i, j);
        total += w(i, j);
      }
    }
    if (total > Scalar(0)) {
      a.row(i) /= total;
    } else {
      log::warn("hybrid_affinity: row " + std::to_string(i) + " is empty after masking; using self indicator");
      a.row(i).setZero();
      a(i, i) = Scalar(1);
    }
  }
  return {std::move(a), CorrelationKind::affinity, grid_rows, grid_cols};
}

}  // namespace trident
