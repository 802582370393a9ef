#pragma once

// Sliding-window planning and splicing of per-window feature / score grids
// back onto the full-image patch grid.

#include <span>
#include <utility>
#include <vector>

#include "trident/parallel.hpp"
#include "trident/types.hpp"

namespace trident {

struct WindowOrigin {
  Index y = 0;  ///< pixels
  Index x = 0;  ///< pixels
  friend bool operator==(const WindowOrigin&, const WindowOrigin&) = default;
};

struct WindowLayout {
  Index image_height = 0;
  Index image_width = 0;
  Index window = 0;
  Index stride = 0;
  Index patch = 0;
  std::vector<Index> row_origins;
  std::vector<Index> col_origins;
  std::vector<WindowOrigin> origins;  ///< row-major over (row_origins x col_origins)

  std::size_t window_count() const { return origins.size(); }
  Index tokens_per_side() const { return window / patch; }
  Index tokens_per_window() const { return tokens_per_side() * tokens_per_side(); }
  Index grid_rows() const { return image_height / patch; }
  Index grid_cols() const { return image_width / patch; }

  /// True when the image and every origin fall on patch boundaries, which
  /// splicing onto the patch grid requires.
  bool patch_aligned() const;
};

/// Plans windows of side `window` every `stride` pixels; the last origin on
/// each axis is clamped to axis - window so that windows never leave the image.
WindowLayout plan_windows(Index image_height, Index image_width, Index window, Index stride, Index patch);

struct ImageSize {
  Index height = 0;
  Index width = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Scales so the shorter side equals `target`; the longer side is rounded to
/// the nearest multiple of `patch` (halves round up) and never drops below
/// `target`.
ImageSize resize_shorter_side(ImageSize source, Index target, Index patch = 16);

enum class SpliceMode {
  mean,  ///< unweighted mean of every window covering a cell
  vote,  ///< per-window argmax labels, cell score = vote share
};

/// Splices per-window token grids (windows[i] at layout.origins[i]) into one
/// grid over the whole image; overlapping cells take the mean. Accumulation is
/// carried out in double precision, so the result does not depend on the
/// order of windows.
FeatureMap splice_features(std::span<const FeatureMap> windows, const WindowLayout& layout,
                           const ExecutionPolicy& policy = {});

ClassScoreMap splice_scores(std::span<const ClassScoreMap> windows, const WindowLayout& layout,
                            SpliceMode mode = SpliceMode::mean, const ExecutionPolicy& policy = {});

}  // namespace trident
