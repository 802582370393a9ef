#pragma once

// The two end-to-end paradigms.
//
//   segment-then-splice: every window is correlated, projected and classified
//   on its own; window score maps are spliced and upsampled.
//
//   splice-then-segment: window features are spliced first, resampled onto the
//   SAM grid, mixed by one global correlation matrix and classified once.

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trident/correlation.hpp"
#include "trident/interchange.hpp"
#include "trident/metrics.hpp"
#include "trident/numerics.hpp"
#include "trident/parallel.hpp"
#include "trident/tiling.hpp"

namespace trident {

inline constexpr float kLogitScale = 100.0f;

enum class Paradigm {
  segment_then_splice,  ///< "baseline"
  splice_then_segment,  ///< "trident"
};

std::string_view to_string(Paradigm p);
Paradigm parse_paradigm(std::string_view name);

enum class WindowCorrelation {
  dino,      ///< cosine-softmax over the window's DINO tokens
  identity,  ///< no window-local mixing
};

struct PipelineConfig {
  CorrelationKind global_kind = CorrelationKind::affinity;
  WindowCorrelation window_correlation = WindowCorrelation::dino;
  double epsilon = 0.0;
  SpliceMode score_splice = SpliceMode::mean;
  float logit_scale = kLogitScale;
  ExecutionPolicy policy;

  void validate() const;
};

/// Patch-level classification: softmax over classes of scale * cosine(feature,
/// text). Zero-norm text rows are rejected.
template <typename Scalar, typename DerivedT>
GridMap<Scalar> classify(const GridMap<Scalar>& features, const Eigen::MatrixBase<DerivedT>& text_embeddings,
                         Scalar scale = Scalar(kLogitScale)) {
  if (features.channels() != text_embeddings.cols())
    throw ShapeError("classify: feature dimension " + std::to_string(features.channels()) +
                     " differs from text dimension " + std::to_string(text_embeddings.cols()));
  if (text_embeddings.rows() < 1) throw ConfigError("classify: no classes");
  for (Index k = 0; k < text_embeddings.rows(); ++k)
    if (static_cast<double>(text_embeddings.row(k).norm()) < kZeroNormThreshold)
      throw ConfigError("classify: text embedding for class " + std::to_string(k) + " has zero norm");
  const auto cosine = cosine_matrix(features.cells, text_embeddings);
  return GridMap<Scalar>(features.rows, features.cols, softmax_rows(cosine, scale));
}

struct RunStats {
  std::size_t window_count = 0;
  Paradigm paradigm = Paradigm::splice_then_segment;
  CorrelationKind kind = CorrelationKind::identity;
  std::map<std::string, double> timings_ms;
};

struct SegmentationResult {
  LabelMap labels;       ///< image_height x image_width
  ClassScoreMap scores;  ///< score grid before upsampling
  RunStats stats;
};

/// Per-window features (A^i V^i) P for every window of the bundle.
std::vector<FeatureMap> compute_window_features(const Bundle& bundle, const PipelineConfig& config);

/// The global n_s x n_s correlation for splice-then-segment.
CorrelationMatrix<float> global_correlation(const Bundle& bundle, const PipelineConfig& config);

/// A . I, row-parallel under `policy`. Identity correlations return `features`.
FeatureMap aggregate(const CorrelationMatrix<float>& a, const FeatureMap& features, const ExecutionPolicy& policy);

/// Whether `bundle` carries the tensors `paradigm` needs under `kind`.
bool supports(const Bundle& bundle, Paradigm paradigm, CorrelationKind kind);

SegmentationResult segment_then_splice(const Bundle& bundle, const PipelineConfig& config);
SegmentationResult splice_then_segment(const Bundle& bundle, const PipelineConfig& config);
SegmentationResult run_paradigm(const Bundle& bundle, Paradigm paradigm, const PipelineConfig& config);

struct Preset {
  std::string name;
  Index shorter_side = 0;
  Index window = 336;
  Index stride = 224;
  bool has_background = false;
};

const std::vector<Preset>& presets();
const Preset& find_preset(std::string_view name);

/// Throws ConfigError when the bundle was not exported with `preset`'s
/// resolution, window and stride.
void check_bundle_matches_preset(const Bundle& bundle, const Preset& preset);

struct BundleReport {
  std::string name;
  std::optional<double> miou;
  std::optional<ConfusionMatrix> confusion;
  RunStats stats;
};

struct PresetReport {
  std::string preset;
  Paradigm paradigm = Paradigm::splice_then_segment;
  std::vector<BundleReport> bundles;
  std::optional<ConfusionMatrix> confusion;  ///< summed over bundles with ground truth
  std::optional<double> miou;
};

class DecoderBackend;
struct RefineConfig;

struct PresetRunOptions {
  PipelineConfig pipeline;
  std::optional<std::filesystem::path> output_dir;  ///< PNG + score tensor per bundle
  DecoderBackend* decoder = nullptr;                 ///< refinement runs when set
  const RefineConfig* refine = nullptr;
};

/// Runs `paradigm` with the preset's settings over every bundle under
/// `bundle_root` and aggregates mIoU over those that carry ground truth.
PresetReport run_preset(std::string_view preset_name, const std::filesystem::path& bundle_root, Paradigm paradigm,
                        const PresetRunOptions& options);

}  // namespace trident
