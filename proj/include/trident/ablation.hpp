#pragma once

// Ablation grid: one metrics row per (paradigm, correlation kind, resolution
// setting). Rows whose bundles are missing or lack the needed tensors are kept
// and marked unavailable.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trident/pipeline.hpp"

namespace trident {

/// Shorter side, window and stride, written "448-336-224".
struct ResolutionSetting {
  Index shorter_side = 0;
  Index window = 0;
  Index stride = 0;

  std::string label() const;
  friend bool operator==(const ResolutionSetting&, const ResolutionSetting&) = default;
};

ResolutionSetting parse_resolution(std::string_view text);

/// The three settings of the input-resolution ablation.
const std::vector<ResolutionSetting>& standard_resolutions();

struct AblationCell {
  Paradigm paradigm = Paradigm::splice_then_segment;
  CorrelationKind kind = CorrelationKind::affinity;
  std::optional<ResolutionSetting> resolution;  ///< checked against each bundle when set
  std::filesystem::path bundle_root;
};

struct AblationRow {
  AblationCell cell;
  bool available = false;
  std::string reason;  ///< why the row is unavailable
  std::size_t images = 0;
  std::optional<double> miou;
  std::optional<double> pixel_accuracy;
};

/// Cartesian product paradigms x kinds x resolutions. With resolutions, bundles
/// are looked up under `root / setting.label()`; otherwise directly under
/// `root`.
std::vector<AblationCell> ablation_grid(const std::vector<Paradigm>& paradigms,
                                        const std::vector<CorrelationKind>& kinds,
                                        const std::vector<ResolutionSetting>& resolutions,
                                        const std::filesystem::path& root);

std::vector<AblationRow> ablation_run(const std::vector<AblationCell>& cells, const PipelineConfig& base);

nlohmann::json ablation_json(const std::vector<AblationRow>& rows);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace trident
