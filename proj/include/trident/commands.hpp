#pragma once

// Command implementations behind the `trident` executable. Each returns a
// process exit code and writes human-readable output to `out`.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trident/ablation.hpp"
#include "trident/pipeline.hpp"
#include "trident/refine.hpp"

namespace trident {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;     ///< a check failed
inline constexpr int validation = 2;  ///< invalid bundle or configuration
inline constexpr int decoder = 3;     ///< decoder missing or failed
}  // namespace exit_code

/// Every setting a run can take; unset fields fall through to the next layer.
struct RunOverrides {
  std::optional<std::string> preset;
  std::optional<Index> shorter_side;
  std::optional<Index> window;
  std::optional<Index> stride;
  std::optional<std::string> paradigm;
  std::optional<std::string> correlation;
  std::optional<double> epsilon;
  std::optional<float> alpha;
  std::optional<bool> refine;
  std::optional<bool> allow_fallback;
  std::optional<std::string> decoder_cmd;
  std::optional<bool> deterministic;
  std::optional<int> workers;
  std::optional<std::filesystem::path> out;
};

/// Reads overrides from a JSON object. Unknown keys are rejected.
RunOverrides overrides_from_json(const nlohmann::json& j);
RunOverrides read_config_file(const std::filesystem::path& path);

struct RunConfig {
  std::optional<std::string> preset;
  std::optional<Index> shorter_side;
  std::optional<Index> window;
  std::optional<Index> stride;
  Paradigm paradigm = Paradigm::splice_then_segment;
  PipelineConfig pipeline;
  RefineConfig refine_config;
  bool refine = false;
  std::optional<std::string> decoder_cmd;
  std::filesystem::path out = "trident_out";

  bool deterministic() const { return pipeline.policy.deterministic; }
};

/// Layers defaults < preset < config file < command line. The decoder command
/// falls back to TRIDENT_DECODER_CMD when no layer sets it.
RunConfig resolve_run_config(const RunOverrides& cli, const std::optional<RunOverrides>& file = std::nullopt);

/// Expands each path: a bundle directory stands for itself, any other
/// directory for the bundles below it.
std::vector<std::filesystem::path> expand_bundle_paths(const std::vector<std::filesystem::path>& paths);

/// Throws ConfigError when the bundle disagrees with the configured sizes.
void check_bundle_matches(const Bundle& bundle, const RunConfig& config);

int cmd_validate(const std::vector<std::filesystem::path>& paths, std::ostream& out);

/// Writes <out>/<bundle>/{labels.png, scores.trdt, log.json}. With
/// `decoder` null and refinement on, a SubprocessDecoder is started from the
/// configured command.
int cmd_segment(const RunConfig& config, const std::vector<std::filesystem::path>& paths, std::ostream& out,
                DecoderBackend* decoder = nullptr);

struct CompareRow {
  std::string bundle;
  std::optional<double> baseline_miou;
  std::optional<double> trident_miou;
  double baseline_seam = 0.0;
  std::optional<double> trident_seam;
  bool trident_available = false;

  std::optional<double> delta() const;
};

std::vector<CompareRow> compare_bundles(const RunConfig& config, const std::vector<std::filesystem::path>& paths);
nlohmann::json compare_json(const std::vector<CompareRow>& rows);
std::string compare_table(const std::vector<CompareRow>& rows);

/// Prints the comparison and writes <out>/compare.json.
int cmd_compare(const RunConfig& config, const std::vector<std::filesystem::path>& paths, std::ostream& out);

enum class SelfcheckFault { none, nan, magic };

/// Generates synthetic bundles in a temporary directory and runs the
/// invariant suite over them. `fault` corrupts one bundle file first.
int cmd_selfcheck(std::ostream& out, SelfcheckFault fault = SelfcheckFault::none, std::uint64_t seed = 1);

/// Writes the seam fixture (`scene` = "seam") or a random scene.
int cmd_synth(const std::string& scene, const std::filesystem::path& dir, std::uint64_t seed, double ambiguity,
              std::ostream& out);

/// Prints the ablation table and writes <out>/ablation.json.
int cmd_ablate(const RunConfig& config, const std::vector<AblationCell>& cells, std::ostream& out);

/// Runs the configured preset over every bundle under `root`.
int cmd_preset(const RunConfig& config, const std::filesystem::path& root, std::ostream& out,
               DecoderBackend* decoder = nullptr);

}  // namespace trident
