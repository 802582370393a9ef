#include <CLI11.hpp>
#include <iostream>

#include "trident/commands.hpp"
#include "trident/errors.hpp"
#include "trident/log.hpp"

namespace fs = std::filesystem;
using namespace trident;

namespace {

/// Flags shared by every command that runs the pipeline.
struct RunFlags {
  RunOverrides cli;
  std::string config_file;
  bool refine = false;
  bool no_fallback = false;
  bool deterministic = false;
  CLI::Option* refine_opt = nullptr;
  CLI::Option* fallback_opt = nullptr;
  CLI::Option* deterministic_opt = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file (command-line flags take precedence)");
    app->add_option("--preset", cli.preset, "Benchmark preset (voc20, voc21, object, stuff, context59, ...)");
    app->add_option("--shorter-side", cli.shorter_side, "Expected shorter image side");
    app->add_option("--window", cli.window, "Expected window size in pixels");
    app->add_option("--stride", cli.stride, "Expected window stride in pixels");
    app->add_option("--paradigm", cli.paradigm, "baseline (segment-then-splice) or trident (splice-then-segment)");
    app->add_option("--corr", cli.correlation, "Global correlation: cosine, attention, affinity or identity");
    app->add_option("--epsilon", cli.epsilon, "Cosine mask threshold in [-1, 1]");
    app->add_option("--alpha", cli.alpha, "Mask prompt scale");
    refine_opt = app->add_flag("--refine", refine, "Refine with the mask decoder");
    fallback_opt = app->add_flag("--no-fallback", no_fallback, "Fail instead of falling back when decoding fails");
    app->add_option("--decoder-cmd", cli.decoder_cmd, "Decoder command (default: $TRIDENT_DECODER_CMD)");
    deterministic_opt = app->add_flag("--deterministic", deterministic, "Single-threaded, timing-free output");
    app->add_option("--workers", cli.workers, "Worker threads");
    app->add_option("--out", cli.out, "Output directory");
  }

  RunConfig resolve() {
    if (refine_opt->count()) cli.refine = true;
    if (fallback_opt->count()) cli.allow_fallback = false;
    if (deterministic_opt->count()) cli.deterministic = true;
    std::optional<RunOverrides> file;
    if (!config_file.empty()) file = read_config_file(config_file);
    return resolve_run_config(cli, file);
  }
};

std::vector<Paradigm> parse_paradigms(const std::vector<std::string>& names) {
  std::vector<Paradigm> out;
  for (const auto& n : names) out.push_back(parse_paradigm(n));
  return out;
}

std::vector<CorrelationKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<CorrelationKind> out;
  for (const auto& n : names) out.push_back(parse_correlation_kind(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free open-vocabulary segmentation engine"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  std::vector<fs::path> paths;

  auto* validate = app.add_subcommand("validate", "Check bundle directories");
  validate->add_option("bundles", paths, "Bundle directories or roots")->required();

  RunFlags segment_flags;
  auto* segment = app.add_subcommand("segment", "Segment bundles and write label maps");
  segment_flags.attach(segment);
  segment->add_option("bundles", paths, "Bundle directories or roots")->required();

  RunFlags compare_flags;
  auto* compare = app.add_subcommand("compare", "Compare both paradigms on the same bundles");
  compare_flags.attach(compare);
  compare->add_option("bundles", paths, "Bundle directories or roots")->required();

  RunFlags preset_flags;
  fs::path preset_root;
  auto* preset = app.add_subcommand("preset", "Run a benchmark preset over a bundle root");
  preset_flags.attach(preset);
  preset->add_option("root", preset_root, "Directory of bundles")->required();

  RunFlags ablate_flags;
  fs::path ablate_root;
  std::vector<std::string> ablate_paradigms = {"baseline", "trident"};
  std::vector<std::string> ablate_kinds = {"cosine", "attention", "affinity"};
  std::vector<std::string> ablate_resolutions;
  bool ablate_standard = false;
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  ablate_flags.attach(ablate);
  ablate->add_option("root", ablate_root, "Bundle root (one subdirectory per resolution when resolutions are set)")
      ->required();
  ablate->add_option("--paradigms", ablate_paradigms, "Paradigms to include")->delimiter(',');
  ablate->add_option("--kinds", ablate_kinds, "Correlation kinds to include")->delimiter(',');
  ablate->add_option("--resolutions", ablate_resolutions, "Settings such as 448-336-224")->delimiter(',');
  ablate->add_flag("--standard-resolutions", ablate_standard, "Use 336-336-112, 448-336-224 and 576-336-224");

  std::string inject = "none";
  std::uint64_t selfcheck_seed = 1;
  auto* selfcheck = app.add_subcommand("selfcheck", "Run the invariant suite on synthetic bundles");
  selfcheck->add_option("--inject", inject, "Corrupt a bundle first: none, nan or magic")
      ->check(CLI::IsMember({"none", "nan", "magic"}));
  selfcheck->add_option("--seed", selfcheck_seed, "Seed for the random scenes");

  std::string scene = "seam";
  fs::path synth_out;
  std::uint64_t synth_seed = 7;
  double ambiguity = 0.9;
  auto* synth = app.add_subcommand("synth", "Write a synthetic bundle");
  synth->add_option("--scene", scene, "seam or random")->check(CLI::IsMember({"seam", "random"}));
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--ambiguity", ambiguity, "Blend toward the window mean for windows clipping an object");
  synth->add_option("--out", synth_out, "Bundle directory")->required();

  CLI11_PARSE(app, argc, argv);
  if (quiet) log::set_sink([](log::Level level, std::string_view m) {
    if (level == log::Level::error) std::cerr << "error: " << m << '\n';
  });

  try {
    if (*validate) return cmd_validate(paths, std::cout);
    if (*segment) return cmd_segment(segment_flags.resolve(), paths, std::cout);
    if (*compare) return cmd_compare(compare_flags.resolve(), paths, std::cout);
    if (*preset) return cmd_preset(preset_flags.resolve(), preset_root, std::cout);
    if (*ablate) {
      const RunConfig config = ablate_flags.resolve();
      std::vector<ResolutionSetting> resolutions;
      if (ablate_standard) resolutions = standard_resolutions();
      for (const auto& r : ablate_resolutions) resolutions.push_back(parse_resolution(r));
      const auto cells =
          ablation_grid(parse_paradigms(ablate_paradigms), parse_kinds(ablate_kinds), resolutions, ablate_root);
      return cmd_ablate(config, cells, std::cout);
    }
    if (*selfcheck) {
      const auto fault = inject == "nan" ? SelfcheckFault::nan
                         : inject == "magic" ? SelfcheckFault::magic
                                             : SelfcheckFault::none;
      return cmd_selfcheck(std::cout, fault, selfcheck_seed);
    }
    if (*synth) return cmd_synth(scene, synth_out, synth_seed, ambiguity, std::cout);
  } catch (const DecoderError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::decoder;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::validation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::failure;
  }
  return exit_code::failure;
}
