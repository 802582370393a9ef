#include "trident/pipeline.hpp"

#include <algorithm>

#include "trident/log.hpp"
#include "trident/refine.hpp"

namespace trident {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

const SamTensors& require_sam(const Bundle& bundle) {
  if (!bundle.sam) throw ConfigError("bundle '" + bundle.name + "' has no SAM features");
  return *bundle.sam;
}

}  // namespace

std::string_view to_string(Paradigm p) {
  return p == Paradigm::segment_then_splice ? "baseline" : "trident";
}

Paradigm parse_paradigm(std::string_view name) {
  if (name == "baseline" || name == "segment-then-splice") return Paradigm::segment_then_splice;
  if (name == "trident" || name == "splice-then-segment") return Paradigm::splice_then_segment;
  throw ConfigError("unknown paradigm '" + std::string(name) + "' (expected baseline or trident)");
}

void PipelineConfig::validate() const {
  check_epsilon(epsilon);
  if (!(logit_scale > 0.0f)) throw ConfigError("logit scale must be positive");
}

std::vector<FeatureMap> compute_window_features(const Bundle& bundle, const PipelineConfig& config) {
  const Index side = bundle.layout.tokens_per_side();
  std::vector<FeatureMap> features(bundle.windows.size());
  parallel_for(static_cast<std::ptrdiff_t>(bundle.windows.size()), config.policy,
               [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
                 for (auto i = begin; i < end; ++i) {
                   const auto& w = bundle.windows[static_cast<std::size_t>(i)];
                   const auto a = config.window_correlation == WindowCorrelation::dino
                                      ? proxy_window_correlation(w.dino, config.epsilon, side, side)
                                      : identity_correlation<float>(side, side);
                   features[static_cast<std::size_t>(i)] = window_features(w.values, a, bundle.projection);
                 }
               });
  return features;
}

bool supports(const Bundle& bundle, Paradigm paradigm, CorrelationKind kind) {
  if (paradigm == Paradigm::segment_then_splice) return true;
  if (!bundle.sam) return false;
  if (kind == CorrelationKind::attention || kind == CorrelationKind::affinity) return bundle.sam->attention.has_value();
  return true;
}

CorrelationMatrix<float> global_correlation(const Bundle& bundle, const PipelineConfig& config) {
  const auto& sam = require_sam(bundle);
  switch (config.global_kind) {
    case CorrelationKind::identity:
      return identity_correlation<float>(sam.grid_rows, sam.grid_cols);
    case CorrelationKind::cosine:
      return sam_cosine_affinity(sam.features, config.epsilon, sam.grid_rows, sam.grid_cols);
    case CorrelationKind::attention:
      if (!sam.attention) throw ConfigError("bundle '" + bundle.name + "' has no SAM attention");
      return attention_correlation(*sam.attention, sam.grid_rows, sam.grid_cols);
    case CorrelationKind::affinity: {
      if (!sam.attention) throw ConfigError("bundle '" + bundle.name + "' has no SAM attention");
      const auto c = cosine_matrix(sam.features, sam.features);
      return hybrid_affinity(*sam.attention, c, config.epsilon, sam.grid_rows, sam.grid_cols);
    }
  }
  throw ConfigError("unknown correlation kind");
}

FeatureMap aggregate(const CorrelationMatrix<float>& a, const FeatureMap& features, const ExecutionPolicy& policy) {
  if (a.size() != features.size())
    throw ShapeError("aggregate: correlation over " + std::to_string(a.size()) + " tokens, features have " +
                     std::to_string(features.size()));
  if (a.kind == CorrelationKind::identity) return features;
  FeatureMap out(features.rows, features.cols, features.channels());
  // Fixed-size row blocks keep the product's blocking, and so its rounding,
  // independent of the worker count.
  constexpr Index kBlock = 64;
  const Index blocks = (a.size() + kBlock - 1) / kBlock;
  parallel_for(blocks, policy, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    for (auto blk = begin; blk < end; ++blk) {
      const Index row = blk * kBlock;
      const Index count = std::min(kBlock, a.size() - row);
      out.cells.middleRows(row, count).noalias() = a.values.middleRows(row, count) * features.cells;
    }
  });
  return out;
}

SegmentationResult segment_then_splice(const Bundle& bundle, const PipelineConfig& config) {
  config.validate();
  SegmentationResult result;
  result.stats.paradigm = Paradigm::segment_then_splice;
  result.stats.kind = config.window_correlation == WindowCorrelation::dino ? CorrelationKind::cosine
                                                                           : CorrelationKind::identity;
  result.stats.window_count = bundle.windows.size();

  auto t = Clock::now();
  const auto features = compute_window_features(bundle, config);
  result.stats.timings_ms["window_features"] = elapsed_ms(t);

  t = Clock::now();
  std::vector<ClassScoreMap> window_scores(features.size());
  parallel_for(static_cast<std::ptrdiff_t>(features.size()), config.policy,
               [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
                 for (auto i = begin; i < end; ++i)
                   window_scores[static_cast<std::size_t>(i)] = classify(
                       features[static_cast<std::size_t>(i)], bundle.text_embeddings, config.logit_scale);
               });
  result.stats.timings_ms["classify"] = elapsed_ms(t);

  t = Clock::now();
  result.scores = splice_scores(window_scores, bundle.layout, config.score_splice, config.policy);
  result.stats.timings_ms["splice"] = elapsed_ms(t);

  t = Clock::now();
  result.labels = upsample_argmax(result.scores, bundle.image_height, bundle.image_width);
  result.stats.timings_ms["upsample"] = elapsed_ms(t);
  return result;
}

SegmentationResult splice_then_segment(const Bundle& bundle, const PipelineConfig& config) {
  config.validate();
  const auto& sam = require_sam(bundle);
  SegmentationResult result;
  result.stats.paradigm = Paradigm::splice_then_segment;
  result.stats.kind = config.global_kind;
  result.stats.window_count = bundle.windows.size();

  auto t = Clock::now();
  const auto features = compute_window_features(bundle, config);
  result.stats.timings_ms["window_features"] = elapsed_ms(t);

  t = Clock::now();
  const auto spliced = splice_features(features, bundle.layout, config.policy);
  const auto resized = bilinear_resize(spliced, sam.grid_rows, sam.grid_cols);
  result.stats.timings_ms["splice"] = elapsed_ms(t);

  t = Clock::now();
  const auto a = global_correlation(bundle, config);
  result.stats.timings_ms["correlation"] = elapsed_ms(t);

  t = Clock::now();
  const auto mixed = aggregate(a, resized, config.policy);
  result.stats.timings_ms["aggregate"] = elapsed_ms(t);

  t = Clock::now();
  result.scores = classify(mixed, bundle.text_embeddings, config.logit_scale);
  result.stats.timings_ms["classify"] = elapsed_ms(t);

  t = Clock::now();
  result.labels = upsample_argmax(result.scores, bundle.image_height, bundle.image_width);
  result.stats.timings_ms["upsample"] = elapsed_ms(t);
  return result;
}

SegmentationResult run_paradigm(const Bundle& bundle, Paradigm paradigm, const PipelineConfig& config) {
  return paradigm == Paradigm::segment_then_splice ? segment_then_splice(bundle, config)
                                                   : splice_then_segment(bundle, config);
}

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = {
      {"voc20", 336, 336, 112, false},     {"voc21", 448, 336, 224, true},  {"object", 448, 336, 224, true},
      {"stuff", 448, 336, 224, false},     {"context59", 576, 336, 224, false},
      {"context60", 576, 336, 224, true}, {"ade", 576, 336, 224, false},   {"city", 688, 336, 224, false},
  };
  return table;
}

const Preset& find_preset(std::string_view name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  std::string valid;
  for (const auto& p : presets()) valid += (valid.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown preset '" + std::string(name) + "' (valid: " + valid + ")");
}

void check_bundle_matches_preset(const Bundle& bundle, const Preset& preset) {
  const Index shorter = std::min(bundle.image_height, bundle.image_width);
  if (shorter != preset.shorter_side || bundle.layout.window != preset.window || bundle.layout.stride != preset.stride)
    throw ConfigError("bundle '" + bundle.name + "' was exported with shorter side " + std::to_string(shorter) +
                      ", window " + std::to_string(bundle.layout.window) + ", stride " +
                      std::to_string(bundle.layout.stride) + "; preset " + preset.name + " expects " +
                      std::to_string(preset.shorter_side) + "/" + std::to_string(preset.window) + "/" +
                      std::to_string(preset.stride));
  if (bundle.vocabulary.has_background != preset.has_background)
    log::warn("bundle '" + bundle.name + "' background flag differs from preset " + preset.name);
}

PresetReport run_preset(std::string_view preset_name, const std::filesystem::path& bundle_root, Paradigm paradigm,
                        const PresetRunOptions& options) {
  const Preset& preset = find_preset(preset_name);
  PresetReport report;
  report.preset = preset.name;
  report.paradigm = paradigm;
  for (const auto& dir : find_bundles(bundle_root)) {
    const Bundle bundle = load_bundle(dir);
    check_bundle_matches_preset(bundle, preset);
    auto result = run_paradigm(bundle, paradigm, options.pipeline);
    LabelMap labels = std::move(result.labels);
    if (options.decoder) {
      RefineConfig refine = options.refine ? *options.refine : RefineConfig{};
      if (!refine.background_index) refine.background_index = bundle.vocabulary.background_index();
      labels = refine_segmentation(labels, result.scores, *options.decoder, refine, bundle.image_ref).labels;
    }
    if (options.output_dir) {
      const auto out = *options.output_dir / bundle.name;
      write_segmentation(labels, result.scores, default_palette(), out / "labels.png", out / "scores.trdt");
    }
    BundleReport br;
    br.name = bundle.name;
    br.stats = result.stats;
    if (bundle.ground_truth) {
      auto cm = accumulate(labels, *bundle.ground_truth, bundle.class_count());
      br.miou = miou(cm);
      if (!report.confusion)
        report.confusion = cm;
      else
        report.confusion->merge(cm);
      br.confusion = std::move(cm);
    } else {
      log::info("bundle '" + bundle.name + "' has no ground truth; metrics skipped");
    }
    report.bundles.push_back(std::move(br));
  }
  if (report.confusion) report.miou = miou(*report.confusion);
  return report;
}

}  // namespace trident
