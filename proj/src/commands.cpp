#include "trident/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include "trident/decoder_process.hpp"
#include "trident/errors.hpp"
#include "trident/log.hpp"
#include "trident/synth.hpp"

namespace trident {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void take(std::optional<T>& dst, const std::optional<T>& src) {
  if (src) dst = src;
}

void layer(RunOverrides& dst, const RunOverrides& src) {
  take(dst.preset, src.preset);
  take(dst.shorter_side, src.shorter_side);
  take(dst.window, src.window);
  take(dst.stride, src.stride);
  take(dst.paradigm, src.paradigm);
  take(dst.correlation, src.correlation);
  take(dst.epsilon, src.epsilon);
  take(dst.alpha, src.alpha);
  take(dst.refine, src.refine);
  take(dst.allow_fallback, src.allow_fallback);
  take(dst.decoder_cmd, src.decoder_cmd);
  take(dst.deterministic, src.deterministic);
  take(dst.workers, src.workers);
  take(dst.out, src.out);
}

template <typename T>
std::optional<T> field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: field '") + key + "' has the wrong type");
  }
}

std::string fmt(const std::optional<double>& v, int precision = 4) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << *v;
  return s.str();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot create " + path.string());
  f << j.dump(2) << '\n';
}

std::unique_ptr<SubprocessDecoder> start_decoder(const RunConfig& config, std::ostream& out) {
  if (!config.decoder_cmd || config.decoder_cmd->empty()) {
    out << "error: refinement needs a mask decoder; pass --decoder-cmd or set TRIDENT_DECODER_CMD\n";
    return nullptr;
  }
  return std::make_unique<SubprocessDecoder>(*config.decoder_cmd);
}

}  // namespace

RunOverrides overrides_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  static const std::vector<std::string> known = {"preset",  "shorter_side", "window",        "stride",
                                                 "paradigm", "correlation", "epsilon",       "alpha",
                                                 "refine",  "allow_fallback", "decoder_cmd", "deterministic",
                                                 "workers", "out"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("config: unknown field '" + key + "'");
  RunOverrides o;
  o.preset = field<std::string>(j, "preset");
  o.shorter_side = field<Index>(j, "shorter_side");
  o.window = field<Index>(j, "window");
  o.stride = field<Index>(j, "stride");
  o.paradigm = field<std::string>(j, "paradigm");
  o.correlation = field<std::string>(j, "correlation");
  o.epsilon = field<double>(j, "epsilon");
  o.alpha = field<float>(j, "alpha");
  o.refine = field<bool>(j, "refine");
  o.allow_fallback = field<bool>(j, "allow_fallback");
  o.decoder_cmd = field<std::string>(j, "decoder_cmd");
  o.deterministic = field<bool>(j, "deterministic");
  o.workers = field<int>(j, "workers");
  if (auto p = field<std::string>(j, "out")) o.out = fs::path(*p);
  return o;
}

RunOverrides read_config_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  try {
    return overrides_from_json(json::parse(f));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

RunConfig resolve_run_config(const RunOverrides& cli, const std::optional<RunOverrides>& file) {
  RunOverrides merged;
  const auto preset_name = cli.preset ? cli.preset : (file ? file->preset : std::nullopt);
  if (preset_name) {
    const Preset& p = find_preset(*preset_name);
    merged.preset = p.name;
    merged.shorter_side = p.shorter_side;
    merged.window = p.window;
    merged.stride = p.stride;
  }
  if (file) layer(merged, *file);
  layer(merged, cli);

  RunConfig c;
  c.preset = merged.preset;
  c.shorter_side = merged.shorter_side;
  c.window = merged.window;
  c.stride = merged.stride;
  if (c.window && (*c.window < 16 || *c.window % 16 != 0))
    throw ConfigError("window " + std::to_string(*c.window) + " must be a positive multiple of 16");
  if (c.stride && *c.stride < 1) throw ConfigError("stride must be positive");
  if (c.shorter_side && c.window && *c.shorter_side < *c.window)
    throw ConfigError("shorter side " + std::to_string(*c.shorter_side) + " is smaller than the window " +
                      std::to_string(*c.window));
  if (merged.paradigm) c.paradigm = parse_paradigm(*merged.paradigm);
  if (merged.correlation) c.pipeline.global_kind = parse_correlation_kind(*merged.correlation);
  if (merged.epsilon) c.pipeline.epsilon = *merged.epsilon;
  if (merged.alpha) c.refine_config.alpha = *merged.alpha;
  if (merged.refine) c.refine = *merged.refine;
  if (merged.allow_fallback) c.refine_config.allow_fallback = *merged.allow_fallback;
  if (merged.deterministic) c.pipeline.policy.deterministic = *merged.deterministic;
  if (merged.workers) {
    if (*merged.workers < 1) throw ConfigError("workers must be at least 1");
    c.pipeline.policy.workers = static_cast<unsigned>(*merged.workers);
  }
  if (merged.out) c.out = *merged.out;
  c.decoder_cmd = merged.decoder_cmd;
  if (!c.decoder_cmd) {
    if (const char* env = std::getenv("TRIDENT_DECODER_CMD"); env && *env) c.decoder_cmd = std::string(env);
  }
  c.pipeline.validate();
  c.refine_config.validate();
  return c;
}

std::vector<fs::path> expand_bundle_paths(const std::vector<fs::path>& paths) {
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    if (is_bundle_dir(p)) {
      out.push_back(p);
    } else if (fs::is_directory(p)) {
      const auto found = find_bundles(p);
      if (found.empty()) throw ValidationError("no bundles under " + p.string());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      throw ValidationError("not a bundle directory: " + p.string());
    }
  }
  return out;
}

void check_bundle_matches(const Bundle& bundle, const RunConfig& config) {
  const Index shorter = std::min(bundle.image_height, bundle.image_width);
  const std::string who = "bundle '" + bundle.name + "'";
  if (config.shorter_side && shorter != *config.shorter_side)
    throw ConfigError(who + " has shorter side " + std::to_string(shorter) + ", configuration expects " +
                      std::to_string(*config.shorter_side));
  if (config.window && bundle.layout.window != *config.window)
    throw ConfigError(who + " uses window " + std::to_string(bundle.layout.window) + ", configuration expects " +
                      std::to_string(*config.window));
  if (config.stride && bundle.layout.stride != *config.stride)
    throw ConfigError(who + " uses stride " + std::to_string(bundle.layout.stride) + ", configuration expects " +
                      std::to_string(*config.stride));
}

int cmd_validate(const std::vector<fs::path>& paths, std::ostream& out) {
  int code = exit_code::ok;
  std::vector<fs::path> dirs;
  try {
    dirs = expand_bundle_paths(paths);
  } catch (const Error& e) {
    out << "error: " << e.what() << '\n';
    return exit_code::validation;
  }
  for (const auto& dir : dirs) {
    try {
      const Bundle b = load_bundle(dir);
      out << "ok      " << dir.string() << "  (" << b.image_height << "x" << b.image_width << ", "
          << b.windows.size() << " windows, " << b.class_count() << " classes" << (b.sam ? ", sam" : "")
          << (b.sam && b.sam->attention ? "+attention" : "") << (b.ground_truth ? ", ground truth" : "") << ")\n";
    } catch (const Error& e) {
      out << "invalid " << dir.string() << ": " << e.what() << '\n';
      code = exit_code::validation;
    }
  }
  return code;
}

int cmd_segment(const RunConfig& config, const std::vector<fs::path>& paths, std::ostream& out,
                DecoderBackend* decoder) {
  std::vector<fs::path> dirs;
  try {
    dirs = expand_bundle_paths(paths);
  } catch (const Error& e) {
    out << "error: " << e.what() << '\n';
    return exit_code::validation;
  }
  std::unique_ptr<SubprocessDecoder> owned;
  if (config.refine && !decoder) {
    try {
      owned = start_decoder(config, out);
    } catch (const Error& e) {
      out << "error: cannot start decoder: " << e.what() << '\n';
      return exit_code::decoder;
    }
    if (!owned) return exit_code::decoder;
    decoder = owned.get();
  }

  int code = exit_code::ok;
  for (const auto& dir : dirs) {
    Bundle bundle;
    try {
      bundle = load_bundle(dir);
      check_bundle_matches(bundle, config);
      if (!supports(bundle, config.paradigm, config.pipeline.global_kind))
        throw ValidationError("bundle '" + bundle.name + "' lacks the SAM tensors " +
                              std::string(to_string(config.paradigm)) + " needs for " +
                              std::string(to_string(config.pipeline.global_kind)) + " correlation");
    } catch (const Error& e) {
      out << "invalid " << dir.string() << ": " << e.what() << '\n';
      code = exit_code::validation;
      continue;
    }

    auto result = run_paradigm(bundle, config.paradigm, config.pipeline);
    LabelMap labels = std::move(result.labels);
    json refine_log = nullptr;
    if (config.refine) {
      RefineConfig rc = config.refine_config;
      if (!rc.background_index) rc.background_index = bundle.vocabulary.background_index();
      try {
        const auto outcome = refine_segmentation(labels, result.scores, *decoder, rc, bundle.image_ref);
        labels = outcome.labels;
        refine_log = {{"alpha", std::round(1e9 * static_cast<double>(rc.alpha)) / 1e9},
                      {"requests", outcome.requests},
                      {"refined_classes", outcome.refined_classes},
                      {"fallbacks", outcome.fallbacks}};
      } catch (const DecoderError& e) {
        out << "error: " << bundle.name << ": " << e.what() << '\n';
        return exit_code::decoder;
      }
    }

    const fs::path dest = config.out / bundle.name;
    write_segmentation(labels, result.scores, default_palette(), dest / "labels.png", dest / "scores.trdt");

    json log_entry = {{"bundle", bundle.name},
                      {"image_ref", bundle.image_ref},
                      {"image_size", {bundle.image_height, bundle.image_width}},
                      {"paradigm", to_string(result.stats.paradigm)},
                      {"correlation", to_string(result.stats.kind)},
                      {"epsilon", config.pipeline.epsilon},
                      {"window_count", result.stats.window_count},
                      {"score_grid", {result.scores.rows, result.scores.cols}},
                      {"refine", refine_log}};
    if (bundle.ground_truth) {
      const auto cm = accumulate(labels, *bundle.ground_truth, bundle.class_count());
      log_entry["miou"] = optional_json(miou(cm));
    }
    log_entry["timings_ms"] = config.deterministic() ? json(nullptr) : json(result.stats.timings_ms);
    write_json(dest / "log.json", log_entry);
    out << "wrote   " << dest.string() << '\n';
  }
  return code;
}

std::optional<double> CompareRow::delta() const {
  if (!baseline_miou || !trident_miou) return std::nullopt;
  return *trident_miou - *baseline_miou;
}

std::vector<CompareRow> compare_bundles(const RunConfig& config, const std::vector<fs::path>& paths) {
  std::vector<CompareRow> rows;
  for (const auto& dir : expand_bundle_paths(paths)) {
    const Bundle bundle = load_bundle(dir);
    check_bundle_matches(bundle, config);
    const LabelMap* gt = bundle.ground_truth ? &*bundle.ground_truth : nullptr;
    CompareRow row;
    row.bundle = bundle.name;
    const auto base = segment_then_splice(bundle, config.pipeline);
    row.baseline_seam = seam_disagreement(base.labels, bundle.layout, gt);
    if (gt) row.baseline_miou = miou(accumulate(base.labels, *gt, bundle.class_count()));
    row.trident_available = supports(bundle, Paradigm::splice_then_segment, config.pipeline.global_kind);
    if (row.trident_available) {
      const auto tri = splice_then_segment(bundle, config.pipeline);
      row.trident_seam = seam_disagreement(tri.labels, bundle.layout, gt);
      if (gt) row.trident_miou = miou(accumulate(tri.labels, *gt, bundle.class_count()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json compare_json(const std::vector<CompareRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"bundle", r.bundle},
                   {"baseline_miou", optional_json(r.baseline_miou)},
                   {"trident_miou", optional_json(r.trident_miou)},
                   {"miou_delta", optional_json(r.delta())},
                   {"baseline_seam_rate", r.baseline_seam},
                   {"trident_seam_rate", optional_json(r.trident_seam)},
                   {"trident_available", r.trident_available}});
  return out;
}

std::string compare_table(const std::vector<CompareRow>& rows) {
  std::ostringstream s;
  std::size_t name_width = 6;
  for (const auto& r : rows) name_width = std::max(name_width, r.bundle.size());
  const auto w = static_cast<int>(name_width);
  s << std::left << std::setw(w) << "bundle" << std::right << std::setw(10) << "baseline" << std::setw(12)
    << "trident" << std::setw(10) << "delta" << std::setw(12) << "seam(base)" << std::setw(12) << "seam(tri)"
    << '\n';
  for (const auto& r : rows) {
    s << std::left << std::setw(w) << r.bundle << std::right << std::setw(10) << fmt(r.baseline_miou)
      << std::setw(12) << (r.trident_available ? fmt(r.trident_miou) : "unavailable") << std::setw(10)
      << fmt(r.delta()) << std::setw(12) << fmt(r.baseline_seam) << std::setw(12)
      << (r.trident_available ? fmt(r.trident_seam) : "-") << '\n';
  }
  return s.str();
}

int cmd_compare(const RunConfig& config, const std::vector<fs::path>& paths, std::ostream& out) {
  std::vector<CompareRow> rows;
  try {
    rows = compare_bundles(config, paths);
  } catch (const Error& e) {
    out << "error: " << e.what() << '\n';
    return exit_code::validation;
  }
  out << compare_table(rows);
  write_json(config.out / "compare.json", compare_json(rows));
  return exit_code::ok;
}

namespace {

struct CheckList {
  std::ostream& out;
  int failures = 0;

  template <typename Fn>
  void run(const std::string& name, Fn&& fn) {
    std::string detail;
    bool ok = false;
    try {
      ok = fn(detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    out << (ok ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) out << "  (" << detail << ")";
    out << '\n';
    if (!ok) ++failures;
  }
};

void inject_fault(const fs::path& bundle_dir, SelfcheckFault fault) {
  const fs::path file = bundle_dir / "text_embeddings.trdt";
  auto bytes = read_file_bytes(file);
  if (fault == SelfcheckFault::magic) {
    bytes[0] = 'X';
  } else {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    const auto bits = std::bit_cast<std::uint32_t>(nan);
    const std::size_t at = bytes.size() - 4;
    for (int i = 0; i < 4; ++i) bytes[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(bits >> (8 * i));
  }
  write_file_bytes(file, bytes);
}

bool rows_stochastic(const RowMatrix<float>& a, std::string& detail) {
  for (Index i = 0; i < a.rows(); ++i) {
    const double sum = a.row(i).cast<double>().sum();
    if (std::abs(sum - 1.0) > 1e-5 || a(i, i) <= 0.0f || (a.row(i).array() < 0.0f).any()) {
      detail = "row " + std::to_string(i) + " sums to " + std::to_string(sum);
      return false;
    }
  }
  return true;
}

}  // namespace

int cmd_selfcheck(std::ostream& out, SelfcheckFault fault, std::uint64_t seed) {
  const fs::path root = fs::temp_directory_path() / ("trident-selfcheck-" + std::to_string(std::random_device{}()));
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{root};

  CheckList checks{out};
  std::vector<fs::path> dirs;
  checks.run("generate synthetic bundles", [&](std::string& detail) {
    generate_bundle(seam_scene(), root / "seam");
    generate_bundle(seam_scene(0.0), root / "separable");
    for (std::uint64_t s = 0; s < 4; ++s) generate_bundle(random_scene(seed + s), root / ("random_" + std::to_string(s)));
    dirs = find_bundles(root);
    detail = std::to_string(dirs.size()) + " bundles";
    return dirs.size() == 6;
  });
  if (fault != SelfcheckFault::none && !dirs.empty()) inject_fault(root / "seam", fault);

  std::vector<Bundle> bundles;
  checks.run("bundles load and validate", [&](std::string& detail) {
    for (const auto& d : dirs) {
      try {
        bundles.push_back(load_bundle(d));
      } catch (const Error& e) {
        detail = d.filename().string() + ": " + e.what();
        return false;
      }
    }
    return !bundles.empty();
  });
  if (bundles.size() != dirs.size() || bundles.empty()) {
    out << checks.failures << " check(s) failed\n";
    return exit_code::failure;
  }
  const auto find = [&](const std::string& name) -> const Bundle& {
    for (const auto& b : bundles)
      if (b.name == name) return b;
    throw Error("missing bundle " + name);
  };

  checks.run("tensor files round-trip", [&](std::string& detail) {
    for (const auto& d : dirs) {
      for (const auto& entry : fs::recursive_directory_iterator(d)) {
        if (entry.path().extension() != ".trdt") continue;
        const auto bytes = read_file_bytes(entry.path());
        if (encode_tensor(decode_tensor(bytes)) != bytes) {
          detail = entry.path().string();
          return false;
        }
      }
    }
    return true;
  });

  checks.run("hybrid affinity hand case", [&](std::string& detail) {
    RowMatrix<double> w(3, 3), c(3, 3);
    w << 0.5, 0.3, 0.2, 0.3, 0.4, 0.3, 0.2, 0.3, 0.5;
    c << 1.0, 0.2, -0.1, 0.2, 1.0, 0.2, -0.1, 0.2, 1.0;
    const auto a = hybrid_affinity(w, c, 0.0, 1, 3).values;
    const double err = (a.row(0) - Eigen::RowVector3d(0.625, 0.375, 0.0)).cwiseAbs().maxCoeff();
    detail = "max error " + std::to_string(err);
    return err <= 1e-9;
  });

  checks.run("global correlations are row-stochastic", [&](std::string& detail) {
    for (const auto& b : bundles) {
      if (!b.sam) continue;
      for (const double eps : {-1.0, 0.0, 0.5, 1.0}) {
        if (!rows_stochastic(sam_cosine_affinity(b.sam->features, eps, b.sam->grid_rows, b.sam->grid_cols).values,
                             detail))
          return false;
        const auto c = cosine_matrix(b.sam->features, b.sam->features);
        if (!rows_stochastic(hybrid_affinity(*b.sam->attention, c, eps, b.sam->grid_rows, b.sam->grid_cols).values,
                             detail))
          return false;
      }
    }
    return true;
  });

  checks.run("splice matches brute-force average", [&](std::string& detail) {
    for (const auto& b : bundles) {
      PipelineConfig config;
      const auto features = compute_window_features(b, config);
      const auto spliced = splice_features(features, b.layout, config.policy);
      const Index gc = b.layout.grid_cols();
      const Index side = b.layout.tokens_per_side();
      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(spliced.cells.rows(), spliced.cells.cols());
      Eigen::VectorXd count = Eigen::VectorXd::Zero(spliced.cells.rows());
      for (std::size_t w = 0; w < features.size(); ++w) {
        const Index py = b.layout.origins[w].y / b.layout.patch;
        const Index px = b.layout.origins[w].x / b.layout.patch;
        for (Index y = 0; y < side; ++y)
          for (Index x = 0; x < side; ++x) {
            const Index g = (py + y) * gc + px + x;
            sum.row(g) += features[w].cells.row(y * side + x).cast<double>();
            count(g) += 1.0;
          }
      }
      for (Index g = 0; g < sum.rows(); ++g) sum.row(g) /= count(g);
      const double err = (sum - spliced.cells.cast<double>()).cwiseAbs().maxCoeff();
      if (err > 1e-6) {
        detail = b.name + ": max error " + std::to_string(err);
        return false;
      }
    }
    return true;
  });

  checks.run("separable scene is segmented perfectly by both paradigms", [&](std::string& detail) {
    const Bundle& b = find("separable");
    PipelineConfig config;
    config.epsilon = 0.5;
    const auto base = segment_then_splice(b, config);
    const auto tri = splice_then_segment(b, config);
    const auto grid_miou = [&](const SegmentationResult& r) {
      const auto truth = grid_labels(*b.ground_truth, r.scores.rows, r.scores.cols);
      const auto pred = argmax_rows(r.scores.cells);
      LabelMap labels(r.scores.rows, r.scores.cols);
      for (Index i = 0; i < labels.size(); ++i) labels.data()[i] = static_cast<std::int32_t>(pred[static_cast<std::size_t>(i)]);
      return miou(accumulate(labels, truth, b.class_count())).value();
    };
    const double mb = grid_miou(base);
    const double mt = grid_miou(tri);
    detail = "grid mIoU baseline " + fmt(mb) + ", trident " + fmt(mt);
    return mb == 1.0 && mt == 1.0 && base.labels == tri.labels;
  });

  checks.run("splice-then-segment beats segment-then-splice on the seam scene", [&](std::string& detail) {
    const Bundle& b = find("seam");
    PipelineConfig config;
    config.epsilon = 0.5;
    const auto base = segment_then_splice(b, config);
    const auto tri = splice_then_segment(b, config);
    const double mb = miou(accumulate(base.labels, *b.ground_truth, b.class_count())).value();
    const double mt = miou(accumulate(tri.labels, *b.ground_truth, b.class_count())).value();
    const double sb = seam_disagreement(base.labels, b.layout, &*b.ground_truth);
    const double st = seam_disagreement(tri.labels, b.layout, &*b.ground_truth);
    detail = "mIoU " + fmt(mb) + " -> " + fmt(mt) + ", seam rate " + fmt(sb) + " -> " + fmt(st);
    return mt - mb > 0.10 && st < sb;
  });

  checks.run("deterministic runs are byte-identical", [&](std::string& detail) {
    for (const auto& b : bundles) {
      PipelineConfig config;
      config.policy.deterministic = true;
      PipelineConfig threaded;
      threaded.policy.workers = 4;
      const auto r1 = splice_then_segment(b, config);
      const auto r2 = splice_then_segment(b, config);
      const auto r3 = splice_then_segment(b, threaded);
      const auto palette = default_palette();
      const auto png1 = encode_label_png(r1.labels, b.class_count(), palette);
      if (png1 != encode_label_png(r2.labels, b.class_count(), palette) ||
          png1 != encode_label_png(r3.labels, b.class_count(), palette) ||
          encode_tensor(from_grid(r1.scores)) != encode_tensor(from_grid(r2.scores)) ||
          encode_tensor(from_grid(r1.scores)) != encode_tensor(from_grid(r3.scores))) {
        detail = b.name;
        return false;
      }
    }
    return true;
  });

  checks.run("refinement with the echo decoder keeps dominant labels", [&](std::string& detail) {
    const Bundle& b = find("separable");
    const auto r = splice_then_segment(b, PipelineConfig{});
    MaskEchoDecoder echo(1.0f);
    RefineConfig rc;
    rc.alpha = 1.0f;
    rc.allow_fallback = false;
    const auto refined = refine_segmentation(r.labels, r.scores, echo, rc, b.image_ref);
    const auto cm = accumulate(refined.labels, r.labels, b.class_count());
    const double agree = static_cast<double>(cm.counts().trace()) / static_cast<double>(cm.total());
    detail = "agreement " + fmt(agree) + ", " + std::to_string(refined.requests) + " requests";
    return agree > 0.99 && refined.fallbacks == 0;
  });

  out << (checks.failures == 0 ? "all checks passed" : std::to_string(checks.failures) + " check(s) failed") << '\n';
  return checks.failures == 0 ? exit_code::ok : exit_code::failure;
}

int cmd_synth(const std::string& scene, const fs::path& dir, std::uint64_t seed, double ambiguity, std::ostream& out) {
  SceneSpec spec;
  if (scene == "seam") {
    spec = seam_scene(ambiguity, seed);
  } else if (scene == "random") {
    spec = random_scene(seed);
  } else {
    out << "error: unknown scene '" << scene << "' (expected seam or random)\n";
    return exit_code::validation;
  }
  const Bundle b = generate_bundle(spec, dir);
  out << "wrote " << dir.string() << " (" << b.image_height << "x" << b.image_width << ", " << b.windows.size()
      << " windows)\n";
  return exit_code::ok;
}

int cmd_ablate(const RunConfig& config, const std::vector<AblationCell>& cells, std::ostream& out) {
  const auto rows = ablation_run(cells, config.pipeline);
  out << ablation_table(rows);
  write_json(config.out / "ablation.json", ablation_json(rows));
  return exit_code::ok;
}

int cmd_preset(const RunConfig& config, const fs::path& root, std::ostream& out, DecoderBackend* decoder) {
  if (!config.preset) {
    out << "error: no preset given (valid: ";
    for (std::size_t i = 0; i < presets().size(); ++i) out << (i ? ", " : "") << presets()[i].name;
    out << ")\n";
    return exit_code::validation;
  }
  std::unique_ptr<SubprocessDecoder> owned;
  if (config.refine && !decoder) {
    try {
      owned = start_decoder(config, out);
    } catch (const Error& e) {
      out << "error: cannot start decoder: " << e.what() << '\n';
      return exit_code::decoder;
    }
    if (!owned) return exit_code::decoder;
    decoder = owned.get();
  }
  PresetRunOptions options;
  options.pipeline = config.pipeline;
  options.output_dir = config.out;
  options.decoder = config.refine ? decoder : nullptr;
  options.refine = &config.refine_config;
  PresetReport report;
  try {
    report = run_preset(*config.preset, root, config.paradigm, options);
  } catch (const DecoderError& e) {
    out << "error: " << e.what() << '\n';
    return exit_code::decoder;
  } catch (const Error& e) {
    out << "error: " << e.what() << '\n';
    return exit_code::validation;
  }
  json j = {{"preset", report.preset}, {"paradigm", to_string(report.paradigm)}, {"miou", optional_json(report.miou)}};
  json per = json::array();
  for (const auto& b : report.bundles) {
    out << std::left << std::setw(24) << b.name << ' ' << fmt(b.miou) << '\n';
    per.push_back({{"bundle", b.name}, {"miou", optional_json(b.miou)}});
  }
  j["bundles"] = per;
  out << "mIoU " << fmt(report.miou) << " over " << report.bundles.size() << " bundle(s)\n";
  write_json(config.out / "preset.json", j);
  return exit_code::ok;
}

}  // namespace trident
