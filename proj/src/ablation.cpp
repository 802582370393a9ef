#include "trident/ablation.hpp"

#include <charconv>
#include <iomanip>
#include <sstream>

#include "trident/errors.hpp"

namespace trident {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ResolutionSetting::label() const {
  return std::to_string(shorter_side) + "-" + std::to_string(window) + "-" + std::to_string(stride);
}

ResolutionSetting parse_resolution(std::string_view text) {
  Index parts[3] = {0, 0, 0};
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const auto dash = text.find('-', start);
    const auto end = (i == 2) ? text.size() : dash;
    if (end == std::string_view::npos || (i == 2 && dash != std::string_view::npos))
      throw ConfigError("resolution '" + std::string(text) + "' must look like 448-336-224");
    const auto piece = text.substr(start, end - start);
    const auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), parts[i]);
    if (ec != std::errc() || ptr != piece.data() + piece.size() || parts[i] < 1)
      throw ConfigError("resolution '" + std::string(text) + "' must look like 448-336-224");
    start = end + 1;
  }
  return {parts[0], parts[1], parts[2]};
}

const std::vector<ResolutionSetting>& standard_resolutions() {
  static const std::vector<ResolutionSetting> table = {{336, 336, 112}, {448, 336, 224}, {576, 336, 224}};
  return table;
}

std::vector<AblationCell> ablation_grid(const std::vector<Paradigm>& paradigms,
                                        const std::vector<CorrelationKind>& kinds,
                                        const std::vector<ResolutionSetting>& resolutions, const fs::path& root) {
  std::vector<AblationCell> cells;
  for (const auto p : paradigms)
    for (const auto k : kinds) {
      if (resolutions.empty()) {
        cells.push_back({p, k, std::nullopt, root});
        continue;
      }
      for (const auto& r : resolutions) cells.push_back({p, k, r, root / r.label()});
    }
  return cells;
}

namespace {

AblationRow run_cell(const AblationCell& cell, const PipelineConfig& base) {
  AblationRow row;
  row.cell = cell;
  if (!fs::is_directory(cell.bundle_root)) {
    row.reason = "no bundle directory " + cell.bundle_root.string();
    return row;
  }
  const auto dirs = find_bundles(cell.bundle_root);
  if (dirs.empty()) {
    row.reason = "no bundles under " + cell.bundle_root.string();
    return row;
  }
  PipelineConfig config = base;
  config.global_kind = cell.kind;
  std::optional<ConfusionMatrix> total;
  for (const auto& dir : dirs) {
    Bundle bundle;
    try {
      bundle = load_bundle(dir);
    } catch (const Error& e) {
      row.reason = e.what();
      return row;
    }
    if (cell.resolution) {
      const auto& r = *cell.resolution;
      if (std::min(bundle.image_height, bundle.image_width) != r.shorter_side || bundle.layout.window != r.window ||
          bundle.layout.stride != r.stride) {
        row.reason = "bundle '" + bundle.name + "' does not match " + r.label();
        return row;
      }
    }
    if (!supports(bundle, cell.paradigm, cell.kind)) {
      row.reason = "bundle '" + bundle.name + "' lacks SAM tensors for " + std::string(to_string(cell.kind));
      return row;
    }
    if (!bundle.ground_truth) {
      row.reason = "bundle '" + bundle.name + "' has no ground truth";
      return row;
    }
    const auto result = run_paradigm(bundle, cell.paradigm, config);
    const auto cm = accumulate(result.labels, *bundle.ground_truth, bundle.class_count());
    if (!total)
      total = cm;
    else
      total->merge(cm);
    ++row.images;
  }
  row.available = true;
  row.miou = miou(*total);
  row.pixel_accuracy = pixel_accuracy(*total);
  return row;
}

std::string format_percent(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * *v;
  return s.str();
}

}  // namespace

std::vector<AblationRow> ablation_run(const std::vector<AblationCell>& cells, const PipelineConfig& base) {
  std::vector<AblationRow> rows;
  rows.reserve(cells.size());
  for (const auto& c : cells) rows.push_back(run_cell(c, base));
  return rows;
}

json ablation_json(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j = {{"paradigm", to_string(r.cell.paradigm)},
              {"correlation", to_string(r.cell.kind)},
              {"resolution", r.cell.resolution ? json(r.cell.resolution->label()) : json(nullptr)},
              {"bundles", r.cell.bundle_root.string()},
              {"available", r.available},
              {"images", r.images},
              {"miou", r.miou ? json(*r.miou) : json(nullptr)},
              {"pixel_accuracy", r.pixel_accuracy ? json(*r.pixel_accuracy) : json(nullptr)}};
    if (!r.available) j["reason"] = r.reason;
    out.push_back(std::move(j));
  }
  return out;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::vector<std::vector<std::string>> cells = {{"paradigm", "correlation", "resolution", "images", "mIoU", "aAcc"}};
  for (const auto& r : rows) {
    cells.push_back({std::string(to_string(r.cell.paradigm)), std::string(to_string(r.cell.kind)),
                     r.cell.resolution ? r.cell.resolution->label() : "-", std::to_string(r.images),
                     r.available ? format_percent(r.miou) : "unavailable",
                     r.available ? format_percent(r.pixel_accuracy) : "-"});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::ostringstream s;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) s << "  ";
      s << std::setw(static_cast<int>(width[i])) << (i < 3 ? std::left : std::right) << line[i];
    }
    s << '\n';
  }
  return s.str();
}

}  // namespace trident
