#include "trident/refine.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "trident/errors.hpp"
#include "trident/log.hpp"
#include "trident/numerics.hpp"

namespace trident {
namespace {

class DisjointSet {
 public:
  std::int32_t make() {
    parent_.push_back(static_cast<std::int32_t>(parent_.size()));
    return parent_.back();
  }
  std::int32_t find(std::int32_t a) {
    while (parent_[static_cast<std::size_t>(a)] != a) {
      auto& p = parent_[static_cast<std::size_t>(a)];
      p = parent_[static_cast<std::size_t>(p)];
      a = p;
    }
    return a;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b)
      parent_[static_cast<std::size_t>(b)] = a;
    else
      parent_[static_cast<std::size_t>(a)] = b;
  }

 private:
  std::vector<std::int32_t> parent_;
};

GridMap<float> as_single_channel(const RowMatrix<float>& plane) {
  return GridMap<float>(plane.rows(), plane.cols(),
                        RowMatrix<float>(Eigen::Map<const RowMatrix<float>>(plane.data(), plane.size(), 1)));
}

RowMatrix<float> resample_plane(const RowMatrix<float>& plane, Index rows, Index cols) {
  return upsample_channel(as_single_channel(plane), 0, rows, cols);
}

}  // namespace

BinaryMap binarize_class(const LabelMap& labels, std::int32_t k, std::size_t class_count) {
  if (k < 0 || static_cast<std::size_t>(k) >= class_count)
    throw ConfigError("binarize_class: class " + std::to_string(k) + " outside [0, " + std::to_string(class_count) +
                      ")");
  return (labels.array() == k).cast<std::uint8_t>().matrix();
}

std::vector<Region> connected_components(const BinaryMap& mask, int connectivity, std::int32_t class_index) {
  if (connectivity != 4 && connectivity != 8) throw ConfigError("connected_components: connectivity must be 4 or 8");
  const Index rows = mask.rows();
  const Index cols = mask.cols();
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> provisional =
      Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Constant(rows, cols, -1);
  DisjointSet sets;

  // First pass: provisional labels from already-visited neighbours.
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      if (!mask(y, x)) continue;
      std::int32_t label = -1;
      auto consider = [&](Index ny, Index nx) {
        if (ny < 0 || nx < 0 || nx >= cols) return;
        const auto other = provisional(ny, nx);
        if (other < 0) return;
        if (label < 0)
          label = other;
        else
          sets.unite(label, other);
      };
      consider(y, x - 1);
      consider(y - 1, x);
      if (connectivity == 8) {
        consider(y - 1, x - 1);
        consider(y - 1, x + 1);
      }
      provisional(y, x) = label < 0 ? sets.make() : label;
    }
  }

  // Second pass: resolve equivalences; regions numbered by first appearance.
  std::map<std::int32_t, std::size_t> region_of_root;
  std::vector<Region> regions;
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      const auto label = provisional(y, x);
      if (label < 0) continue;
      const auto root = sets.find(label);
      auto [it, inserted] = region_of_root.try_emplace(root, regions.size());
      if (inserted) regions.push_back(Region{class_index, {}});
      regions[it->second].pixels.push_back({y, x});
    }
  }
  return regions;
}

RowMatrix<float> mask_prompt_full(const BinaryMap& class_mask, const RowMatrix<float>& confidence, float alpha) {
  if (class_mask.rows() != confidence.rows() || class_mask.cols() != confidence.cols())
    throw ShapeError("mask prompt: class mask and confidence differ in size");
  if (!(alpha > 0.0f)) throw ConfigError("mask prompt: alpha must be positive");
  return (alpha * (class_mask.cast<float>().array() * confidence.array())).matrix();
}

PromptSet synth_prompts(const Region& region, const RowMatrix<float>& confidence, const BinaryMap& class_mask,
                        float alpha, Index mask_size) {
  if (region.pixels.empty()) throw ValidationError("synth_prompts: empty region");
  if (mask_size < 1) throw ConfigError("synth_prompts: mask size must be positive");
  PromptSet prompts;
  const Pixel* best = &region.pixels.front();
  BoxPrompt box{best->x, best->y, best->x, best->y};
  for (const auto& p : region.pixels) {
    if (p.y < 0 || p.x < 0 || p.y >= confidence.rows() || p.x >= confidence.cols())
      throw ShapeError("synth_prompts: region pixel outside the confidence plane");
    if (confidence(p.y, p.x) > confidence(best->y, best->x)) best = &p;
    box.x0 = std::min(box.x0, p.x);
    box.y0 = std::min(box.y0, p.y);
    box.x1 = std::max(box.x1, p.x);
    box.y1 = std::max(box.y1, p.y);
  }
  prompts.point = {best->x, best->y, 1};
  prompts.box = box;
  prompts.mask = resample_plane(mask_prompt_full(class_mask, confidence, alpha), mask_size, mask_size);
  return prompts;
}

std::vector<DecodeResponse> MaskEchoDecoder::decode(std::span<const DecodeRequest> requests) {
  std::vector<DecodeResponse> out;
  out.reserve(requests.size());
  for (const auto& r : requests) {
    DecodeResponse resp;
    resp.id = r.id;
    if (!r.prompts) {
      resp.error = "request without prompts";
    } else {
      resp.mask = (gain_ * r.prompts->mask.array()).cwiseMax(0.0f).cwiseMin(1.0f).matrix();
    }
    out.push_back(std::move(resp));
  }
  return out;
}

RefinedPlane refine_class(std::span<const Region> regions, std::span<const PromptSet> prompts,
                          DecoderBackend& decoder, const RowMatrix<float>& confidence, const std::string& image_ref,
                          std::uint64_t first_id) {
  if (regions.size() != prompts.size()) throw ShapeError("refine_class: one prompt set per region required");
  RefinedPlane result;
  if (regions.empty()) {
    result.plane = confidence;
    return result;
  }
  std::vector<DecodeRequest> requests;
  requests.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) requests.push_back({first_id + i, image_ref, &prompts[i]});
  result.requests = requests.size();

  const auto fall_back = [&](const std::string& why) {
    log::warn("refinement of class " + std::to_string(regions.front().class_index) +
              " falls back to unrefined scores: " + why);
    result.plane = confidence;
    result.fell_back = true;
    return result;
  };

  std::vector<DecodeResponse> responses;
  try {
    responses = decoder.decode(requests);
  } catch (const DecoderError& e) {
    return fall_back(e.what());
  }
  std::map<std::uint64_t, const DecodeResponse*> by_id;
  for (const auto& r : responses) by_id[r.id] = &r;

  RowMatrix<float> decoded = RowMatrix<float>::Zero(confidence.rows(), confidence.cols());
  for (const auto& req : requests) {
    const auto it = by_id.find(req.id);
    if (it == by_id.end()) return fall_back("no response for request " + std::to_string(req.id));
    const DecodeResponse& resp = *it->second;
    if (!resp.mask) return fall_back("request " + std::to_string(req.id) + ": " + resp.error);
    if (resp.mask->size() == 0 || !resp.mask->allFinite())
      return fall_back("request " + std::to_string(req.id) + ": invalid mask");
    const RowMatrix<float> up =
        resample_plane(*resp.mask, confidence.rows(), confidence.cols()).cwiseMax(0.0f).cwiseMin(1.0f);
    decoded = decoded.cwiseMax(up);
  }
  result.plane = decoded.cwiseProduct(confidence);
  return result;
}

LabelMap fuse_refined(std::span<const std::optional<RowMatrix<float>>> planes, Index height, Index width) {
  if (planes.empty()) throw ShapeError("fuse_refined: no classes");
  for (const auto& p : planes)
    if (p && (p->rows() != height || p->cols() != width)) throw ShapeError("fuse_refined: plane size mismatch");
  LabelMap labels = LabelMap::Zero(height, width);
  RowMatrix<float> best = RowMatrix<float>::Zero(height, width);
  bool first = true;
  for (std::size_t k = 0; k < planes.size(); ++k) {
    for (Index i = 0; i < labels.size(); ++i) {
      const float v = planes[k] ? planes[k]->data()[i] : 0.0f;
      if (first || v > best.data()[i]) {
        best.data()[i] = v;
        labels.data()[i] = static_cast<std::int32_t>(k);
      }
    }
    first = false;
  }
  return labels;
}

void RefineConfig::validate() const {
  if (!(alpha > 0.0f)) throw ConfigError("alpha must be positive");
  if (connectivity != 4 && connectivity != 8) throw ConfigError("connectivity must be 4 or 8");
  if (mask_size < 1) throw ConfigError("decoder mask size must be positive");
}

RefineOutcome refine_segmentation(const LabelMap& labels, const GridMap<float>& scores, DecoderBackend& decoder,
                                  const RefineConfig& config, const std::string& image_ref) {
  config.validate();
  const auto class_count = static_cast<std::size_t>(scores.channels());
  std::vector<bool> present(class_count, false);
  for (Index i = 0; i < labels.size(); ++i) {
    const auto v = labels.data()[i];
    if (v < 0 || static_cast<std::size_t>(v) >= class_count)
      throw ValidationError("refine: label " + std::to_string(v) + " out of range");
    present[static_cast<std::size_t>(v)] = true;
  }

  RefineOutcome outcome;
  std::vector<std::optional<RowMatrix<float>>> planes(class_count);
  std::uint64_t next_id = 0;
  for (std::size_t k = 0; k < class_count; ++k) {
    if (!present[k]) continue;
    RowMatrix<float> confidence = upsample_channel(scores, static_cast<Index>(k), labels.rows(), labels.cols());
    if (config.skip_background && config.background_index && *config.background_index == k) {
      planes[k] = std::move(confidence);
      continue;
    }
    const auto ck = static_cast<std::int32_t>(k);
    const BinaryMap class_mask = binarize_class(labels, ck, class_count);
    auto regions = connected_components(class_mask, config.connectivity, ck);
    if (config.min_region_area > 0)
      std::erase_if(regions, [&](const Region& r) { return r.area() < config.min_region_area; });
    std::vector<PromptSet> prompts;
    prompts.reserve(regions.size());
    for (const auto& r : regions)
      prompts.push_back(synth_prompts(r, confidence, class_mask, config.alpha, config.mask_size));
    auto refined = refine_class(regions, prompts, decoder, confidence, image_ref, next_id);
    next_id += refined.requests;
    outcome.requests += refined.requests;
    if (refined.fell_back) {
      ++outcome.fallbacks;
      if (!config.allow_fallback)
        throw DecoderError("decoder failed for class " + std::to_string(k) + " and fallback is disabled");
    } else if (!regions.empty()) {
      ++outcome.refined_classes;
    }
    planes[k] = std::move(refined.plane);
  }
  outcome.labels = fuse_refined(planes, labels.rows(), labels.cols());
  return outcome;
}

}  // namespace trident
