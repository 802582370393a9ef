#pragma once

// Prompt-based refinement: each class present in a coarse segmentation is
// split into connected regions, every region becomes a point + box + mask
// prompt for a promptable mask decoder, and the decoded masks are multiplied
// back onto the class confidence.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trident/types.hpp"

namespace trident {

inline constexpr float kDefaultMaskAlpha = 0.005f;
inline constexpr Index kDecoderMaskSize = 256;

struct Pixel {
  Index y = 0;
  Index x = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

struct Region {
  std::int32_t class_index = 0;
  std::vector<Pixel> pixels;  ///< row-major sorted

  std::size_t area() const { return pixels.size(); }
};

struct PointPrompt {
  Index x = 0;
  Index y = 0;
  int label = 1;  ///< foreground
};

/// Inclusive pixel coordinates.
struct BoxPrompt {
  Index x0 = 0;
  Index y0 = 0;
  Index x1 = 0;
  Index y1 = 0;

  bool contains(Index x, Index y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct PromptSet {
  PointPrompt point;
  BoxPrompt box;
  RowMatrix<float> mask;  ///< decoder-resolution mask prompt, values in [0, alpha]
};

/// B_k(y, x) = 1 iff labels(y, x) == k.
BinaryMap binarize_class(const LabelMap& labels, std::int32_t k, std::size_t class_count);

/// Two-pass union-find labeling under 4- or 8-connectivity. Regions are
/// ordered by their first pixel in row-major order.
std::vector<Region> connected_components(const BinaryMap& mask, int connectivity = 8, std::int32_t class_index = 0);

/// alpha * B_k * M_k at full image resolution.
RowMatrix<float> mask_prompt_full(const BinaryMap& class_mask, const RowMatrix<float>& confidence, float alpha);

/// Point = highest-confidence pixel of the region (first in row-major order on
/// ties), box = tight bounds of the region, mask = alpha * B_k * M_k over the
/// whole image resampled bilinearly to mask_size x mask_size.
PromptSet synth_prompts(const Region& region, const RowMatrix<float>& confidence, const BinaryMap& class_mask,
                        float alpha = kDefaultMaskAlpha, Index mask_size = kDecoderMaskSize);

struct DecodeRequest {
  std::uint64_t id = 0;
  std::string image_ref;
  const PromptSet* prompts = nullptr;
};

struct DecodeResponse {
  std::uint64_t id = 0;
  std::optional<RowMatrix<float>> mask;  ///< decoder-resolution scores in [0, 1]
  std::string error;
};

/// A promptable mask decoder. Implementations return one response per request,
/// in any order; `id` is the correlation key. Throwing DecoderError signals
/// that the backend as a whole is unusable.
class DecoderBackend {
 public:
  virtual ~DecoderBackend() = default;
  virtual std::vector<DecodeResponse> decode(std::span<const DecodeRequest> requests) = 0;
};

/// In-process stub: echoes gain * mask prompt, clamped to [0, 1].
class MaskEchoDecoder final : public DecoderBackend {
 public:
  explicit MaskEchoDecoder(float gain = 1.0f) : gain_(gain) {}
  std::vector<DecodeResponse> decode(std::span<const DecodeRequest> requests) override;

 private:
  float gain_;
};

struct RefinedPlane {
  RowMatrix<float> plane;
  bool fell_back = false;
  std::size_t requests = 0;
};

/// Decodes every region of one class (ids start at `first_id`), upsamples each
/// decoded mask to the confidence resolution, clamps to [0, 1], takes the
/// pixelwise max over regions and multiplies by the confidence. Any decoder
/// failure falls back to the unrefined confidence.
RefinedPlane refine_class(std::span<const Region> regions, std::span<const PromptSet> prompts,
                          DecoderBackend& decoder, const RowMatrix<float>& confidence, const std::string& image_ref,
                          std::uint64_t first_id = 0);

/// Argmax over per-class planes; classes without a plane score 0 everywhere.
LabelMap fuse_refined(std::span<const std::optional<RowMatrix<float>>> planes, Index height, Index width);

struct RefineConfig {
  float alpha = kDefaultMaskAlpha;
  int connectivity = 8;
  std::size_t min_region_area = 0;  ///< regions smaller than this are not prompted
  bool skip_background = false;
  std::optional<std::size_t> background_index;
  Index mask_size = kDecoderMaskSize;
  bool allow_fallback = true;

  void validate() const;
};

struct RefineOutcome {
  LabelMap labels;
  std::size_t refined_classes = 0;
  std::size_t fallbacks = 0;
  std::size_t requests = 0;
};

/// Full refinement pass over a coarse segmentation. `scores` is the class
/// score grid; full-resolution confidences are produced by bilinear
/// upsampling to the label map's size.
RefineOutcome refine_segmentation(const LabelMap& labels, const GridMap<float>& scores, DecoderBackend& decoder,
                                  const RefineConfig& config, const std::string& image_ref);

}  // namespace trident
