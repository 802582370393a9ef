#pragma once

// On-disk interchange: TRDT tensor files, bundle manifests and segmentation
// outputs. See docs/bundle_format.md for the byte layout and manifest schema.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trident/tensor.hpp"
#include "trident/tiling.hpp"
#include "trident/types.hpp"

namespace trident {

inline constexpr std::array<char, 4> kTensorMagic = {'T', 'R', 'D', 'T'};
inline constexpr std::uint16_t kTensorVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

/// Serializes `t` into the TRDT byte layout.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes, std::string_view what = "tensor");

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path, std::string_view what = "tensor");

struct ClassVocabulary {
  std::vector<std::string> names;
  bool has_background = false;  ///< when set, class 0 is background

  std::size_t size() const { return names.size(); }
  std::optional<std::size_t> background_index() const {
    return has_background ? std::optional<std::size_t>(0) : std::nullopt;
  }
  void validate() const;
};

struct BundleWindow {
  std::size_t index = 0;
  RowMatrix<float> values;  ///< n_w x d_v
  RowMatrix<float> dino;    ///< n_w x d_dino
};

struct SamTensors {
  Index grid_rows = 0;
  Index grid_cols = 0;
  RowMatrix<float> features;                 ///< n_s x d_sam
  std::optional<RowMatrix<float>> attention;  ///< n_s x n_s after head reduction
  std::optional<int> attention_block;
};

/// Every tensor an engine run needs, validated as a whole on load.
struct Bundle {
  std::string name;
  std::string image_ref;
  Index image_height = 0;
  Index image_width = 0;
  std::optional<Index> shorter_side;
  WindowLayout layout;
  std::vector<BundleWindow> windows;  ///< ordered by window index
  RowMatrix<float> projection;        ///< d_v x d_text
  std::optional<SamTensors> sam;
  RowMatrix<float> text_embeddings;  ///< c x d_text
  ClassVocabulary vocabulary;
  std::optional<LabelMap> ground_truth;  ///< image_height x image_width, 255 = ignore
  std::optional<std::uint64_t> seed;

  std::size_t class_count() const { return vocabulary.size(); }
};

/// Cross-checks every shape in `bundle`; throws naming the offending field.
void validate_bundle(const Bundle& bundle);

/// Loads `<dir>/manifest.json` and every referenced tensor.
Bundle load_bundle(const std::filesystem::path& dir);

/// Writes `bundle` to `dir` using the standard file names.
void save_bundle(const Bundle& bundle, const std::filesystem::path& dir);

/// True when `dir` holds a manifest.json.
bool is_bundle_dir(const std::filesystem::path& dir);

/// `root` itself when it is a bundle, otherwise its bundle subdirectories in
/// sorted order.
std::vector<std::filesystem::path> find_bundles(const std::filesystem::path& root);

using Palette = std::vector<std::array<std::uint8_t, 3>>;

/// The standard bit-interleaved segmentation colormap (up to 256 entries).
Palette default_palette(std::size_t entries = 256);

/// Encodes labels as an 8-bit palette PNG with exactly `class_count` palette
/// entries taken from `palette`.
std::vector<std::uint8_t> encode_label_png(const LabelMap& labels, std::size_t class_count, const Palette& palette);

/// Writes the indexed PNG and the raw score TensorFile.
void write_segmentation(const LabelMap& labels, const ClassScoreMap& scores, const Palette& palette,
                        const std::filesystem::path& png_path, const std::filesystem::path& scores_path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// 64-bit FNV-1a, used for output fingerprints.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace trident
