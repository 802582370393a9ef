#pragma once

// Synthetic bundles with controllable ground truth. Each class gets an
// axis-aligned prototype vector; windows that clip an object have their value
// tokens pulled toward the window's mean prototype, mimicking the loss of
// context a window suffers when it only sees part of an object.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trident/interchange.hpp"

namespace trident {

/// Half-open pixel rectangle [y0, y1) x [x0, x1).
struct LabeledRect {
  Index y0 = 0;
  Index x0 = 0;
  Index y1 = 0;
  Index x1 = 0;
  std::int32_t label = 1;
};

struct SceneSpec {
  Index height = 448;
  Index width = 448;
  Index window = 336;
  Index stride = 224;
  Index patch = 16;
  std::vector<std::string> class_names = {"background", "object"};
  bool has_background = true;
  std::vector<LabeledRect> objects;  ///< painted in order over class 0
  Index feature_dim = 8;
  double ambiguity = 0.0;  ///< blend factor toward the window mean, in [0, 1]
  double dino_noise = 0.01;
  std::optional<std::pair<Index, Index>> sam_grid;  ///< defaults to the patch grid
  bool with_sam = true;
  bool with_attention = true;
  bool with_ground_truth = true;
  std::uint64_t seed = 0;
  std::string name = "synthetic";

  void validate() const;
};

/// Pixel-level ground truth for the scene.
LabelMap render_labels(const SceneSpec& spec);

/// Labels sampled at the cell centers of a rows x cols grid laid over the
/// image.
LabelMap grid_labels(const LabelMap& pixels, Index rows, Index cols);

/// Class prototypes (rows), pairwise orthogonal.
RowMatrix<float> class_prototypes(const SceneSpec& spec);

/// Builds the bundle in memory.
Bundle make_bundle(const SceneSpec& spec);

/// Builds the bundle and writes it to `dir`.
Bundle generate_bundle(const SceneSpec& spec, const std::filesystem::path& dir);

/// The paradigm-contrast scene: a 448x448 image with one object straddling
/// the right/bottom edges of the first windows.
SceneSpec seam_scene(double ambiguity = 0.9, std::uint64_t seed = 7);

/// Random scene: random rectangles, random class count, reproducible by seed.
SceneSpec random_scene(std::uint64_t seed);

}  // namespace trident
