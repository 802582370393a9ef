#include "trident/synth.hpp"

#include <random>

#include "trident/errors.hpp"
#include "trident/numerics.hpp"

namespace trident {
namespace {

bool intersects(const LabeledRect& r, Index y0, Index x0, Index y1, Index x1) {
  return r.y0 < y1 && y0 < r.y1 && r.x0 < x1 && x0 < r.x1;
}

bool contains(Index y0, Index x0, Index y1, Index x1, const LabeledRect& r) {
  return y0 <= r.y0 && r.y1 <= y1 && x0 <= r.x0 && r.x1 <= x1;
}

Eigen::VectorXi cell_labels(const LabelMap& pixels, Index rows, Index cols) {
  Eigen::VectorXi out(rows * cols);
  for (Index y = 0; y < rows; ++y) {
    const Index py = std::min(pixels.rows() - 1, (2 * y + 1) * pixels.rows() / (2 * rows));
    for (Index x = 0; x < cols; ++x) {
      const Index px = std::min(pixels.cols() - 1, (2 * x + 1) * pixels.cols() / (2 * cols));
      out(y * cols + x) = pixels(py, px);
    }
  }
  return out;
}

RowMatrix<float> random_orthogonal(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(d, d);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  return q.cast<float>();
}

}  // namespace

LabelMap grid_labels(const LabelMap& pixels, Index rows, Index cols) {
  const Eigen::VectorXi flat = cell_labels(pixels, rows, cols);
  LabelMap out(rows, cols);
  for (Index i = 0; i < flat.size(); ++i) out.data()[i] = flat(i);
  return out;
}

void SceneSpec::validate() const {
  if (class_names.empty()) throw ConfigError("scene: no classes");
  if (feature_dim < static_cast<Index>(class_names.size()))
    throw ShapeError("scene: prototype dimension " + std::to_string(feature_dim) + " cannot hold " +
                     std::to_string(class_names.size()) + " orthogonal prototypes");
  if (!(ambiguity >= 0.0 && ambiguity <= 1.0)) throw ConfigError("scene: ambiguity must lie in [0, 1]");
  if (dino_noise < 0.0) throw ConfigError("scene: noise must be nonnegative");
  for (const auto& r : objects) {
    if (r.label < 0 || r.label >= static_cast<std::int32_t>(class_names.size()))
      throw ConfigError("scene: object label " + std::to_string(r.label) + " out of range");
    if (r.y0 < 0 || r.x0 < 0 || r.y1 > height || r.x1 > width || r.y0 >= r.y1 || r.x0 >= r.x1)
      throw ConfigError("scene: object rectangle outside the image or empty");
  }
}

LabelMap render_labels(const SceneSpec& spec) {
  LabelMap labels = LabelMap::Zero(spec.height, spec.width);
  for (const auto& r : spec.objects) labels.block(r.y0, r.x0, r.y1 - r.y0, r.x1 - r.x0).setConstant(r.label);
  return labels;
}

RowMatrix<float> class_prototypes(const SceneSpec& spec) {
  const auto c = static_cast<Index>(spec.class_names.size());
  return RowMatrix<float>::Identity(c, spec.feature_dim);
}

Bundle make_bundle(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.dino_noise));

  Bundle b;
  b.name = spec.name;
  b.image_ref = spec.name;
  b.image_height = spec.height;
  b.image_width = spec.width;
  b.shorter_side = std::min(spec.height, spec.width);
  b.layout = plan_windows(spec.height, spec.width, spec.window, spec.stride, spec.patch);
  b.vocabulary = {spec.class_names, spec.has_background};
  b.seed = spec.seed;

  const LabelMap pixels = render_labels(spec);
  const RowMatrix<float> protos = class_prototypes(spec);
  const Index grid_rows = b.layout.grid_rows();
  const Index grid_cols = b.layout.grid_cols();
  const Eigen::VectorXi patch_labels = cell_labels(pixels, grid_rows, grid_cols);
  const Index side = b.layout.tokens_per_side();

  for (std::size_t w = 0; w < b.layout.window_count(); ++w) {
    const auto& o = b.layout.origins[w];
    const Index py = o.y / spec.patch;
    const Index px = o.x / spec.patch;
    BundleWindow entry;
    entry.index = w;
    entry.values.resize(side * side, spec.feature_dim);
    entry.dino.resize(side * side, spec.feature_dim);
    for (Index ly = 0; ly < side; ++ly)
      for (Index lx = 0; lx < side; ++lx) {
        const int k = patch_labels((py + ly) * grid_cols + px + lx);
        entry.values.row(ly * side + lx) = protos.row(k);
        for (Index j = 0; j < spec.feature_dim; ++j) entry.dino(ly * side + lx, j) = protos(k, j) + noise(rng);
      }
    bool clips = false;
    for (const auto& r : spec.objects) {
      const Index y1 = o.y + spec.window;
      const Index x1 = o.x + spec.window;
      if (intersects(r, o.y, o.x, y1, x1) && !contains(o.y, o.x, y1, x1, r)) clips = true;
    }
    if (clips && spec.ambiguity > 0.0) {
      const auto s = static_cast<float>(spec.ambiguity);
      const Eigen::RowVectorXf mean = entry.values.colwise().mean();
      entry.values = ((1.0f - s) * entry.values).rowwise() + s * mean;
    }
    b.windows.push_back(std::move(entry));
  }

  b.projection = random_orthogonal(spec.feature_dim, rng);
  b.text_embeddings = protos * b.projection;

  if (spec.with_sam) {
    SamTensors sam;
    sam.grid_rows = spec.sam_grid ? spec.sam_grid->first : grid_rows;
    sam.grid_cols = spec.sam_grid ? spec.sam_grid->second : grid_cols;
    const Eigen::VectorXi sam_labels = cell_labels(pixels, sam.grid_rows, sam.grid_cols);
    sam.features.resize(sam_labels.size(), spec.feature_dim);
    for (Index i = 0; i < sam_labels.size(); ++i) sam.features.row(i) = protos.row(sam_labels(i));
    if (spec.with_attention) {
      sam.attention = softmax_rows(cosine_matrix(sam.features, sam.features));
      sam.attention_block = 0;
    }
    b.sam = std::move(sam);
  }
  if (spec.with_ground_truth) b.ground_truth = pixels;
  validate_bundle(b);
  return b;
}

Bundle generate_bundle(const SceneSpec& spec, const std::filesystem::path& dir) {
  Bundle b = make_bundle(spec);
  save_bundle(b, dir);
  b.name = dir.filename().string();
  return b;
}

SceneSpec seam_scene(double ambiguity, std::uint64_t seed) {
  SceneSpec spec;
  spec.name = "seam";
  spec.objects = {{192, 192, 416, 416, 1}};
  spec.ambiguity = ambiguity;
  spec.seed = seed;
  return spec;
}

SceneSpec random_scene(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SceneSpec spec;
  spec.name = "random_" + std::to_string(seed);
  spec.seed = seed;
  spec.patch = 16;
  spec.window = 64;
  spec.stride = std::uniform_int_distribution<Index>(1, 4)(rng) * 16;
  spec.height = std::uniform_int_distribution<Index>(4, 9)(rng) * 16;
  spec.width = std::uniform_int_distribution<Index>(4, 9)(rng) * 16;
  const int classes = std::uniform_int_distribution<int>(2, 5)(rng);
  spec.class_names.clear();
  for (int k = 0; k < classes; ++k) spec.class_names.push_back("class" + std::to_string(k));
  spec.has_background = true;
  spec.feature_dim = classes + std::uniform_int_distribution<Index>(0, 3)(rng);
  spec.ambiguity = std::uniform_real_distribution<double>(0.0, 0.9)(rng);
  const int n_objects = std::uniform_int_distribution<int>(1, 4)(rng);
  for (int i = 0; i < n_objects; ++i) {
    const Index y0 = std::uniform_int_distribution<Index>(0, spec.height - spec.patch)(rng);
    const Index x0 = std::uniform_int_distribution<Index>(0, spec.width - spec.patch)(rng);
    const Index y1 = std::uniform_int_distribution<Index>(y0 + spec.patch, spec.height)(rng);
    const Index x1 = std::uniform_int_distribution<Index>(x0 + spec.patch, spec.width)(rng);
    spec.objects.push_back({y0, x0, y1, x1, std::uniform_int_distribution<std::int32_t>(1, classes - 1)(rng)});
  }
  const Index sr = std::uniform_int_distribution<Index>(2, 12)(rng);
  const Index sc = std::uniform_int_distribution<Index>(2, 12)(rng);
  spec.sam_grid = std::make_pair(sr, sc);
  return spec;
}

}  // namespace trident
