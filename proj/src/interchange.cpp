#include "trident/interchange.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>

#include "trident/correlation.hpp"
#include "trident/errors.hpp"

namespace trident {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kFixedHeader = 8;  // magic(4) version(2) dtype(1) rank(1)

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string field_path(std::string_view a, std::string_view b) { return std::string(a) + "." + std::string(b); }

}  // namespace

// ---------------------------------------------------------------------------
// TensorFile
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() == 0 || t.rank() > 255) throw ShapeError("encode_tensor: rank must be in [1, 255]");
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + 8 * t.rank() + 4 * t.size());
  out.insert(out.end(), kTensorMagic.begin(), kTensorMagic.end());
  put_u16(out, kTensorVersion);
  out.push_back(kDtypeF32);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) put_u64(out, d);
  for (float f : t.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, std::string_view what) {
  const std::string name(what);
  if (bytes.size() < kFixedHeader) throw IoError(name + ": truncated header");
  if (!std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin()))
    throw IoError(name + ": bad magic (not a TRDT tensor file)");
  const auto version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kTensorVersion) throw IoError(name + ": unsupported version " + std::to_string(version));
  if (bytes[6] != kDtypeF32) throw IoError(name + ": unsupported dtype code " + std::to_string(bytes[6]));
  const std::size_t rank = bytes[7];
  if (rank == 0) throw ShapeError(name + ": rank must be at least 1");
  if (bytes.size() < kFixedHeader + 8 * rank) throw IoError(name + ": truncated dimension table");
  std::vector<std::uint64_t> dims(rank);
  std::uint64_t count = 1;
  const std::uint64_t max_count = (bytes.size() - kFixedHeader - 8 * rank) / 4;
  for (std::size_t i = 0; i < rank; ++i) {
    dims[i] = get_u64(bytes.data() + kFixedHeader + 8 * i);
    if (dims[i] == 0) throw ShapeError(name + ": zero-sized dimension");
    if (dims[i] > max_count / count) throw IoError(name + ": truncated payload");
    count *= dims[i];
  }
  const std::size_t payload = bytes.size() - kFixedHeader - 8 * rank;
  if (payload < 4 * count) throw IoError(name + ": truncated payload");
  if (payload > 4 * count) throw IoError(name + ": trailing bytes after payload");
  std::vector<float> data(count);
  const std::uint8_t* p = bytes.data() + kFixedHeader + 8 * rank;
  for (std::size_t i = 0; i < count; ++i, p += 4) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    data[i] = std::bit_cast<float>(bits);
  }
  return Tensor(std::move(dims), std::move(data), what);
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_tensor(const Tensor& t, const fs::path& path) { write_file_bytes(path, encode_tensor(t)); }

Tensor read_tensor(const fs::path& path, std::string_view what) {
  return decode_tensor(read_file_bytes(path), what);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

void ClassVocabulary::validate() const {
  if (names.empty()) throw ValidationError("text.classes: vocabulary is empty");
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw ValidationError("text.classes: duplicate class name '" + n + "'");
}

void validate_bundle(const Bundle& b) {
  b.vocabulary.validate();
  const auto& layout = b.layout;
  if (layout.image_height != b.image_height || layout.image_width != b.image_width)
    throw ShapeError("layout: planned for a different image size");
  if (!layout.patch_aligned())
    throw ShapeError("layout: image size, window and origins must be multiples of the patch size");
  if (b.windows.size() != layout.window_count())
    throw ShapeError("windows: " + std::to_string(b.windows.size()) + " entries but the layout plans " +
                     std::to_string(layout.window_count()));
  const Index n_w = layout.tokens_per_window();
  const Index d_v = b.projection.rows();
  Index d_dino = -1;
  for (std::size_t i = 0; i < b.windows.size(); ++i) {
    const auto& w = b.windows[i];
    const std::string where = "windows[" + std::to_string(i) + "]";
    if (w.index != i) throw ShapeError(where + ": window index " + std::to_string(w.index) + " out of order");
    if (w.values.rows() != n_w)
      throw ShapeError(where + ".values: window " + std::to_string(i) + " has " + std::to_string(w.values.rows()) +
                       " tokens, expected " + std::to_string(n_w));
    if (w.values.cols() != d_v)
      throw ShapeError(where + ".values: dimension " + std::to_string(w.values.cols()) +
                       " does not match projection rows " + std::to_string(d_v));
    if (w.dino.rows() != n_w)
      throw ShapeError(where + ".dino: window " + std::to_string(i) + " has " + std::to_string(w.dino.rows()) +
                       " tokens, expected " + std::to_string(n_w));
    if (d_dino < 0) d_dino = w.dino.cols();
    if (w.dino.cols() != d_dino) throw ShapeError(where + ".dino: dimension differs from window 0");
    require_finite(w.values, (where + ".values").c_str());
    require_finite(w.dino, (where + ".dino").c_str());
  }
  require_finite(b.projection, "projection");
  if (b.text_embeddings.cols() != b.projection.cols())
    throw ShapeError("text.embeddings: dimension " + std::to_string(b.text_embeddings.cols()) +
                     " does not match projection output " + std::to_string(b.projection.cols()));
  if (static_cast<std::size_t>(b.text_embeddings.rows()) != b.class_count())
    throw ShapeError("text.embeddings: " + std::to_string(b.text_embeddings.rows()) + " rows for " +
                     std::to_string(b.class_count()) + " classes");
  require_finite(b.text_embeddings, "text.embeddings");
  if (b.sam) {
    const auto& s = *b.sam;
    const Index n_s = s.grid_rows * s.grid_cols;
    if (s.grid_rows < 1 || s.grid_cols < 1) throw ShapeError("sam.grid: must be positive");
    if (s.features.rows() != n_s)
      throw ShapeError("sam.features: " + std::to_string(s.features.rows()) + " rows for a " +
                       std::to_string(s.grid_rows) + "x" + std::to_string(s.grid_cols) + " grid");
    require_finite(s.features, "sam.features");
    if (s.attention) {
      if (s.attention->rows() != n_s || s.attention->cols() != n_s)
        throw ShapeError("sam.attention: expected " + std::to_string(n_s) + "x" + std::to_string(n_s));
      require_finite(*s.attention, "sam.attention");
      if ((s.attention->array() < 0.0f).any()) throw ValidationError("sam.attention: negative weights");
    }
  }
  if (b.ground_truth) {
    const auto& gt = *b.ground_truth;
    if (gt.rows() != b.image_height || gt.cols() != b.image_width)
      throw ShapeError("ground_truth: size differs from the image");
    const auto c = static_cast<std::int32_t>(b.class_count());
    for (Index i = 0; i < gt.size(); ++i) {
      const auto v = gt.data()[i];
      if (v != 255 && (v < 0 || v >= c))
        throw ValidationError("ground_truth: label " + std::to_string(v) + " outside [0, " + std::to_string(c) +
                              ") and not the ignore value 255");
    }
  }
}

namespace {

Tensor load_ref(const fs::path& dir, const json& node, const std::string& field) {
  if (!node.is_string()) throw ValidationError(field + ": expected a file name");
  const fs::path path = dir / node.get<std::string>();
  if (!fs::exists(path)) throw IoError("missing tensor file for " + field + ": " + path.string());
  return read_tensor(path, field);
}

RowMatrix<float> load_matrix(const fs::path& dir, const json& node, const std::string& field) {
  const auto t = load_ref(dir, node, field);
  if (t.rank() != 2) throw ShapeError(field + ": expected rank 2, got " + t.shape_string());
  return to_matrix(t);
}

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(field_path(where, key) + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(field_path(where, key) + ": " + e.what());
  }
}

}  // namespace

bool is_bundle_dir(const fs::path& dir) { return fs::is_regular_file(dir / "manifest.json"); }

std::vector<fs::path> find_bundles(const fs::path& root) {
  if (is_bundle_dir(root)) return {root};
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && is_bundle_dir(entry.path())) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

Bundle load_bundle_impl(const fs::path& dir);

}  // namespace

Bundle load_bundle(const fs::path& dir) {
  try {
    return load_bundle_impl(dir);
  } catch (const json::exception& e) {
    throw ValidationError("manifest.json in " + dir.string() + ": " + e.what());
  }
}

namespace {

Bundle load_bundle_impl(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("no manifest.json in " + dir.string());
  json m;
  try {
    std::ifstream in(manifest_path);
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("manifest.json: " + std::string(e.what()));
  }
  if (m.value("format", std::string()) != "trident-bundle")
    throw ValidationError("manifest.format: expected \"trident-bundle\"");
  if (m.value("version", 0) != 1) throw ValidationError("manifest.version: only version 1 is supported");

  Bundle b;
  b.name = dir.filename().string();
  if (b.name.empty() || b.name == ".") b.name = fs::absolute(dir).parent_path().filename().string();

  const json& image = m.at("image");
  b.image_height = required<Index>(image, "height", "image");
  b.image_width = required<Index>(image, "width", "image");
  b.image_ref = image.value("ref", b.name);

  const json& layout = m.at("layout");
  const auto window = required<Index>(layout, "window", "layout");
  const auto stride = required<Index>(layout, "stride", "layout");
  const auto patch = required<Index>(layout, "patch", "layout");
  if (layout.contains("shorter_side")) b.shorter_side = layout.at("shorter_side").get<Index>();
  try {
    b.layout = plan_windows(b.image_height, b.image_width, window, stride, patch);
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("layout: ") + e.what());
  }

  const json& windows = m.at("windows");
  if (!windows.is_array()) throw ValidationError("windows: expected an array");
  if (windows.size() != b.layout.window_count())
    throw ShapeError("windows: manifest lists " + std::to_string(windows.size()) + " windows but the layout plans " +
                     std::to_string(b.layout.window_count()));
  b.windows.resize(windows.size());
  std::vector<bool> filled(windows.size(), false);
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const json& w = windows[k];
    const std::string where = "windows[" + std::to_string(k) + "]";
    const auto index = required<std::size_t>(w, "index", where);
    if (index >= windows.size() || filled[index])
      throw ValidationError(where + ".index: invalid or duplicate window index " + std::to_string(index));
    filled[index] = true;
    if (w.contains("origin")) {
      const auto origin = w.at("origin").get<std::vector<Index>>();
      const auto& planned = b.layout.origins[index];
      if (origin.size() != 2 || origin[0] != planned.y || origin[1] != planned.x)
        throw ShapeError(where + ".origin: does not match the planned origin of window " + std::to_string(index));
    }
    BundleWindow& entry = b.windows[index];
    entry.index = index;
    entry.values = load_matrix(dir, w.at("values"), where + ".values");
    entry.dino = load_matrix(dir, w.at("dino"), where + ".dino");
  }

  b.projection = load_matrix(dir, m.at("projection"), "projection");

  if (m.contains("sam") && !m.at("sam").is_null()) {
    const json& s = m.at("sam");
    SamTensors& sam = b.sam.emplace();
    const auto grid = required<std::vector<Index>>(s, "grid", "sam");
    if (grid.size() != 2) throw ValidationError("sam.grid: expected [rows, cols]");
    sam.grid_rows = grid[0];
    sam.grid_cols = grid[1];
    sam.features = load_matrix(dir, s.at("features"), "sam.features");
    if (s.contains("attention") && !s.at("attention").is_null()) {
      const auto t = load_ref(dir, s.at("attention"), "sam.attention");
      if (t.rank() == 2) {
        sam.attention = to_matrix(t);
      } else if (t.rank() == 3) {
        const auto heads = static_cast<Index>(t.dim(0));
        const auto rows = static_cast<Index>(t.dim(1));
        const auto cols = static_cast<Index>(t.dim(2));
        std::vector<RowMatrix<float>> per_head;
        for (Index h = 0; h < heads; ++h)
          per_head.emplace_back(Eigen::Map<const RowMatrix<float>>(t.data().data() + h * rows * cols, rows, cols));
        sam.attention = reduce_attention_heads(per_head);
      } else {
        throw ShapeError("sam.attention: expected rank 2 or 3, got " + t.shape_string());
      }
    }
    if (s.contains("attention_block")) sam.attention_block = s.at("attention_block").get<int>();
  }

  const json& text = m.at("text");
  b.text_embeddings = load_matrix(dir, text.at("embeddings"), "text.embeddings");
  b.vocabulary.names = required<std::vector<std::string>>(text, "classes", "text");
  b.vocabulary.has_background = text.value("background", false);

  if (m.contains("ground_truth") && !m.at("ground_truth").is_null()) {
    const auto gt = load_ref(dir, m.at("ground_truth"), "ground_truth");
    if (gt.rank() != 2) throw ShapeError("ground_truth: expected rank 2");
    LabelMap labels(static_cast<Index>(gt.dim(0)), static_cast<Index>(gt.dim(1)));
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const float v = gt.data()[i];
      if (v != std::floor(v) || v < 0.0f || v > 255.0f)
        throw ValidationError("ground_truth: non-integer label at flat index " + std::to_string(i));
      labels.data()[i] = static_cast<std::int32_t>(v);
    }
    b.ground_truth = std::move(labels);
  }
  if (m.contains("seed")) b.seed = m.at("seed").get<std::uint64_t>();

  validate_bundle(b);
  return b;
}

}  // namespace

void save_bundle(const Bundle& b, const fs::path& dir) {
  validate_bundle(b);
  fs::create_directories(dir / "windows");
  json m;
  m["format"] = "trident-bundle";
  m["version"] = 1;
  m["image"] = {{"height", b.image_height}, {"width", b.image_width}, {"ref", b.image_ref}};
  m["layout"] = {{"window", b.layout.window}, {"stride", b.layout.stride}, {"patch", b.layout.patch}};
  if (b.shorter_side) m["layout"]["shorter_side"] = *b.shorter_side;
  json windows = json::array();
  for (std::size_t i = 0; i < b.windows.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "windows/%04zu", i);
    const std::string values = std::string(stem) + "_values.trdt";
    const std::string dino = std::string(stem) + "_dino.trdt";
    write_tensor(from_matrix(b.windows[i].values), dir / values);
    write_tensor(from_matrix(b.windows[i].dino), dir / dino);
    const auto& o = b.layout.origins[i];
    windows.push_back({{"index", i}, {"origin", {o.y, o.x}}, {"values", values}, {"dino", dino}});
  }
  m["windows"] = windows;
  write_tensor(from_matrix(b.projection), dir / "projection.trdt");
  m["projection"] = "projection.trdt";
  if (b.sam) {
    json s = {{"grid", {b.sam->grid_rows, b.sam->grid_cols}}, {"features", "sam_features.trdt"}};
    write_tensor(from_matrix(b.sam->features), dir / "sam_features.trdt");
    if (b.sam->attention) {
      write_tensor(from_matrix(*b.sam->attention), dir / "sam_attention.trdt");
      s["attention"] = "sam_attention.trdt";
    }
    if (b.sam->attention_block) s["attention_block"] = *b.sam->attention_block;
    m["sam"] = s;
  }
  write_tensor(from_matrix(b.text_embeddings), dir / "text_embeddings.trdt");
  m["text"] = {{"embeddings", "text_embeddings.trdt"},
               {"classes", b.vocabulary.names},
               {"background", b.vocabulary.has_background}};
  if (b.ground_truth) {
    RowMatrix<float> gt = b.ground_truth->cast<float>();
    write_tensor(from_matrix(gt), dir / "ground_truth.trdt");
    m["ground_truth"] = "ground_truth.trdt";
  }
  if (b.seed) m["seed"] = *b.seed;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Segmentation outputs
// ---------------------------------------------------------------------------

Palette default_palette(std::size_t entries) {
  entries = std::min<std::size_t>(entries, 256);
  Palette p(entries);
  for (std::size_t i = 0; i < entries; ++i) {
    std::size_t label = i;
    std::uint8_t r = 0, g = 0, b = 0;
    for (int shift = 7; shift >= 0 && label; --shift, label >>= 3) {
      r |= static_cast<std::uint8_t>((label & 1) << shift);
      g |= static_cast<std::uint8_t>(((label >> 1) & 1) << shift);
      b |= static_cast<std::uint8_t>(((label >> 2) & 1) << shift);
    }
    p[i] = {r, g, b};
  }
  return p;
}

void write_segmentation(const LabelMap& labels, const ClassScoreMap& scores, const Palette& palette,
                        const fs::path& png_path, const fs::path& scores_path) {
  const auto class_count = static_cast<std::size_t>(scores.channels());
  write_file_bytes(png_path, encode_label_png(labels, class_count, palette));
  write_tensor(from_grid(scores), scores_path);
}

}  // namespace trident
