#include <png.h>

#include "trident/errors.hpp"
#include "trident/interchange.hpp"

namespace trident {
namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_nothing(png_structp) {}

[[noreturn]] void on_png_error(png_structp, png_const_charp message) { throw IoError(std::string("png: ") + message); }

void on_png_warning(png_structp, png_const_charp) {}

struct PngWriteHandle {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngWriteHandle() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
    if (!png) throw IoError("png: cannot allocate writer");
    info = png_create_info_struct(png);
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw IoError("png: cannot allocate info");
    }
  }
  ~PngWriteHandle() { png_destroy_write_struct(&png, &info); }
  PngWriteHandle(const PngWriteHandle&) = delete;
  PngWriteHandle& operator=(const PngWriteHandle&) = delete;
};

}  // namespace

std::vector<std::uint8_t> encode_label_png(const LabelMap& labels, std::size_t class_count, const Palette& palette) {
  if (labels.rows() < 1 || labels.cols() < 1) throw ShapeError("encode_label_png: empty label map");
  if (class_count < 1) throw ValidationError("encode_label_png: no classes");
  if (class_count > palette.size() || class_count > 256)
    throw ValidationError("encode_label_png: " + std::to_string(class_count) + " classes but only " +
                          std::to_string(std::min<std::size_t>(palette.size(), 256)) + " palette entries");
  std::vector<png_byte> rows(static_cast<std::size_t>(labels.size()));
  for (Index i = 0; i < labels.size(); ++i) {
    const auto v = labels.data()[i];
    if (v < 0 || static_cast<std::size_t>(v) >= class_count)
      throw ValidationError("encode_label_png: label " + std::to_string(v) + " outside the " +
                            std::to_string(class_count) + "-class palette");
    rows[static_cast<std::size_t>(i)] = static_cast<png_byte>(v);
  }

  std::vector<png_color> colors(class_count);
  for (std::size_t i = 0; i < class_count; ++i) colors[i] = {palette[i][0], palette[i][1], palette[i][2]};

  std::vector<std::uint8_t> out;
  PngWriteHandle h;
  png_set_write_fn(h.png, &out, append_bytes, flush_nothing);
  png_set_IHDR(h.png, h.info, static_cast<png_uint_32>(labels.cols()), static_cast<png_uint_32>(labels.rows()), 8,
               PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_PLTE(h.png, h.info, colors.data(), static_cast<int>(colors.size()));
  png_write_info(h.png, h.info);
  for (Index y = 0; y < labels.rows(); ++y) png_write_row(h.png, rows.data() + y * labels.cols());
  png_write_end(h.png, nullptr);
  return out;
}

}  // namespace trident
