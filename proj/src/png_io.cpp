#include "hazardfuse/data/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace hf {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

void open_reader(PngReader& r, std::FILE* f, const std::string& path) {
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f) != 8 || png_sig_cmp(sig, 0, 8))
    throw std::runtime_error("not a PNG file: " + path);
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (!r.png || !r.info) throw std::runtime_error("libpng init failed");
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("libpng read error: " + path);
  png_init_io(r.png, f);
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);
}

}  // namespace

ImageU8 read_png_u8(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open " + path);
  PngReader r;
  open_reader(r, f.get(), path);

  if (png_get_bit_depth(r.png, r.info) == 16)
    throw std::runtime_error("expected 8-bit PNG, got 16-bit: " + path);
  png_set_expand(r.png);          // palette/low-bit-depth -> 8-bit
  png_set_strip_alpha(r.png);
  png_read_update_info(r.png, r.info);

  const int w = static_cast<int>(png_get_image_width(r.png, r.info));
  const int h = static_cast<int>(png_get_image_height(r.png, r.info));
  const int ch = static_cast<int>(png_get_channels(r.png, r.info));
  if (ch != 1 && ch != 3)
    throw std::runtime_error("unsupported channel count " + std::to_string(ch) + " in " + path);

  ImageU8 img(w, h, ch);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] = img.pixels.data() + img.index(0, y, 0);
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("libpng read error: " + path);
  png_read_image(r.png, rows.data());
  return img;
}

ImageU16 read_png_u16(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open " + path);
  PngReader r;
  open_reader(r, f.get(), path);

  if (png_get_bit_depth(r.png, r.info) != 16)
    throw std::runtime_error("expected 16-bit depth PNG: " + path);
  if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY)
    throw std::runtime_error("expected single-channel depth PNG: " + path);
  png_set_swap(r.png);  // PNG stores big-endian; we run little-endian
  png_read_update_info(r.png, r.info);

  const int w = static_cast<int>(png_get_image_width(r.png, r.info));
  const int h = static_cast<int>(png_get_image_height(r.png, r.info));
  ImageU16 img(w, h, 1);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] =
        reinterpret_cast<png_bytep>(img.pixels.data() + img.index(0, y, 0));
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("libpng read error: " + path);
  png_read_image(r.png, rows.data());
  return img;
}

void write_png_u8(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png_u8: only 1 or 3 channels supported");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write " + path);
  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  if (!w.png || !w.info) throw std::runtime_error("libpng init failed");
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("libpng write error: " + path);
  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(w.png, const_cast<png_bytep>(img.pixels.data() + img.index(0, y, 0)));
  png_write_end(w.png, nullptr);
}

void write_png_u16(const std::string& path, const ImageU16& img) {
  if (img.channels != 1) throw std::invalid_argument("write_png_u16: single channel only");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write " + path);
  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  if (!w.png || !w.info) throw std::runtime_error("libpng init failed");
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("libpng write error: " + path);
  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  png_set_swap(w.png);
  for (int y = 0; y < img.height; ++y)
    png_write_row(w.png,
                  const_cast<png_bytep>(reinterpret_cast<const png_byte*>(img.pixels.data() + img.index(0, y, 0))));
  png_write_end(w.png, nullptr);
}

}  // namespace hf
