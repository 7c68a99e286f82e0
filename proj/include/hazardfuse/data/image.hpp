#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hf {

/// Interleaved row-major raster image (pixel index (y*width + x)*channels + c).
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> pixels;

  Image() = default;
  Image(int w, int h, int c, T fill = T(0))
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || c <= 0) throw std::invalid_argument("Image: non-positive dimensions");
  }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  T& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
  T at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }

  bool same_dims(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

using ImageU8 = Image<std::uint8_t>;
using ImageU16 = Image<std::uint16_t>;

/// Binary mask helper: 1-channel u8 image holding 0/1 values.
inline ImageU8 make_mask(int w, int h) { return ImageU8(w, h, 1, 0); }

}  // namespace hf
