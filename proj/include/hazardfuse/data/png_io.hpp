#pragma once

#include <string>

#include "hazardfuse/data/image.hpp"

namespace hf {

/// Reads an 8-bit PNG as grayscale (1 channel) or RGB (3 channels); palette
/// and alpha variants are expanded/stripped. 16-bit files are an error here.
ImageU8 read_png_u8(const std::string& path);

/// Reads a 16-bit single-channel PNG (depth images, value = millimeters).
ImageU16 read_png_u16(const std::string& path);

void write_png_u8(const std::string& path, const ImageU8& img);
void write_png_u16(const std::string& path, const ImageU16& img);

}  // namespace hf
