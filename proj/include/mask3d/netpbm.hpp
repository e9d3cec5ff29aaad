// SPDX-License-Identifier: Apache-2.0
//
// Binary PPM (P6, 8-bit RGB) and PGM (P5, 8- or 16-bit big-endian) I/O.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace mask3d {

struct RgbImage8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major
};

struct GrayImage16 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint16_t> pixels;
};

/// Throws DataError naming the file on any parse or I/O failure.
RgbImage8 read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage8& image);

/// Accepts maxval <= 65535; 8-bit files are widened.
GrayImage16 read_pgm16(const std::filesystem::path& path);
void write_pgm16(const std::filesystem::path& path, const GrayImage16& image);

}  // namespace mask3d
