// SPDX-License-Identifier: Apache-2.0
#include "mask3d/netpbm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "mask3d/error.hpp"

namespace mask3d {

namespace {

struct Header {
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Header parse_header(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  Header h;
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') tok += static_cast<char>(bytes[pos++]);
    return tok;
  };
  auto number = [&](const char* what) {
    const auto tok = next_token();
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
      throw DataError(path.string() + ": malformed " + what + " '" + tok + "'");
    return static_cast<std::size_t>(std::stoull(tok));
  };
  h.magic = next_token();
  h.width = number("width");
  h.height = number("height");
  h.maxval = number("maxval");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DataError(path.string() + ": truncated header");
  h.data_offset = pos + 1;
  if (h.maxval == 0 || h.maxval > 65535) throw DataError(path.string() + ": maxval out of range");
  return h;
}

void write_bytes(const std::filesystem::path& path, const std::string& header, const std::vector<unsigned char>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

RgbImage8 read_ppm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const auto h = parse_header(bytes, path);
  if (h.magic != "P6") throw DataError(path.string() + ": not a binary PPM (magic '" + h.magic + "')");
  if (h.maxval > 255) throw DataError(path.string() + ": only 8-bit PPM is supported");
  const std::size_t n = h.width * h.height * 3;
  if (bytes.size() - h.data_offset < n) throw DataError(path.string() + ": truncated pixel data");
  RgbImage8 img{h.width, h.height, {}};
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + n));
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage8& image) {
  if (image.pixels.size() != image.width * image.height * 3) throw ContractError("write_ppm: pixel count mismatch");
  write_bytes(path, "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n",
              image.pixels);
}

GrayImage16 read_pgm16(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const auto h = parse_header(bytes, path);
  if (h.magic != "P5") throw DataError(path.string() + ": not a binary PGM (magic '" + h.magic + "')");
  const std::size_t bpp = h.maxval > 255 ? 2 : 1;
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.data_offset < n * bpp) throw DataError(path.string() + ": truncated pixel data");
  GrayImage16 img{h.width, h.height, std::vector<std::uint16_t>(n)};
  const unsigned char* p = bytes.data() + h.data_offset;
  for (std::size_t i = 0; i < n; ++i) {
    img.pixels[i] = bpp == 2 ? static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]) : p[i];
  }
  return img;
}

void write_pgm16(const std::filesystem::path& path, const GrayImage16& image) {
  if (image.pixels.size() != image.width * image.height) throw ContractError("write_pgm16: pixel count mismatch");
  std::vector<unsigned char> body(image.pixels.size() * 2);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    body[2 * i] = static_cast<unsigned char>(image.pixels[i] >> 8);
    body[2 * i + 1] = static_cast<unsigned char>(image.pixels[i] & 0xff);
  }
  write_bytes(path, "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n65535\n", body);
}

}  // namespace mask3d
