#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtgp/errors.hpp"

namespace mtgp {

/// Band-sequential hyperspectral image. Reflectance at (band, row, col) is
/// raw[band][row][col] * scale.
struct HyperCube {
  int width = 0;
  int height = 0;
  std::vector<double> wavelengths;
  std::vector<float> raw;  // layout (band, row, col)
  double scale = 1.0;

  int bands() const { return static_cast<int>(wavelengths.size()); }
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }

  std::size_t offset(int band, int row, int col) const {
    return (static_cast<std::size_t>(band) * height + row) * width + col;
  }
  double at(int band, int row, int col) const { return raw[offset(band, row, col)] * scale; }

  /// Reflectance spectrum of one pixel across all bands.
  std::vector<double> spectrum(int row, int col) const {
    std::vector<double> s(static_cast<std::size_t>(bands()));
    for (int b = 0; b < bands(); ++b) s[b] = at(b, row, col);
    return s;
  }

  void validate() const {
    if (width < 1 || height < 1) throw DataError("cube dimensions must be positive");
    if (wavelengths.empty()) throw DataError("cube has no bands");
    for (std::size_t k = 1; k < wavelengths.size(); ++k) {
      if (!(wavelengths[k] > wavelengths[k - 1])) {
        throw DataError("cube wavelengths not strictly increasing at band " + std::to_string(k));
      }
    }
    if (raw.size() != pixels() * wavelengths.size()) {
      throw DataError("cube data has " + std::to_string(raw.size()) + " values, expected " +
                      std::to_string(pixels() * wavelengths.size()));
    }
  }
};

namespace detail {
inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}
}  // namespace detail

/// Sidecar schema (JSON):
///   { "format": "mtgp-cube-v1", "width": W, "height": H, "bands": B,
///     "wavelengths": [...], "scale": 1.0, "data_file": "<name>.bin" }
/// The data file holds W*H*B little-endian float32 values, band-sequential.
/// data_file is resolved relative to the sidecar's directory.
inline HyperCube read_cube(const std::string& sidecar_path) {
  std::ifstream side(sidecar_path);
  if (!side) throw IoError("cannot open cube sidecar '" + sidecar_path + "'");
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("cube sidecar: ") + e.what(), 0);
  }
  HyperCube cube;
  std::string data_file;
  try {
    cube.width = j.at("width").get<int>();
    cube.height = j.at("height").get<int>();
    cube.wavelengths = j.at("wavelengths").get<std::vector<double>>();
    cube.scale = j.value("scale", 1.0);
    data_file = j.at("data_file").get<std::string>();
    if (j.at("bands").get<int>() != cube.bands()) {
      throw DataError("sidecar band count does not match wavelength list");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("cube sidecar: ") + e.what(), 0);
  }
  const auto bin = std::filesystem::path(sidecar_path).parent_path() / data_file;
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError("cannot open cube data '" + bin.string() + "'");
  const std::size_t count = cube.pixels() * static_cast<std::size_t>(cube.bands());
  std::vector<std::uint32_t> words(count);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(count * 4));
  if (static_cast<std::size_t>(in.gcount()) != count * 4) {
    throw DataError("cube data file is shorter than width*height*bands floats");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("cube data file is longer than width*height*bands floats");
  }
  cube.raw.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    cube.raw[i] = std::bit_cast<float>(detail::to_little_endian(words[i]));
  }
  cube.validate();
  return cube;
}

/// Writes `<stem>.json` and `<stem>.bin` next to each other.
inline void write_cube(const HyperCube& cube, const std::string& sidecar_path) {
  cube.validate();
  const std::filesystem::path side(sidecar_path);
  const auto bin_name = side.stem().string() + ".bin";
  nlohmann::json j = {{"format", "mtgp-cube-v1"},
                      {"width", cube.width},
                      {"height", cube.height},
                      {"bands", cube.bands()},
                      {"wavelengths", cube.wavelengths},
                      {"scale", cube.scale},
                      {"data_file", bin_name}};
  std::ofstream s(side);
  if (!s) throw IoError("cannot write '" + sidecar_path + "'");
  s << j.dump(2) << '\n';
  std::ofstream out(side.parent_path() / bin_name, std::ios::binary);
  if (!out) throw IoError("cannot write cube data next to '" + sidecar_path + "'");
  for (float v : cube.raw) {
    const std::uint32_t w = detail::to_little_endian(std::bit_cast<std::uint32_t>(v));
    out.write(reinterpret_cast<const char*>(&w), 4);
  }
  if (!out) throw IoError("write failed for cube data");
}

}  // namespace mtgp
