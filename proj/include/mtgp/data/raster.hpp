#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtgp/data/spectra.hpp"
#include "mtgp/errors.hpp"

namespace mtgp {

/// Per-pixel prediction map, row-major; masked pixels hold nullopt.
struct PredictionMap {
  int width = 0;
  int height = 0;
  std::vector<std::optional<double>> values;

  /// Min and max of unmasked values; nullopt when every pixel is masked.
  std::optional<std::pair<double, double>> range() const {
    std::optional<std::pair<double, double>> r;
    for (const auto& v : values) {
      if (!v) continue;
      if (!r) r.emplace(*v, *v);
      r->first = std::min(r->first, *v);
      r->second = std::max(r->second, *v);
    }
    return r;
  }
};

/// One CSV line per image row, comma separated; masked pixels are "nan".
inline void write_map_csv(const std::string& path, const PredictionMap& map) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (int r = 0; r < map.height; ++r) {
    for (int c = 0; c < map.width; ++c) {
      const auto& v = map.values[static_cast<std::size_t>(r) * map.width + c];
      out << (c ? "," : "") << (v ? detail::format_double(*v) : std::string("nan"));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Gray level of an unmasked value: 1 + round(254 (v - min) / (max - min)),
/// so 1 is the minimum, 255 the maximum, and 0 (black) is reserved for
/// masked pixels. A constant map renders every unmasked pixel at 255.
inline std::uint8_t gray_level(double v, double lo, double hi) {
  if (!(hi > lo)) return 255;
  const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return static_cast<std::uint8_t>(1 + std::lround(254.0 * t));
}

/// Binary PGM (P5), 8-bit, plus a JSON legend sidecar recording the scale.
inline void write_map_image(const std::string& pgm_path, const std::string& legend_path,
                            const PredictionMap& map, const std::string& task,
                            const std::string& unit) {
  const auto range = map.range();
  const double lo = range ? range->first : 0.0, hi = range ? range->second : 0.0;
  std::ofstream out(pgm_path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + pgm_path + "'");
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  for (const auto& v : map.values) {
    const std::uint8_t g = v ? gray_level(*v, lo, hi) : 0;
    out.put(static_cast<char>(g));
  }
  if (!out) throw IoError("write failed for '" + pgm_path + "'");

  nlohmann::json legend = {
      {"task", task},
      {"unit", unit},
      {"min", range ? nlohmann::json(lo) : nlohmann::json(nullptr)},
      {"max", range ? nlohmann::json(hi) : nlohmann::json(nullptr)},
      {"masked_gray", 0},
      {"scaling", "gray = 1 + round(254 * (value - min) / (max - min)); 255 when max == min"},
      {"unmasked_pixels", std::count_if(map.values.begin(), map.values.end(),
                                        [](const auto& v) { return v.has_value(); })}};
  std::ofstream side(legend_path);
  if (!side) throw IoError("cannot write '" + legend_path + "'");
  side << legend.dump(2) << '\n';
}

}  // namespace mtgp
