#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mtgp/data/cube.hpp"
#include "mtgp/data/spectra.hpp"
#include "mtgp/errors.hpp"

namespace mtgp {

/// Closed wavelength interval in nm.
struct BandRange {
  double lo;
  double hi;
  bool contains(double wl) const { return wl >= lo && wl <= hi; }
};

/// Atmospheric water absorption windows removed by default.
inline std::vector<BandRange> default_water_bands() { return {{1350.0, 1460.0}, {1790.0, 1960.0}}; }

struct NdviSettings {
  double red_nm = 670.0;
  double nir_nm = 800.0;
  double threshold = 0.3;
  double tolerance_nm = 5.0;
};

/// Piecewise-linear interpolation of (src_wl, src_values) onto dst_wl. No
/// extrapolation.
inline std::vector<double> resample_spectrum(const std::vector<double>& src_wl,
                                             const std::vector<double>& src_values,
                                             const std::vector<double>& dst_wl) {
  if (src_wl.size() != src_values.size() || src_wl.empty()) {
    throw ShapeError("source wavelengths and values differ in length or are empty");
  }
  std::vector<double> out(dst_wl.size());
  for (std::size_t k = 0; k < dst_wl.size(); ++k) {
    const double w = dst_wl[k];
    if (w < src_wl.front() || w > src_wl.back()) {
      throw RangeError("wavelength " + detail::format_double(w) + " nm outside source range [" +
                       detail::format_double(src_wl.front()) + ", " +
                       detail::format_double(src_wl.back()) + "]");
    }
    const auto it = std::lower_bound(src_wl.begin(), src_wl.end(), w);
    const auto hi = static_cast<std::size_t>(it - src_wl.begin());
    if (src_wl[hi] == w) {
      out[k] = src_values[hi];
      continue;
    }
    const std::size_t lo = hi - 1;
    const double t = (w - src_wl[lo]) / (src_wl[hi] - src_wl[lo]);
    out[k] = src_values[lo] + t * (src_values[hi] - src_values[lo]);
  }
  return out;
}

/// Indices of bands not inside any exclusion range, in order.
inline std::vector<int> kept_bands(const std::vector<double>& wavelengths,
                                   const std::vector<BandRange>& exclude) {
  for (const auto& r : exclude) {
    if (!(r.lo <= r.hi)) {
      throw ConfigError("band range [" + detail::format_double(r.lo) + ", " +
                        detail::format_double(r.hi) + "] has lo > hi");
    }
  }
  std::vector<int> keep;
  for (std::size_t k = 0; k < wavelengths.size(); ++k) {
    const bool drop = std::any_of(exclude.begin(), exclude.end(),
                                  [&](const BandRange& r) { return r.contains(wavelengths[k]); });
    if (!drop) keep.push_back(static_cast<int>(k));
  }
  if (keep.empty()) throw DataError("band removal left no bands");
  return keep;
}

inline SpectraTable remove_bands(const SpectraTable& table, const std::vector<BandRange>& exclude) {
  const auto keep = kept_bands(table.wavelengths, exclude);
  SpectraTable out = table;
  out.wavelengths.clear();
  out.spectra.resize(table.spectra.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.wavelengths.push_back(table.wavelengths[keep[j]]);
    out.spectra.col(static_cast<Eigen::Index>(j)) = table.spectra.col(keep[j]);
  }
  return out;
}

inline HyperCube remove_bands(const HyperCube& cube, const std::vector<BandRange>& exclude) {
  const auto keep = kept_bands(cube.wavelengths, exclude);
  HyperCube out = cube;
  out.wavelengths.clear();
  out.raw.clear();
  out.raw.reserve(keep.size() * cube.pixels());
  for (int b : keep) {
    out.wavelengths.push_back(cube.wavelengths[b]);
    const auto first = cube.raw.begin() + static_cast<std::ptrdiff_t>(cube.offset(b, 0, 0));
    out.raw.insert(out.raw.end(), first, first + static_cast<std::ptrdiff_t>(cube.pixels()));
  }
  return out;
}

/// Index of the band nearest `nm`, which must lie within `tolerance` nm.
inline int nearest_band(const std::vector<double>& wavelengths, double nm, double tolerance) {
  int best = -1;
  double dist = tolerance;
  for (std::size_t k = 0; k < wavelengths.size(); ++k) {
    const double d = std::abs(wavelengths[k] - nm);
    if (d <= dist && (best < 0 || d < dist)) {
      best = static_cast<int>(k);
      dist = d;
    }
  }
  if (best < 0) {
    throw ConfigError("no band within " + detail::format_double(tolerance) + " nm of " +
                      detail::format_double(nm) + " nm");
  }
  return best;
}

/// Row-major height x width mask; true marks vegetation pixels kept for
/// prediction (NDVI >= threshold with a non-degenerate denominator).
inline std::vector<bool> ndvi_mask(const HyperCube& cube, const NdviSettings& s = {}) {
  const int red = nearest_band(cube.wavelengths, s.red_nm, s.tolerance_nm);
  const int nir = nearest_band(cube.wavelengths, s.nir_nm, s.tolerance_nm);
  std::vector<bool> mask(cube.pixels(), false);
  for (int r = 0; r < cube.height; ++r) {
    for (int c = 0; c < cube.width; ++c) {
      const double rv = cube.at(red, r, c), nv = cube.at(nir, r, c);
      const double denom = nv + rv;
      if (denom <= 1e-12) continue;
      mask[static_cast<std::size_t>(r) * cube.width + c] = (nv - rv) / denom >= s.threshold;
    }
  }
  return mask;
}

}  // namespace mtgp
