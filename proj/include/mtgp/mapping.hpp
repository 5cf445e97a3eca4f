#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "mtgp/data/cube.hpp"
#include "mtgp/data/preprocess.hpp"
#include "mtgp/data/raster.hpp"
#include "mtgp/parallel.hpp"
#include "mtgp/serialization.hpp"

namespace mtgp {

/// Checks that every model wavelength can be interpolated from `cube_wl`
/// (already band-removed) without crossing an excluded window.
inline void check_coverage(const std::vector<double>& model_wl, const std::vector<double>& cube_wl,
                           const std::vector<BandRange>& exclusions) {
  if (cube_wl.empty()) throw RangeError("cube has no bands left after band removal");
  for (double w : model_wl) {
    if (w < cube_wl.front() || w > cube_wl.back()) {
      throw RangeError("model band " + detail::format_double(w) + " nm not covered by cube range [" +
                       detail::format_double(cube_wl.front()) + ", " +
                       detail::format_double(cube_wl.back()) + "] nm");
    }
    for (const auto& r : exclusions) {
      if (r.contains(w)) {
        throw RangeError("model band " + detail::format_double(w) + " nm falls in removed gap [" +
                         detail::format_double(r.lo) + ", " + detail::format_double(r.hi) + "] nm");
      }
    }
  }
}

/// A pixel's reflectance resampled onto the model's wavelengths. The cube
/// must already have had the model's band exclusions removed.
inline Eigen::RowVectorXd preprocess_pixel(const HyperCube& cube, int row, int col,
                                           const std::vector<double>& model_wl) {
  const auto v = resample_spectrum(cube.wavelengths, cube.spectrum(row, col), model_wl);
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct MapResult {
  std::vector<bool> mask;            // row-major; true = vegetation, predicted
  std::vector<PredictionMap> maps;   // one per requested task
};

/// Per-pixel predictive means for `tasks` over the NDVI-kept pixels of a
/// cube. Rows are processed in parallel; output does not depend on `jobs`.
inline MapResult predict_map(const SavedModel& model, const HyperCube& cube,
                             const std::vector<int>& tasks, const NdviSettings& ndvi, int jobs = 1) {
  cube.validate();
  MapResult out;
  out.mask = ndvi_mask(cube, ndvi);
  const HyperCube clean =
      model.band_exclusions.empty() ? cube : remove_bands(cube, model.band_exclusions);
  check_coverage(model.wavelengths, clean.wavelengths, model.band_exclusions);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    out.maps.push_back({cube.width, cube.height, std::vector<std::optional<double>>(cube.pixels())});
  }
  parallel_for(static_cast<std::size_t>(cube.height), jobs, [&](std::size_t r) {
    const int row = static_cast<int>(r);
    for (int c = 0; c < cube.width; ++c) {
      const std::size_t k = r * static_cast<std::size_t>(cube.width) + c;
      if (!out.mask[k]) continue;
      const Eigen::RowVectorXd x = preprocess_pixel(clean, row, c, model.wavelengths);
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        out.maps[t].values[k] = model.predict(x, tasks[t])[0];
      }
    }
  });
  return out;
}

}  // namespace mtgp
