#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mtgp/data/spectra.hpp"
#include "mtgp/data/split.hpp"
#include "mtgp/kernels.hpp"
#include "mtgp/model.hpp"

namespace mtgp {

/// Parameters of the shipped benchmark generator: a draw from a two-term
/// composite-covariance prior on random pseudo-spectra.
struct SyntheticSpec {
  int num_samples = 100;
  int num_bands = 5;
  double band_start_nm = 400.0;
  double band_step_nm = 10.0;
  /// Labels kept per task; task 0 is the primary task.
  std::vector<int> labels_per_task{10, 100};
  Eigen::MatrixXd first_task_matrix = (Eigen::MatrixXd(2, 2) << 1.0, 0.9, 0.9, 1.0).finished();
  Eigen::MatrixXd second_task_matrix = (Eigen::MatrixXd(2, 2) << 0.5, -0.3, -0.3, 0.5).finished();
  KernelSpec first_kernel = KernelSpec::se(1.0, 0.5);
  KernelSpec second_kernel = KernelSpec::nn(1.0, 2.0);
  std::vector<double> noise_variance{0.01, 0.01};
  std::uint64_t seed = 0;

  int num_tasks() const { return static_cast<int>(labels_per_task.size()); }
};

/// Samples a SpectraTable whose spectra lie in [0, 1] and whose labels are
/// one joint draw from  P (x) K1 + Q (x) K2 + D (x) I  over the full grid,
/// after which each task keeps a random subset of `labels_per_task` labels.
inline SpectraTable generate_synthetic(const SyntheticSpec& spec) {
  const int n = spec.num_samples, m = spec.num_tasks();
  if (n < 1 || spec.num_bands < 1 || m < 1) throw ConfigError("synthetic sizes must be positive");
  if (spec.first_task_matrix.rows() != m || spec.first_task_matrix.cols() != m ||
      spec.second_task_matrix.rows() != m || spec.second_task_matrix.cols() != m ||
      static_cast<int>(spec.noise_variance.size()) != m) {
    throw ConfigError("synthetic task matrices and noise must match the task count");
  }
  for (int c : spec.labels_per_task) {
    if (c < 1 || c > n) throw ConfigError("labels per task must lie in [1, num_samples]");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);

  SpectraTable t;
  for (int k = 0; k < spec.num_bands; ++k) {
    t.wavelengths.push_back(spec.band_start_nm + spec.band_step_nm * k);
  }
  t.spectra.resize(n, spec.num_bands);
  for (Eigen::Index i = 0; i < t.spectra.size(); ++i) t.spectra.data()[i] = unit(rng);

  const Eigen::MatrixXd k1 = kernel_matrix(spec.first_kernel, t.spectra);
  const Eigen::MatrixXd k2 = kernel_matrix(spec.second_kernel, t.spectra);
  Eigen::MatrixXd sigma(n * m, n * m);
  for (int l = 0; l < m; ++l) {
    for (int q = 0; q < m; ++q) {
      sigma.block(l * n, q * n, n, n) =
          spec.first_task_matrix(l, q) * k1 + spec.second_task_matrix(l, q) * k2;
    }
    sigma.block(l * n, l * n, n, n).diagonal().array() += spec.noise_variance[l];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw ConfigError("synthetic prior covariance is not PD");
  Eigen::VectorXd z(n * m);
  for (auto& e : z) e = n01(rng);
  const Eigen::VectorXd y = llt.matrixL() * z;

  t.labels = Eigen::MatrixXd::Constant(n, m, kMissing);
  for (int l = 0; l < m; ++l) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    detail::shuffle_with(idx, rng);
    for (int r = 0; r < spec.labels_per_task[l]; ++r) t.labels(idx[r], l) = y[l * n + idx[r]];
    t.task_names.push_back(l == 0 ? "primary" : "secondary" + std::to_string(l));
    t.task_units.emplace_back();
  }
  return t;
}

}  // namespace mtgp
