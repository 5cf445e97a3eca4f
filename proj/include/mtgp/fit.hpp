#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

#include "mtgp/model.hpp"
#include "mtgp/optimizer.hpp"

namespace mtgp {

/// Lower bound on each task's noise variance while learning.
inline constexpr double kNoiseFloor = 1e-8;

/// Random starting point for the learned parameters of `structure`.
///
///   task matrices:   a0 ~ U[0.5, 1.5], B ~ N(0, 0.5^2)
///   noise matrix:    a0 ~ U[0, 0.5],   B ~ N(0, 0.25^2)
///   kernel log-hypers ~ U[log 0.1, log 10]
///   task log-noise   ~ U[log 0.01, log 1]
inline Eigen::VectorXd sample_initial_params(const ModelConfig& structure, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.5, 1.5);
  std::uniform_real_distribution<double> noise_scale(0.0, 0.5);
  std::normal_distribution<double> factor(0.0, 0.5);
  std::normal_distribution<double> noise_factor(0.0, 0.25);
  std::uniform_real_distribution<double> hyper(std::log(0.1), std::log(10.0));
  std::uniform_real_distribution<double> lognoise(std::log(0.01), std::log(1.0));

  ModelConfig c = structure;
  for (auto& t : c.terms) {
    t.task.a0 = scale(rng);
    for (Eigen::Index k = 0; k < t.task.b.size(); ++k) t.task.b.data()[k] = factor(rng);
    for (Eigen::Index h = 0; h < t.kernel.log_hypers.size(); ++h) t.kernel.log_hypers[h] = hyper(rng);
  }
  if (c.noise) {
    c.noise->a0 = noise_scale(rng);
    for (Eigen::Index k = 0; k < c.noise->b.size(); ++k) c.noise->b.data()[k] = noise_factor(rng);
  }
  for (Eigen::Index l = 0; l < c.task_noise_log.size(); ++l) c.task_noise_log[l] = lognoise(rng);
  return c.params();
}

struct FitResult {
  FittedModel model;
  MultiRestartResult optimization;
};

/// Learns parameters by minimizing NLML over `opt.num_restarts` random
/// restarts and conditions the model on `data` at the best one.
inline FitResult fit(const ModelConfig& structure, const ObservationSet& data,
                     const OptimizerSettings& opt) {
  opt.validate();
  const LikelihoodProblem problem(data);
  problem.check(structure);
  const int noise_at = structure.task_noise_offset();
  const int m = structure.num_tasks();
  const double floor = std::log(kNoiseFloor);

  auto clamp_noise = [&](Eigen::VectorXd p) {
    for (int l = 0; l < m; ++l) p[noise_at + l] = std::max(p[noise_at + l], floor);
    return p;
  };

  ModelConfig work = structure;
  Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    work.set_params(clamp_noise(x));
    const double v = problem.nlml_and_gradient(work, g);
    for (int l = 0; l < m; ++l) {
      if (x[noise_at + l] < floor) g[noise_at + l] = 0.0;
    }
    return v;
  };
  InitSampler sampler = [&](std::uint64_t seed) { return sample_initial_params(structure, seed); };

  MultiRestartResult result = multi_restart_minimize(objective, sampler, opt);
  ModelConfig learned = structure;
  learned.set_params(clamp_noise(result.best.x));
  return FitResult{FittedModel(std::move(learned), data), std::move(result)};
}

}  // namespace mtgp
