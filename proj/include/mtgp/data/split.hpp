#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mtgp/data/spectra.hpp"
#include "mtgp/errors.hpp"
#include "mtgp/observations.hpp"

namespace mtgp {

/// Observation sets for one evaluation trial. Model task 0 is the primary
/// task; secondary tasks follow in the order given.
struct TrialSplit {
  ObservationSet train;
  ObservationSet test;         // primary-task pairs only
  ObservationSet inner_train;  // ~80% of train, used for fitting candidates
  ObservationSet inner_val;    // ~20% of train, used for candidate selection
  std::vector<std::string> task_names;
  std::vector<int> table_tasks;  // table column of each model task
};

/// Every labeled (sample, task) pair of `tasks`, with task indices remapped
/// to positions in `tasks`.
inline ObservationSet observations_from_table(const SpectraTable& table,
                                              const std::vector<int>& tasks) {
  ObservationSet out{table.spectra, static_cast<int>(tasks.size()), {}};
  for (std::size_t l = 0; l < tasks.size(); ++l) {
    for (Eigen::Index i = 0; i < table.num_samples(); ++i) {
      const double v = table.labels(i, tasks[l]);
      if (!is_missing(v)) out.obs.push_back({static_cast<int>(i), static_cast<int>(l), v});
    }
  }
  return out;
}

namespace detail {
template <typename T>
void shuffle_with(std::vector<T>& v, std::mt19937_64& rng) {
  // Fisher-Yates with an explicit draw so results do not depend on the
  // standard library's shuffle.
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}
}  // namespace detail

/// Transfer-learning split: a random third (floor, at least one) of the
/// primary labels is held out for testing; the rest plus every secondary
/// label form the training set. Training is further split 80/20 per task
/// for candidate selection; the 20% part always holds at least one primary
/// observation (two when at least three primary training labels exist).
inline TrialSplit split_trial(const SpectraTable& table, int primary,
                              const std::vector<int>& secondaries, std::uint64_t seed) {
  if (primary < 0 || primary >= table.num_tasks()) throw ConfigError("primary task out of range");
  for (int s : secondaries) {
    if (s < 0 || s >= table.num_tasks() || s == primary) {
      throw ConfigError("invalid secondary task index " + std::to_string(s));
    }
  }
  TrialSplit out;
  out.table_tasks.push_back(primary);
  out.table_tasks.insert(out.table_tasks.end(), secondaries.begin(), secondaries.end());
  for (int t : out.table_tasks) out.task_names.push_back(table.task_names[t]);
  const int m = static_cast<int>(out.table_tasks.size());

  std::vector<std::vector<Observation>> by_task(m);
  for (int l = 0; l < m; ++l) {
    for (Eigen::Index i = 0; i < table.num_samples(); ++i) {
      const double v = table.labels(i, out.table_tasks[l]);
      if (!is_missing(v)) by_task[l].push_back({static_cast<int>(i), l, v});
    }
  }
  const auto n_primary = static_cast<int>(by_task[0].size());
  if (n_primary < 3) {
    throw DataError("primary task '" + out.task_names[0] + "' has " + std::to_string(n_primary) +
                    " labels; at least 3 are needed to split");
  }

  std::mt19937_64 rng(seed);
  auto primary_obs = by_task[0];
  detail::shuffle_with(primary_obs, rng);
  const int n_test = std::max(1, n_primary / 3);

  auto by_input = [](const Observation& a, const Observation& b) { return a.input < b.input; };
  auto make = [&](std::vector<Observation> obs) {
    std::stable_sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
      return a.task != b.task ? a.task < b.task : a.input < b.input;
    });
    return ObservationSet{table.spectra, m, std::move(obs)};
  };

  std::vector<Observation> test(primary_obs.begin(), primary_obs.begin() + n_test);
  std::vector<Observation> train_primary(primary_obs.begin() + n_test, primary_obs.end());
  std::sort(train_primary.begin(), train_primary.end(), by_input);

  std::vector<Observation> train = train_primary, inner_fit, inner_val;
  for (int l = 0; l < m; ++l) {
    std::vector<Observation> pool = l == 0 ? train_primary : by_task[l];
    if (l > 0) train.insert(train.end(), pool.begin(), pool.end());
    detail::shuffle_with(pool, rng);
    const auto n = static_cast<int>(pool.size());
    int n_val = static_cast<int>(std::lround(0.2 * n));
    if (l == 0) n_val = std::clamp(std::max(n_val, n >= 3 ? 2 : 1), 1, std::max(1, n - 1));
    if (n - n_val < 1) n_val = 0;
    inner_val.insert(inner_val.end(), pool.begin(), pool.begin() + n_val);
    inner_fit.insert(inner_fit.end(), pool.begin() + n_val, pool.end());
  }
  out.test = make(std::move(test));
  out.train = make(std::move(train));
  out.inner_train = make(std::move(inner_fit));
  out.inner_val = make(std::move(inner_val));
  return out;
}

/// All non-primary tasks in table order.
inline TrialSplit split_trial(const SpectraTable& table, int primary, std::uint64_t seed) {
  std::vector<int> secondaries;
  for (int t = 0; t < table.num_tasks(); ++t)
    if (t != primary) secondaries.push_back(t);
  return split_trial(table, primary, secondaries, seed);
}

}  // namespace mtgp
