#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mtgp/errors.hpp"

namespace mtgp {

/// One observed (input, task) pair.
struct Observation {
  int input = 0;
  int task = 0;
  double value = 0.0;

  bool operator==(const Observation&) const = default;
};

/// Inputs plus the observed (input, task, target) triples. The full
/// input x task grid need not be present; missing pairs are simply absent.
struct ObservationSet {
  Eigen::MatrixXd x;  // one input per row
  int num_tasks = 1;
  std::vector<Observation> obs;

  std::size_t size() const { return obs.size(); }
  bool empty() const { return obs.empty(); }

  void validate() const {
    if (num_tasks < 1) throw ShapeError("observation set needs at least one task");
    std::set<std::pair<int, int>> seen;
    for (const auto& o : obs) {
      if (o.input < 0 || o.input >= x.rows()) {
        throw ShapeError("observation input index " + std::to_string(o.input) +
                         " out of range [0, " + std::to_string(x.rows()) + ")");
      }
      if (o.task < 0 || o.task >= num_tasks) {
        throw ShapeError("observation task index " + std::to_string(o.task) +
                         " out of range [0, " + std::to_string(num_tasks) + ")");
      }
      if (!seen.emplace(o.input, o.task).second) {
        throw DataError("duplicate observation for input " + std::to_string(o.input) +
                        ", task " + std::to_string(o.task));
      }
    }
  }

  Eigen::VectorXd targets() const {
    Eigen::VectorXd y(obs.size());
    for (std::size_t p = 0; p < obs.size(); ++p) y[p] = obs[p].value;
    return y;
  }

  std::vector<int> count_per_task() const {
    std::vector<int> c(num_tasks, 0);
    for (const auto& o : obs) ++c[o.task];
    return c;
  }

  /// Observations of one task, in order.
  ObservationSet only_task(int task) const {
    ObservationSet out{x, num_tasks, {}};
    for (const auto& o : obs)
      if (o.task == task) out.obs.push_back(o);
    return out;
  }
};

/// FNV-1a over the raw bytes of inputs and observations; stored in model
/// files to detect training-data drift.
inline std::uint64_t checksum(const ObservationSet& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ULL;
    }
  };
  const std::int64_t dims[3] = {data.x.rows(), data.x.cols(), data.num_tasks};
  mix(dims, sizeof dims);
  mix(data.x.data(), sizeof(double) * static_cast<std::size_t>(data.x.size()));
  for (const auto& o : data.obs) {
    mix(&o.input, sizeof o.input);
    mix(&o.task, sizeof o.task);
    mix(&o.value, sizeof o.value);
  }
  return h;
}

}  // namespace mtgp
