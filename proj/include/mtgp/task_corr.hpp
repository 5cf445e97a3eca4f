#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "mtgp/errors.hpp"

namespace mtgp {

/// Inter-task correlation matrix A = a0^2 I + B B^T.
///
/// PSD by construction. The parameterization is not identifiable (column
/// signs and rotations of B give the same A), so compare materialized
/// matrices, never raw B.
///
/// Flattened parameter order: a0, then B column-major.
struct TaskCorrMatrix {
  int num_tasks = 1;
  int rank = 0;
  double a0 = 1.0;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(1, 0);

  TaskCorrMatrix() = default;
  TaskCorrMatrix(int tasks, int k, double scale = 1.0)
      : num_tasks(tasks), rank(k), a0(scale), b(Eigen::MatrixXd::Zero(tasks, k)) {
    if (tasks < 1) throw ParameterError("task matrix needs at least one task");
    if (k < 0 || k > tasks) {
      throw ParameterError("task matrix rank " + std::to_string(k) + " outside [0, " +
                           std::to_string(tasks) + "]");
    }
  }
  TaskCorrMatrix(double scale, Eigen::MatrixXd factor)
      : TaskCorrMatrix(static_cast<int>(factor.rows()), static_cast<int>(factor.cols()), scale) {
    b = std::move(factor);
  }

  int num_params() const { return 1 + num_tasks * rank; }

  Eigen::VectorXd params() const {
    Eigen::VectorXd p(num_params());
    p[0] = a0;
    p.tail(num_tasks * rank) = Eigen::Map<const Eigen::VectorXd>(b.data(), b.size());
    return p;
  }

  void set_params(const Eigen::Ref<const Eigen::VectorXd>& p) {
    if (p.size() != num_params()) throw ParameterError("task matrix parameter count mismatch");
    a0 = p[0];
    b = Eigen::Map<const Eigen::MatrixXd>(p.data() + 1, num_tasks, rank);
  }
};

namespace detail {
inline void validate(const TaskCorrMatrix& tc) {
  if (tc.b.rows() != tc.num_tasks || tc.b.cols() != tc.rank) {
    throw ShapeError("task matrix factor is " + std::to_string(tc.b.rows()) + "x" +
                     std::to_string(tc.b.cols()) + ", expected " +
                     std::to_string(tc.num_tasks) + "x" + std::to_string(tc.rank));
  }
  if (!std::isfinite(tc.a0) || !tc.b.allFinite()) {
    throw ParameterError("non-finite task matrix parameter");
  }
}
}  // namespace detail

inline Eigen::MatrixXd materialize(const TaskCorrMatrix& tc) {
  detail::validate(tc);
  Eigen::MatrixXd a = tc.b * tc.b.transpose();
  a.diagonal().array() += tc.a0 * tc.a0;
  // Mirror so the result is exactly symmetric.
  return (0.5 * (a + a.transpose())).eval();
}

/// dA/dtheta for every flattened parameter.
inline std::vector<Eigen::MatrixXd> task_corr_grad(const TaskCorrMatrix& tc) {
  detail::validate(tc);
  const int m = tc.num_tasks;
  std::vector<Eigen::MatrixXd> out;
  out.reserve(tc.num_params());
  out.push_back(2.0 * tc.a0 * Eigen::MatrixXd::Identity(m, m));
  for (int j = 0; j < tc.rank; ++j) {
    for (int r = 0; r < m; ++r) {
      // d(B B^T)/dB[r,j] = e_r b_j^T + b_j e_r^T
      Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, m);
      d.row(r) += tc.b.col(j).transpose();
      d.col(r) += tc.b.col(j);
      out.push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace mtgp
