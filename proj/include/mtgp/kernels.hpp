#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "mtgp/errors.hpp"

namespace mtgp {

/// Isotropic covariance functions. SUM is SE + NN evaluated pointwise.
enum class KernelKind { SE, NN, SUM };

inline std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::SE: return "SE";
    case KernelKind::NN: return "NN";
    case KernelKind::SUM: return "SUM";
  }
  return "?";
}

inline KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "SE" || name == "se") return KernelKind::SE;
  if (name == "NN" || name == "nn") return KernelKind::NN;
  if (name == "SUM" || name == "sum") return KernelKind::SUM;
  throw ConfigError("unknown kernel '" + std::string(name) + "' (valid: SE, NN, SUM)");
}

inline int num_hypers(KernelKind kind) { return kind == KernelKind::SUM ? 4 : 2; }

/// A covariance function and its hyperparameters in log space.
///
/// Hyperparameter order is fixed and part of the model file format:
///   SE:  [log sigma_f, log length_scale]
///   NN:  [log sigma_f, log sigma_w]
///   SUM: [SE block, NN block]
///
/// SE:  sigma_f^2 exp(-|x - x'|^2 / (2 l^2))
/// NN:  sigma_f^2 (2/pi) asin(2 sw^2 u'v / sqrt((1 + 2 sw^2 u'u)(1 + 2 sw^2 v'v)))
///      with u = (1, x), v = (1, x').
struct KernelSpec {
  KernelKind kind = KernelKind::SE;
  Eigen::VectorXd log_hypers = Eigen::VectorXd::Zero(2);

  static KernelSpec se(double amplitude, double length_scale) {
    KernelSpec s{KernelKind::SE, Eigen::VectorXd(2)};
    s.log_hypers << std::log(amplitude), std::log(length_scale);
    return s;
  }
  static KernelSpec nn(double amplitude, double weight_scale) {
    KernelSpec s{KernelKind::NN, Eigen::VectorXd(2)};
    s.log_hypers << std::log(amplitude), std::log(weight_scale);
    return s;
  }
  static KernelSpec sum(double se_amplitude, double length_scale, double nn_amplitude,
                        double weight_scale) {
    KernelSpec s{KernelKind::SUM, Eigen::VectorXd(4)};
    s.log_hypers << std::log(se_amplitude), std::log(length_scale), std::log(nn_amplitude),
        std::log(weight_scale);
    return s;
  }
  /// Unit hyperparameters for the given kind.
  static KernelSpec unit(KernelKind kind) {
    return KernelSpec{kind, Eigen::VectorXd::Zero(num_hypers(kind))};
  }

  int size() const { return static_cast<int>(log_hypers.size()); }
};

namespace detail {

inline void validate(const KernelSpec& spec) {
  if (spec.log_hypers.size() != num_hypers(spec.kind)) {
    throw ParameterError("kernel " + std::string(to_string(spec.kind)) + " expects " +
                         std::to_string(num_hypers(spec.kind)) + " hyperparameters, got " +
                         std::to_string(spec.log_hypers.size()));
  }
  if (!spec.log_hypers.allFinite()) throw ParameterError("non-finite kernel hyperparameter");
}

/// Pairwise geometry needed by every kernel kind. Dot products are of the
/// bias-augmented inputs, i.e. 1 + x'y.
struct PairStats {
  double sq_dist;
  double dot;
  double self_a;
  double self_b;
};

template <typename RowA, typename RowB>
PairStats pair_stats(const RowA& a, const RowB& b) {
  long double sq = 0.0L, dot = 1.0L, na = 1.0L, nb = 1.0L;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const long double ak = a[k], bk = b[k];
    const long double d = ak - bk;
    sq += d * d;
    dot += ak * bk;
    na += ak * ak;
    nb += bk * bk;
  }
  return {static_cast<double>(std::max(sq, 0.0L)), static_cast<double>(dot),
          static_cast<double>(na), static_cast<double>(nb)};
}

inline double se_value(const double* h, const PairStats& p) {
  const double sf2 = std::exp(2.0 * h[0]);
  const double l2 = std::exp(2.0 * h[1]);
  return sf2 * std::exp(-0.5 * p.sq_dist / l2);
}

inline double nn_arg(const double* h, const PairStats& p) {
  const double s = 2.0 * std::exp(2.0 * h[1]);
  return s * p.dot / std::sqrt((1.0 + s * p.self_a) * (1.0 + s * p.self_b));
}

inline double nn_value(const double* h, const PairStats& p) {
  const double sf2 = std::exp(2.0 * h[0]);
  const double z = std::clamp(nn_arg(h, p), -1.0, 1.0);
  return sf2 * (2.0 / std::numbers::pi) * std::asin(z);
}

inline double value(const KernelSpec& spec, const PairStats& p) {
  const double* h = spec.log_hypers.data();
  switch (spec.kind) {
    case KernelKind::SE: return se_value(h, p);
    case KernelKind::NN: return nn_value(h, p);
    case KernelKind::SUM: return se_value(h, p) + nn_value(h + 2, p);
  }
  return 0.0;
}

// Writes d k / d log-hyper for every hyperparameter into out[0..size).
inline void se_grad(const double* h, const PairStats& p, double* out) {
  const double k = se_value(h, p);
  out[0] = 2.0 * k;
  out[1] = k * p.sq_dist / std::exp(2.0 * h[1]);
}

inline void nn_grad(const double* h, const PairStats& p, double* out) {
  const double sf2 = std::exp(2.0 * h[0]);
  const double s = 2.0 * std::exp(2.0 * h[1]);
  const double z = std::clamp(nn_arg(h, p), -1.0, 1.0);
  out[0] = 2.0 * sf2 * (2.0 / std::numbers::pi) * std::asin(z);
  const double denom = std::sqrt(std::max(1.0 - z * z, 1e-300));
  const double dz = z * (2.0 - s * (p.self_a / (1.0 + s * p.self_a) +
                                    p.self_b / (1.0 + s * p.self_b)));
  out[1] = sf2 * (2.0 / std::numbers::pi) * dz / denom;
}

inline void grad(const KernelSpec& spec, const PairStats& p, double* out) {
  const double* h = spec.log_hypers.data();
  switch (spec.kind) {
    case KernelKind::SE: se_grad(h, p, out); break;
    case KernelKind::NN: nn_grad(h, p, out); break;
    case KernelKind::SUM:
      se_grad(h, p, out);
      nn_grad(h + 2, p, out + 2);
      break;
  }
}

inline void check_dims(Eigen::Index a, Eigen::Index b) {
  if (a != b) {
    throw ShapeError("input dimension mismatch: " + std::to_string(a) + " vs " +
                     std::to_string(b));
  }
  if (a < 1) throw ShapeError("inputs must have dimension >= 1");
}

}  // namespace detail

inline double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& x_prime) {
  detail::validate(spec);
  detail::check_dims(x.size(), x_prime.size());
  return detail::value(spec, detail::pair_stats(x, x_prime));
}

/// Cross-covariance matrix between the rows of `a` and the rows of `b`.
inline Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& a,
                                     const Eigen::MatrixXd& b) {
  detail::validate(spec);
  detail::check_dims(a.cols(), b.cols());
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      k(i, j) = detail::value(spec, detail::pair_stats(a.row(i), b.row(j)));
    }
  }
  return k;
}

/// Symmetric covariance matrix of the rows of `x`; computes the upper
/// triangle once and mirrors it so the result is exactly symmetric.
inline Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& x) {
  detail::validate(spec);
  detail::check_dims(x.cols(), x.cols());
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      k(i, j) = k(j, i) = detail::value(spec, detail::pair_stats(x.row(i), x.row(j)));
    }
  }
  return k;
}

/// dK/d(log-hyper) for every hyperparameter, in hyperparameter order.
inline std::vector<Eigen::MatrixXd> kernel_grad(const KernelSpec& spec,
                                                const Eigen::MatrixXd& x) {
  detail::validate(spec);
  if (x.rows() == 0) throw ShapeError("kernel_grad needs at least one input");
  detail::check_dims(x.cols(), x.cols());
  const Eigen::Index n = x.rows();
  const int p = spec.size();
  std::vector<Eigen::MatrixXd> out(p, Eigen::MatrixXd(n, n));
  double g[4];
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      detail::grad(spec, detail::pair_stats(x.row(i), x.row(j)), g);
      for (int h = 0; h < p; ++h) out[h](i, j) = out[h](j, i) = g[h];
    }
  }
  return out;
}

/// Hyperparameter-independent pairwise quantities of a point set. Fitting
/// evaluates the kernel many times on the same inputs; building this once
/// makes each evaluation O(n^2) instead of O(n^2 d).
struct InputGeometry {
  Eigen::MatrixXd sq_dist;
  Eigen::MatrixXd dot;
  Eigen::VectorXd self;

  explicit InputGeometry(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    sq_dist.resize(n, n);
    dot.resize(n, n);
    self.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i <= j; ++i) {
        const auto p = detail::pair_stats(x.row(i), x.row(j));
        sq_dist(i, j) = sq_dist(j, i) = p.sq_dist;
        dot(i, j) = dot(j, i) = p.dot;
        if (i == j) self(i) = p.self_a;
      }
    }
  }

  Eigen::Index size() const { return self.size(); }

  detail::PairStats at(Eigen::Index i, Eigen::Index j) const {
    return {sq_dist(i, j), dot(i, j), self(i), self(j)};
  }
};

/// Kernel matrix and its log-hyper gradients over a precomputed geometry.
/// `grads` may be null when only the value is needed.
inline void kernel_matrix_and_grad(const KernelSpec& spec, const InputGeometry& geo,
                                   Eigen::MatrixXd& k, std::vector<Eigen::MatrixXd>* grads) {
  detail::validate(spec);
  const Eigen::Index n = geo.size();
  const int p = spec.size();
  k.resize(n, n);
  if (grads) grads->assign(p, Eigen::MatrixXd(n, n));
  double g[4];
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      const auto stats = geo.at(i, j);
      k(i, j) = k(j, i) = detail::value(spec, stats);
      if (grads) {
        detail::grad(spec, stats, g);
        for (int h = 0; h < p; ++h) (*grads)[h](i, j) = (*grads)[h](j, i) = g[h];
      }
    }
  }
}

}  // namespace mtgp
