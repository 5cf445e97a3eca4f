#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtgp/errors.hpp"
#include "mtgp/kernels.hpp"
#include "mtgp/observations.hpp"
#include "mtgp/task_corr.hpp"

namespace mtgp {

/// One Kronecker term A (x) K of the joint covariance.
struct KroneckerTerm {
  TaskCorrMatrix task;
  KernelSpec kernel;
};

/// The generalized multitask model:
///
///   cov(y_il, y_jm) = sum_t A_t[l,m] K_t(x_i, x_j)
///                     + [i = j] (N[l,m] + [l = m] sigma_l^2)
///
/// where N is the optional structured-noise matrix. Single-task GP,
/// shared-covariance, structured-noise and composite-covariance models are
/// all instances (see the preset helpers below).
///
/// Flattened parameter order: for each term, the task matrix parameters
/// followed by the kernel log-hypers; then the noise matrix parameters (when
/// present); then the per-task log noise variances.
struct ModelConfig {
  std::vector<KroneckerTerm> terms;
  std::optional<TaskCorrMatrix> noise;
  Eigen::VectorXd task_noise_log;

  int num_tasks() const { return static_cast<int>(task_noise_log.size()); }

  int num_params() const {
    int n = 0;
    for (const auto& t : terms) n += t.task.num_params() + t.kernel.size();
    if (noise) n += noise->num_params();
    return n + num_tasks();
  }

  Eigen::VectorXd params() const {
    Eigen::VectorXd p(num_params());
    int at = 0;
    for (const auto& t : terms) {
      const int nt = t.task.num_params();
      p.segment(at, nt) = t.task.params();
      at += nt;
      p.segment(at, t.kernel.size()) = t.kernel.log_hypers;
      at += t.kernel.size();
    }
    if (noise) {
      p.segment(at, noise->num_params()) = noise->params();
      at += noise->num_params();
    }
    p.segment(at, num_tasks()) = task_noise_log;
    return p;
  }

  void set_params(const Eigen::Ref<const Eigen::VectorXd>& p) {
    if (p.size() != num_params()) {
      throw ParameterError("expected " + std::to_string(num_params()) + " parameters, got " +
                           std::to_string(p.size()));
    }
    int at = 0;
    for (auto& t : terms) {
      const int nt = t.task.num_params();
      t.task.set_params(p.segment(at, nt));
      at += nt;
      t.kernel.log_hypers = p.segment(at, t.kernel.size());
      at += t.kernel.size();
    }
    if (noise) {
      noise->set_params(p.segment(at, noise->num_params()));
      at += noise->num_params();
    }
    task_noise_log = p.segment(at, num_tasks());
  }

  /// Index of the first task_noise_log entry in the flattened vector.
  int task_noise_offset() const { return num_params() - num_tasks(); }

  void validate() const {
    if (terms.empty()) throw ConfigError("model needs at least one covariance term");
    const int m = num_tasks();
    if (m < 1) throw ConfigError("model needs at least one task");
    for (const auto& t : terms) {
      if (t.task.num_tasks != m) {
        throw ShapeError("task matrix is " + std::to_string(t.task.num_tasks) +
                         "x" + std::to_string(t.task.num_tasks) + " but the model has " +
                         std::to_string(m) + " tasks");
      }
    }
    if (noise && noise->num_tasks != m) throw ShapeError("noise matrix size mismatch");
    if (!task_noise_log.allFinite()) throw ParameterError("non-finite task noise");
  }
};

// ----------------------------------------------------------------- presets

enum class Method { GP, SC, SN, COMP };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::GP: return "GP";
    case Method::SC: return "MTGP-SC";
    case Method::SN: return "MTGP-SN";
    case Method::COMP: return "MTGP-COMP";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "gp" || s == "GP") return Method::GP;
  if (s == "sc" || s == "MTGP-SC" || s == "mtgp-sc") return Method::SC;
  if (s == "sn" || s == "MTGP-SN" || s == "mtgp-sn") return Method::SN;
  if (s == "comp" || s == "MTGP-COMP" || s == "mtgp-comp") return Method::COMP;
  throw ConfigError("unknown method '" + std::string(s) + "' (valid: gp, sc, sn, comp)");
}

/// Number of kernels a method takes.
inline int num_kernels(Method m) { return m == Method::COMP ? 2 : 1; }

/// Number of task matrices whose rank is selectable.
inline int num_rank_slots(Method m) {
  switch (m) {
    case Method::GP: return 0;
    case Method::SC: return 1;
    case Method::SN: return 2;
    case Method::COMP: return 2;
  }
  return 0;
}

inline ModelConfig make_gp(const KernelSpec& kernel, double noise_var = 0.1) {
  ModelConfig c;
  c.terms.push_back({TaskCorrMatrix(1, 0, 1.0), kernel});
  c.task_noise_log = Eigen::VectorXd::Constant(1, std::log(noise_var));
  return c;
}

inline ModelConfig make_sc(int tasks, const KernelSpec& kernel, int rank,
                           double noise_var = 0.1) {
  ModelConfig c;
  c.terms.push_back({TaskCorrMatrix(tasks, rank, 1.0), kernel});
  c.task_noise_log = Eigen::VectorXd::Constant(tasks, std::log(noise_var));
  return c;
}

inline ModelConfig make_sn(int tasks, const KernelSpec& kernel, int rank, int noise_rank,
                           double noise_var = 0.1) {
  ModelConfig c = make_sc(tasks, kernel, rank, noise_var);
  c.noise = TaskCorrMatrix(tasks, noise_rank, 0.0);
  return c;
}

inline ModelConfig make_comp(int tasks, const KernelSpec& first, const KernelSpec& second,
                             int rank_first, int rank_second, double noise_var = 0.1) {
  ModelConfig c;
  c.terms.push_back({TaskCorrMatrix(tasks, rank_first, 1.0), first});
  c.terms.push_back({TaskCorrMatrix(tasks, rank_second, 1.0), second});
  c.task_noise_log = Eigen::VectorXd::Constant(tasks, std::log(noise_var));
  return c;
}

/// Builds the structure of a method preset. `ranks` holds one entry per
/// rank slot (see num_rank_slots); for SN the second entry is the noise
/// matrix rank.
inline ModelConfig make_preset(Method method, int tasks, const std::vector<KernelSpec>& kernels,
                               const std::vector<int>& ranks) {
  if (static_cast<int>(kernels.size()) != num_kernels(method)) {
    throw ConfigError(std::string(to_string(method)) + " takes " +
                      std::to_string(num_kernels(method)) + " kernel(s)");
  }
  if (static_cast<int>(ranks.size()) != num_rank_slots(method)) {
    throw ConfigError(std::string(to_string(method)) + " takes " +
                      std::to_string(num_rank_slots(method)) + " rank(s)");
  }
  switch (method) {
    case Method::GP:
      if (tasks != 1) throw ConfigError("GP is a single-task model");
      return make_gp(kernels[0]);
    case Method::SC: return make_sc(tasks, kernels[0], ranks[0]);
    case Method::SN: return make_sn(tasks, kernels[0], ranks[0], ranks[1]);
    case Method::COMP: return make_comp(tasks, kernels[0], kernels[1], ranks[0], ranks[1]);
  }
  throw ConfigError("unknown method");
}

// ------------------------------------------------------ factorization

namespace detail {

inline long first_bad_pivot(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) return static_cast<long>(j);
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return -1;
}

}  // namespace detail

/// Cholesky factor of a covariance matrix with the bounded jitter policy:
/// plain, then +1e-8 on the diagonal, then +1e-6, then give up.
struct CovarianceFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;

  explicit CovarianceFactor(const Eigen::MatrixXd& sigma) {
    if (!sigma.allFinite()) throw NumericalError("covariance has non-finite entries", -1);
    for (double j : {0.0, 1e-8, 1e-6}) {
      jitter = j;
      if (j == 0.0) {
        llt.compute(sigma);
      } else {
        Eigen::MatrixXd s = sigma;
        s.diagonal().array() += j;
        llt.compute(s);
      }
      if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) return;
    }
    Eigen::MatrixXd s = sigma;
    s.diagonal().array() += 1e-6;
    const long pivot = detail::first_bad_pivot(s);
    throw NumericalError("covariance not positive definite (pivot " + std::to_string(pivot) +
                             ")",
                         pivot);
  }

  double log_det() const {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }
};

// ------------------------------------------------------- likelihood

/// A dataset prepared for repeated likelihood evaluation: referenced inputs
/// are compacted and their pairwise geometry computed once.
class LikelihoodProblem {
 public:
  explicit LikelihoodProblem(ObservationSet data) : data_(std::move(data)), geo_(compact()) {
    y_ = data_.targets();
  }

  const ObservationSet& data() const { return data_; }
  const Eigen::VectorXd& y() const { return y_; }
  std::size_t size() const { return data_.obs.size(); }
  /// Compact input index of observation p.
  int input_of(std::size_t p) const { return local_[p]; }
  /// Rows of the original input matrix referenced by the compact indices.
  const std::vector<int>& used_inputs() const { return used_; }
  const Eigen::MatrixXd& used_x() const { return used_x_; }

  void check(const ModelConfig& config) const {
    config.validate();
    if (config.num_tasks() != data_.num_tasks) {
      throw ShapeError("model has " + std::to_string(config.num_tasks()) +
                       " tasks but data has " + std::to_string(data_.num_tasks));
    }
    if (data_.obs.empty()) throw DataError("no observations");
  }

  /// Joint covariance over the observed pairs. Kernel matrices (and their
  /// gradients when requested) are returned through the optional outputs.
  Eigen::MatrixXd sigma(const ModelConfig& config, std::vector<Eigen::MatrixXd>* kernels = nullptr,
                        std::vector<std::vector<Eigen::MatrixXd>>* kernel_grads = nullptr) const {
    check(config);
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    if (kernels) kernels->resize(config.terms.size());
    if (kernel_grads) kernel_grads->resize(config.terms.size());
    Eigen::MatrixXd k;
    for (std::size_t t = 0; t < config.terms.size(); ++t) {
      const auto& term = config.terms[t];
      kernel_matrix_and_grad(term.kernel, geo_, k,
                             kernel_grads ? &(*kernel_grads)[t] : nullptr);
      const Eigen::MatrixXd a = materialize(term.task);
      for (Eigen::Index q = 0; q < n; ++q) {
        const auto& oq = data_.obs[q];
        for (Eigen::Index p = 0; p < n; ++p) {
          const auto& op = data_.obs[p];
          s(p, q) += a(op.task, oq.task) * k(local_[p], local_[q]);
        }
      }
      if (kernels) (*kernels)[t] = k;
    }
    const Eigen::MatrixXd noise =
        config.noise ? materialize(*config.noise)
                     : Eigen::MatrixXd::Zero(config.num_tasks(), config.num_tasks());
    for (Eigen::Index q = 0; q < n; ++q) {
      for (Eigen::Index p = 0; p < n; ++p) {
        if (local_[p] != local_[q]) continue;
        const int l = data_.obs[p].task, m = data_.obs[q].task;
        s(p, q) += noise(l, m);
        if (l == m) s(p, q) += std::exp(config.task_noise_log[l]);
      }
    }
    return s;
  }

  double nlml(const ModelConfig& config) const {
    const CovarianceFactor f(sigma(config));
    const Eigen::VectorXd alpha = f.llt.solve(y_);
    return 0.5 * y_.dot(alpha) + 0.5 * f.log_det() +
           0.5 * static_cast<double>(size()) * std::log(2.0 * std::numbers::pi);
  }

  /// NLML and its gradient in the flattened parameter order, using
  /// dNLML/dtheta = 1/2 tr((Sigma^-1 - alpha alpha^T) dSigma/dtheta).
  double nlml_and_gradient(const ModelConfig& config, Eigen::VectorXd& grad) const {
    std::vector<Eigen::MatrixXd> kernels;
    std::vector<std::vector<Eigen::MatrixXd>> kgrads;
    const CovarianceFactor f(sigma(config, &kernels, &kgrads));
    const auto n = static_cast<Eigen::Index>(size());
    const Eigen::VectorXd alpha = f.llt.solve(y_);
    const double value = 0.5 * y_.dot(alpha) + 0.5 * f.log_det() +
                         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    Eigen::MatrixXd w = f.llt.solve(Eigen::MatrixXd::Identity(n, n));
    w.noalias() -= alpha * alpha.transpose();

    const int m = config.num_tasks();
    const auto n_in = static_cast<Eigen::Index>(used_.size());
    grad.resize(config.num_params());
    int at = 0;
    for (std::size_t t = 0; t < config.terms.size(); ++t) {
      const auto& term = config.terms[t];
      const Eigen::MatrixXd a = materialize(term.task);
      // task_w[l,m]  = sum over pairs with tasks (l,m) of W * K
      // input_w[i,j] = sum over pairs with inputs (i,j) of W * A
      Eigen::MatrixXd task_w = Eigen::MatrixXd::Zero(m, m);
      Eigen::MatrixXd input_w = Eigen::MatrixXd::Zero(n_in, n_in);
      for (Eigen::Index q = 0; q < n; ++q) {
        const int lq = data_.obs[q].task, iq = local_[q];
        for (Eigen::Index p = 0; p < n; ++p) {
          const int lp = data_.obs[p].task, ip = local_[p];
          task_w(lp, lq) += w(p, q) * kernels[t](ip, iq);
          input_w(ip, iq) += w(p, q) * a(lp, lq);
        }
      }
      for (const auto& da : task_corr_grad(term.task)) {
        grad[at++] = 0.5 * (da.array() * task_w.array()).sum();
      }
      for (const auto& dk : kgrads[t]) {
        grad[at++] = 0.5 * (dk.array() * input_w.array()).sum();
      }
    }
    if (config.noise) {
      Eigen::MatrixXd noise_w = Eigen::MatrixXd::Zero(m, m);
      for (Eigen::Index q = 0; q < n; ++q) {
        for (Eigen::Index p = 0; p < n; ++p) {
          if (local_[p] == local_[q]) noise_w(data_.obs[p].task, data_.obs[q].task) += w(p, q);
        }
      }
      for (const auto& dn : task_corr_grad(*config.noise)) {
        grad[at++] = 0.5 * (dn.array() * noise_w.array()).sum();
      }
    }
    Eigen::VectorXd diag_w = Eigen::VectorXd::Zero(m);
    for (Eigen::Index p = 0; p < n; ++p) diag_w[data_.obs[p].task] += w(p, p);
    for (int l = 0; l < m; ++l) {
      grad[at++] = 0.5 * std::exp(config.task_noise_log[l]) * diag_w[l];
    }
    return value;
  }

 private:
  Eigen::MatrixXd compact() {
    data_.validate();
    std::vector<int> map(static_cast<std::size_t>(data_.x.rows()), -1);
    local_.reserve(data_.obs.size());
    for (const auto& o : data_.obs) {
      if (map[o.input] < 0) {
        map[o.input] = static_cast<int>(used_.size());
        used_.push_back(o.input);
      }
      local_.push_back(map[o.input]);
    }
    used_x_.resize(static_cast<Eigen::Index>(used_.size()), data_.x.cols());
    for (std::size_t r = 0; r < used_.size(); ++r) used_x_.row(r) = data_.x.row(used_[r]);
    return used_x_;
  }

  ObservationSet data_;
  std::vector<int> used_;
  std::vector<int> local_;
  Eigen::MatrixXd used_x_;
  InputGeometry geo_;
  Eigen::VectorXd y_;
};

inline Eigen::MatrixXd assemble_sigma(const ModelConfig& config, const ObservationSet& data) {
  return LikelihoodProblem(data).sigma(config);
}

inline double negative_log_marginal_likelihood(const ModelConfig& config,
                                               const ObservationSet& data) {
  return LikelihoodProblem(data).nlml(config);
}

inline Eigen::VectorXd nlml_gradient(const ModelConfig& config, const ObservationSet& data) {
  Eigen::VectorXd g;
  LikelihoodProblem(data).nlml_and_gradient(config, g);
  return g;
}

// ------------------------------------------------------- prediction

/// A model conditioned on its training observations. Immutable; safe to
/// share between threads for prediction.
class FittedModel {
 public:
  FittedModel(ModelConfig config, ObservationSet training)
      : config_(std::move(config)),
        problem_(std::move(training)),
        factor_(problem_.sigma(config_)),
        alpha_(factor_.llt.solve(problem_.y())) {
    for (const auto& t : config_.terms) task_mats_.push_back(materialize(t.task));
  }

  const ModelConfig& config() const { return config_; }
  const ObservationSet& training() const { return problem_.data(); }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  double jitter() const { return factor_.jitter; }
  int num_tasks() const { return config_.num_tasks(); }

  double nlml() const {
    const auto& y = problem_.y();
    return 0.5 * y.dot(alpha_) + 0.5 * factor_.log_det() +
           0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
  }

  /// Latent predictive mean for `task` at each row of `xs`.
  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& xs, int task) const {
    check_query(xs, task);
    Eigen::VectorXd out(xs.rows());
    Eigen::VectorXd kx;
    for (Eigen::Index r = 0; r < xs.rows(); ++r) {
      cross_covariance(xs.row(r), task, kx, nullptr);
      out[r] = kx.dot(alpha_);
    }
    return out;
  }

  /// Latent predictive variance (no observation noise), clamped at zero.
  Eigen::VectorXd predict_variance(const Eigen::MatrixXd& xs, int task) const {
    check_query(xs, task);
    Eigen::VectorXd out(xs.rows());
    Eigen::VectorXd kx;
    for (Eigen::Index r = 0; r < xs.rows(); ++r) {
      double prior = 0.0;
      cross_covariance(xs.row(r), task, kx, &prior);
      const Eigen::VectorXd v = factor_.llt.matrixL().solve(kx);
      out[r] = std::max(prior - v.squaredNorm(), 0.0);
    }
    return out;
  }

 private:
  void check_query(const Eigen::MatrixXd& xs, int task) const {
    if (xs.cols() != problem_.data().x.cols()) {
      throw ShapeError("query inputs have " + std::to_string(xs.cols()) +
                       " columns, model expects " + std::to_string(problem_.data().x.cols()));
    }
    if (task < 0 || task >= num_tasks()) {
      throw ShapeError("task " + std::to_string(task) + " out of range [0, " +
                       std::to_string(num_tasks()) + ")");
    }
  }

  template <typename Row>
  void cross_covariance(const Row& x, int task, Eigen::VectorXd& kx, double* prior) const {
    const auto& ux = problem_.used_x();
    const auto n_in = ux.rows();
    const auto n = static_cast<Eigen::Index>(problem_.size());
    kx.setZero(n);
    std::vector<detail::PairStats> stats(static_cast<std::size_t>(n_in));
    for (Eigen::Index i = 0; i < n_in; ++i) stats[i] = detail::pair_stats(x, ux.row(i));
    const auto self = detail::pair_stats(x, x);
    if (prior) *prior = 0.0;
    Eigen::VectorXd krow(n_in);
    for (std::size_t t = 0; t < config_.terms.size(); ++t) {
      const auto& spec = config_.terms[t].kernel;
      for (Eigen::Index i = 0; i < n_in; ++i) krow[i] = detail::value(spec, stats[i]);
      const auto& a = task_mats_[t];
      for (Eigen::Index p = 0; p < n; ++p) {
        kx[p] += a(task, problem_.data().obs[p].task) * krow[problem_.input_of(p)];
      }
      if (prior) *prior += a(task, task) * detail::value(spec, self);
    }
  }

  ModelConfig config_;
  LikelihoodProblem problem_;
  CovarianceFactor factor_;
  Eigen::VectorXd alpha_;
  std::vector<Eigen::MatrixXd> task_mats_;
};

inline Eigen::VectorXd predict_mean(const FittedModel& model, const Eigen::MatrixXd& xs,
                                    int task) {
  return model.predict_mean(xs, task);
}

inline Eigen::VectorXd predict_variance(const FittedModel& model, const Eigen::MatrixXd& xs,
                                        int task) {
  return model.predict_variance(xs, task);
}

}  // namespace mtgp
