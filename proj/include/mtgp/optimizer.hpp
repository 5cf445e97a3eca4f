#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtgp/errors.hpp"

namespace mtgp {

struct OptimizerSettings {
  int num_restarts = 5;
  int max_iterations = 200;
  double gradient_tolerance = 1e-5;
  double step_tolerance = 1e-9;
  std::uint64_t seed = 0;
  int memory = 10;

  void validate() const {
    if (num_restarts < 1) throw ConfigError("num_restarts must be >= 1");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (!(gradient_tolerance > 0.0) || !(step_tolerance > 0.0)) {
      throw ConfigError("optimizer tolerances must be > 0");
    }
    if (memory < 1) throw ConfigError("L-BFGS memory must be >= 1");
  }
};

/// Value-and-gradient objective. Writes the gradient into its second
/// argument and returns the value. May throw mtgp::Error or return a
/// non-finite value; both count as +inf during line search.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

enum class Termination { Gradient, Step, MaxIterations, LineSearchFailure };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Gradient: return "gradient";
    case Termination::Step: return "step";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::LineSearchFailure: return "line_search_failure";
  }
  return "?";
}

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  double f_initial = std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  double gradient_norm = 0.0;  // infinity norm at x
  Termination reason = Termination::MaxIterations;
  std::vector<double> history;  // accepted objective values, starting at f(x0)
};

namespace detail {

struct LinePoint {
  double step = 0.0;
  double f = 0.0;
  double slope = 0.0;
  Eigen::VectorXd g;
};

// Minimizer of the cubic through (a, fa, da), (b, fb, db); nullopt when the
// interpolant has no real minimizer.
inline std::optional<double> cubic_minimizer(const LinePoint& a, const LinePoint& b) {
  const double d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.step - b.step);
  const double disc = d1 * d1 - a.slope * b.slope;
  if (!(disc >= 0.0) || !std::isfinite(disc)) return std::nullopt;
  const double d2 = std::copysign(std::sqrt(disc), b.step - a.step);
  const double denom = b.slope - a.slope + 2.0 * d2;
  if (denom == 0.0) return std::nullopt;
  const double t = b.step - (b.step - a.step) * (b.slope + d2 - d1) / denom;
  if (!std::isfinite(t)) return std::nullopt;
  return t;
}

/// Line search enforcing the strong Wolfe conditions, with cubic
/// interpolation inside the bracketing phase.
class WolfeLineSearch {
 public:
  static constexpr double kC1 = 1e-4;
  static constexpr double kC2 = 0.9;
  static constexpr int kMaxEvaluations = 40;

  WolfeLineSearch(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& dir,
                  double f0, double slope0, int& evals)
      : f_(f), x_(x), dir_(dir), f0_(f0), slope0_(slope0), evals_(evals) {}

  /// Returns the accepted point, or nullopt when no sufficient decrease was found.
  std::optional<LinePoint> search(double initial_step) {
    LinePoint prev{0.0, f0_, slope0_, {}};
    double step = initial_step;
    for (int i = 0; i < kMaxEvaluations; ++i) {
      LinePoint cur = eval(step);
      if (cur.f > f0_ + kC1 * step * slope0_ || (i > 0 && cur.f >= prev.f)) {
        return zoom(prev, cur);
      }
      if (std::abs(cur.slope) <= -kC2 * slope0_) return cur;
      if (cur.slope >= 0.0) return zoom(cur, prev);
      prev = std::move(cur);
      step *= 2.0;
    }
    return prev.step > 0.0 ? std::optional<LinePoint>(prev) : std::nullopt;
  }

 private:
  LinePoint eval(double step) {
    ++evals_;
    LinePoint p;
    p.step = step;
    const Eigen::VectorXd xs = x_ + step * dir_;
    try {
      p.f = f_(xs, p.g);
    } catch (const Error&) {
      p.f = std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(p.f) || p.g.size() != xs.size() || !p.g.allFinite()) {
      p.f = std::numeric_limits<double>::infinity();
      p.slope = std::numeric_limits<double>::quiet_NaN();
    } else {
      p.slope = p.g.dot(dir_);
    }
    return p;
  }

  std::optional<LinePoint> zoom(LinePoint lo, LinePoint hi) {
    for (int i = 0; i < kMaxEvaluations; ++i) {
      const double width = hi.step - lo.step;
      if (std::abs(width) <= 1e-14 * std::max(1.0, std::abs(lo.step))) break;
      double step = lo.step + 0.5 * width;
      if (std::isfinite(hi.f) && std::isfinite(hi.slope)) {
        if (auto t = cubic_minimizer(lo, hi)) {
          const double a = std::min(lo.step, hi.step), b = std::max(lo.step, hi.step);
          const double margin = 0.1 * (b - a);
          if (*t >= a + margin && *t <= b - margin) step = *t;
        }
      }
      LinePoint cur = eval(step);
      if (cur.f > f0_ + kC1 * step * slope0_ || cur.f >= lo.f) {
        hi = std::move(cur);
        continue;
      }
      if (std::abs(cur.slope) <= -kC2 * slope0_) return cur;
      if (cur.slope * (hi.step - lo.step) >= 0.0) hi = lo;
      lo = std::move(cur);
    }
    // Bracket collapsed: fall back to the best point with sufficient decrease.
    if (lo.step > 0.0) return lo;
    return std::nullopt;
  }

  const Objective& f_;
  const Eigen::VectorXd& x_;
  const Eigen::VectorXd& dir_;
  double f0_;
  double slope0_;
  int& evals_;
};

}  // namespace detail

/// Limited-memory BFGS with a strong Wolfe line search.
///
/// Terminates on gradient infinity-norm, step infinity-norm or the iteration
/// cap. A line search that cannot make progress ends the run with
/// Termination::LineSearchFailure and the best point so far.
inline MinimizeResult minimize(const Objective& objective, const Eigen::VectorXd& x0,
                               const OptimizerSettings& settings) {
  settings.validate();
  MinimizeResult r;
  r.x = x0;
  try {
    r.f = objective(r.x, r.gradient);
  } catch (const Error& e) {
    throw ParameterError(std::string("objective failed at the initial point: ") + e.what());
  }
  ++r.evaluations;
  if (!std::isfinite(r.f) || r.gradient.size() != x0.size() || !r.gradient.allFinite()) {
    throw ParameterError("objective is not finite at the initial point");
  }
  r.f_initial = r.f;
  r.history.push_back(r.f);
  r.gradient_norm = r.gradient.lpNorm<Eigen::Infinity>();
  if (r.gradient_norm < settings.gradient_tolerance) {
    r.reason = Termination::Gradient;
    return r;
  }

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  r.reason = Termination::MaxIterations;
  while (r.iterations < settings.max_iterations) {
    // Two-loop recursion for d = -H g.
    Eigen::VectorXd q = r.gradient;
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m);
    for (std::size_t k = m; k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha[k] * y_hist[k];
    }
    if (m > 0) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alpha[k] - beta) * s_hist[k];
    }
    Eigen::VectorXd dir = -q;
    double slope = r.gradient.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -r.gradient;
      slope = -r.gradient.squaredNorm();
    }
    const double initial_step =
        s_hist.empty() ? std::min(1.0, 1.0 / dir.lpNorm<Eigen::Infinity>()) : 1.0;

    detail::WolfeLineSearch ls(objective, r.x, dir, r.f, slope, r.evaluations);
    auto point = ls.search(initial_step);
    if (!point) {
      if (!s_hist.empty()) {
        // Retry once along steepest descent with fresh curvature memory.
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        continue;
      }
      r.reason = Termination::LineSearchFailure;
      break;
    }

    const Eigen::VectorXd s = point->step * dir;
    const Eigen::VectorXd y = point->g - r.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == settings.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
    }
    r.x += s;
    r.f = point->f;
    r.gradient = std::move(point->g);
    r.gradient_norm = r.gradient.lpNorm<Eigen::Infinity>();
    r.history.push_back(r.f);
    ++r.iterations;

    if (r.gradient_norm < settings.gradient_tolerance) {
      r.reason = Termination::Gradient;
      break;
    }
    if (s.lpNorm<Eigen::Infinity>() < settings.step_tolerance) {
      r.reason = Termination::Step;
      break;
    }
  }
  return r;
}

/// Produces an initial point from a seed; must be deterministic in the seed.
using InitSampler = std::function<Eigen::VectorXd(std::uint64_t seed)>;

struct MultiRestartResult {
  MinimizeResult best;
  int best_restart = -1;
  std::vector<std::optional<MinimizeResult>> runs;  // nullopt where a restart failed
  std::vector<std::string> errors;                  // one per restart, empty on success
};

/// Runs `settings.num_restarts` minimizations from sampler(seed + r) and
/// keeps the lowest objective (first one wins ties).
inline MultiRestartResult multi_restart_minimize(const Objective& objective,
                                                 const InitSampler& sampler,
                                                 const OptimizerSettings& settings) {
  settings.validate();
  MultiRestartResult out;
  out.runs.resize(settings.num_restarts);
  out.errors.resize(settings.num_restarts);
  for (int r = 0; r < settings.num_restarts; ++r) {
    try {
      out.runs[r] = minimize(objective, sampler(settings.seed + static_cast<std::uint64_t>(r)),
                             settings);
    } catch (const Error& e) {
      out.errors[r] = e.what();
      continue;
    }
    if (out.best_restart < 0 || out.runs[r]->f < out.best.f) {
      out.best = *out.runs[r];
      out.best_restart = r;
    }
  }
  if (out.best_restart < 0) {
    std::string msg = "all " + std::to_string(settings.num_restarts) + " restarts failed:";
    for (int r = 0; r < settings.num_restarts; ++r) {
      msg += "\n  restart " + std::to_string(r) + ": " + out.errors[r];
    }
    throw FitError(msg);
  }
  return out;
}

}  // namespace mtgp
