#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtgp/data/split.hpp"
#include "mtgp/fit.hpp"
#include "mtgp/model.hpp"
#include "mtgp/parallel.hpp"

namespace mtgp {

/// Coefficient of determination 1 - SS_res / SS_tot.
inline double r_squared(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size()) throw ShapeError("r_squared: length mismatch");
  if (y_true.size() < 2) throw DataError("r_squared needs at least two values");
  const double mean = y_true.mean();
  const double ss_tot = (y_true.array() - mean).square().sum();
  if (!(ss_tot > 0.0)) throw DataError("r_squared is undefined for constant targets");
  return 1.0 - (y_true - y_pred).squaredNorm() / ss_tot;
}

/// Per-task affine standardization fitted on training observations.
struct TargetScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static TargetScaler identity(int tasks) {
    return {Eigen::VectorXd::Zero(tasks), Eigen::VectorXd::Ones(tasks)};
  }

  static TargetScaler fit(const ObservationSet& data) {
    const int m = data.num_tasks;
    TargetScaler s{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Ones(m)};
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(m), sq = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(m);
    for (const auto& o : data.obs) {
      sum[o.task] += o.value;
      count[o.task] += 1.0;
    }
    for (int l = 0; l < m; ++l)
      if (count[l] > 0) s.mean[l] = sum[l] / count[l];
    for (const auto& o : data.obs) sq[o.task] += (o.value - s.mean[o.task]) * (o.value - s.mean[o.task]);
    for (int l = 0; l < m; ++l) {
      const double sd = count[l] > 1 ? std::sqrt(sq[l] / count[l]) : 0.0;
      s.scale[l] = sd > 0.0 ? sd : 1.0;
    }
    return s;
  }

  ObservationSet apply(ObservationSet data) const {
    for (auto& o : data.obs) o.value = (o.value - mean[o.task]) / scale[o.task];
    return data;
  }
  double invert(double v, int task) const { return v * scale[task] + mean[task]; }
};

/// A method preset plus its kernel choice, e.g. MTGP-COMP (SE, NN).
struct MethodSpec {
  Method method = Method::GP;
  std::vector<KernelKind> kernels{KernelKind::SE};

  std::string label() const {
    std::string s = std::string(to_string(method)) + " (";
    for (std::size_t k = 0; k < kernels.size(); ++k) {
      s += (k ? ", " : "") + std::string(to_string(kernels[k]));
    }
    return s + ")";
  }

  /// Short identifier such as "gp-se" or "comp-se-nn".
  std::string id() const {
    std::string s;
    switch (method) {
      case Method::GP: s = "gp"; break;
      case Method::SC: s = "sc"; break;
      case Method::SN: s = "sn"; break;
      case Method::COMP: s = "comp"; break;
    }
    for (auto k : kernels) {
      std::string name(to_string(k));
      std::transform(name.begin(), name.end(), name.begin(), ::tolower);
      s += "-" + name;
    }
    return s;
  }

  /// Parses "gp-se", "sc-sum", "sn-nn", "comp-se-nn"; "comp" alone means
  /// SE + NN.
  static MethodSpec parse(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, '-');) parts.push_back(p);
    if (parts.empty()) throw ConfigError("empty method identifier");
    MethodSpec spec;
    spec.method = parse_method(parts[0]);
    spec.kernels.clear();
    for (std::size_t i = 1; i < parts.size(); ++i) spec.kernels.push_back(parse_kernel_kind(parts[i]));
    if (spec.kernels.empty()) {
      spec.kernels = spec.method == Method::COMP ? std::vector{KernelKind::SE, KernelKind::NN}
                                                 : std::vector{KernelKind::SE};
    }
    if (static_cast<int>(spec.kernels.size()) != num_kernels(spec.method)) {
      throw ConfigError("method '" + text + "' needs " + std::to_string(num_kernels(spec.method)) +
                        " kernel(s)");
    }
    return spec;
  }

  std::vector<KernelSpec> kernel_specs() const {
    std::vector<KernelSpec> out;
    for (auto k : kernels) out.push_back(KernelSpec::unit(k));
    return out;
  }
};

struct ExperimentPlan {
  std::vector<MethodSpec> methods;
  int primary_task = 0;
  std::vector<int> secondary_tasks;  // table columns
  int num_trials = 50;
  std::vector<int> candidate_ranks;  // empty means {0, ..., M}
  OptimizerSettings optimizer;
  std::uint64_t base_seed = 0;
  /// Re-optimize hyperparameters on the full training set after selection
  /// instead of reusing the selected candidate's.
  bool refit = false;
  /// Keep going when a trial fails; failed trials are excluded from the summary.
  bool allow_partial = false;

  int num_tasks() const { return 1 + static_cast<int>(secondary_tasks.size()); }

  void validate() const {
    if (methods.empty()) throw ConfigError("plan has no methods");
    if (num_trials < 1) throw ConfigError("num_trials must be >= 1");
    for (int r : candidate_ranks) {
      if (r < 0 || r > num_tasks()) {
        throw ConfigError("candidate rank " + std::to_string(r) + " outside [0, " +
                          std::to_string(num_tasks()) + "]");
      }
    }
    optimizer.validate();
  }
};

inline constexpr std::size_t kMaxRankCombinations = 16;

/// Rank assignments tried for `method`, ordered by total rank then
/// lexicographically, so the first best-scoring entry is the Occam choice.
/// The structured-noise slot never takes rank 0 (that would be MTGP-SC).
inline std::vector<std::vector<int>> rank_candidates(Method method, int tasks,
                                                     std::vector<int> ranks) {
  const int slots = num_rank_slots(method);
  if (slots == 0) return {{}};
  if (ranks.empty()) {
    ranks.resize(static_cast<std::size_t>(tasks) + 1);
    std::iota(ranks.begin(), ranks.end(), 0);
  }
  std::sort(ranks.begin(), ranks.end());
  ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());
  std::vector<std::vector<int>> per_slot(static_cast<std::size_t>(slots), ranks);
  if (method == Method::SN) {
    auto& noise = per_slot[1];
    noise.erase(std::remove(noise.begin(), noise.end(), 0), noise.end());
    if (noise.empty()) noise.push_back(1);
  }
  std::vector<std::vector<int>> combos{{}};
  for (const auto& options : per_slot) {
    std::vector<std::vector<int>> next;
    for (const auto& c : combos)
      for (int r : options) {
        auto e = c;
        e.push_back(r);
        next.push_back(std::move(e));
      }
    combos = std::move(next);
  }
  if (combos.size() > kMaxRankCombinations) {
    std::erase_if(combos, [](const std::vector<int>& c) {
      return std::adjacent_find(c.begin(), c.end(), std::not_equal_to<>()) != c.end();
    });
    if (combos.size() > kMaxRankCombinations) combos.resize(kMaxRankCombinations);
  }
  std::stable_sort(combos.begin(), combos.end(), [](const auto& a, const auto& b) {
    const int sa = std::accumulate(a.begin(), a.end(), 0), sb = std::accumulate(b.begin(), b.end(), 0);
    return sa != sb ? sa < sb : a < b;
  });
  return combos;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of trial `trial_index`; independent of method so every method sees
/// the same split.
inline std::uint64_t trial_seed(std::uint64_t base_seed, int trial_index) {
  return splitmix64(base_seed ^ splitmix64(static_cast<std::uint64_t>(trial_index)));
}

struct CandidateScore {
  std::vector<int> ranks;
  std::optional<double> score;  // inner-validation r^2; nullopt when the fit failed
  std::string error;
};

struct TrialReport {
  int trial_index = 0;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<int> selected_ranks;
  Eigen::VectorXd parameters;
  double inner_r2 = 0.0;
  double test_r2 = 0.0;
  double wall_seconds = 0.0;
  std::vector<CandidateScore> candidates;

  nlohmann::json to_json() const {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : candidates) {
      cands.push_back({{"ranks", c.ranks},
                       {"inner_r2", c.score ? nlohmann::json(*c.score) : nlohmann::json(nullptr)},
                       {"error", c.error}});
    }
    return {{"trial", trial_index},
            {"method", method},
            {"seed", seed},
            {"selected_ranks", selected_ranks},
            {"parameters", std::vector<double>(parameters.data(), parameters.data() + parameters.size())},
            {"inner_r2", inner_r2},
            {"test_r2", test_r2},
            {"wall_seconds", wall_seconds},
            {"candidates", cands}};
  }
};

namespace detail {

/// Restricts a split observation set to the primary task as a 1-task set.
inline ObservationSet primary_only(const ObservationSet& d) {
  ObservationSet out = d.only_task(0);
  out.num_tasks = 1;
  return out;
}

inline Eigen::VectorXd predict_primary(const FittedModel& model, const TargetScaler& scaler,
                                       const ObservationSet& queries) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(queries.size()));
  for (std::size_t p = 0; p < queries.size(); ++p) {
    const auto& o = queries.obs[p];
    out[static_cast<Eigen::Index>(p)] =
        scaler.invert(model.predict_mean(queries.x.row(o.input), 0)[0], 0);
  }
  return out;
}

/// r^2 on primary observations, falling back to negative mean squared error
/// when r^2 is undefined (fewer than two values or constant targets).
inline double selection_score(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred) {
  const bool defined = truth.size() >= 2 && (truth.array() - truth.mean()).abs().maxCoeff() > 0.0;
  if (defined) return r_squared(truth, pred);
  return -(truth - pred).squaredNorm() / static_cast<double>(std::max<Eigen::Index>(truth.size(), 1));
}

}  // namespace detail

/// One evaluation trial of one method: candidate ranks are fit on the inner
/// training part and scored on the inner validation part; the winner's
/// hyperparameters are then conditioned on the full training set (or
/// re-optimized there with plan.refit) and scored on the held-out primary
/// labels.
inline TrialReport run_trial(const ExperimentPlan& plan, const SpectraTable& table,
                             const MethodSpec& method, int trial_index) {
  const auto start = std::chrono::steady_clock::now();
  TrialReport report;
  report.trial_index = trial_index;
  report.method = method.label();
  report.seed = trial_seed(plan.base_seed, trial_index);

  const TrialSplit split = split_trial(table, plan.primary_task, plan.secondary_tasks, report.seed);
  const bool single = method.method == Method::GP;
  auto view = [&](const ObservationSet& d) { return single ? detail::primary_only(d) : d; };
  const ObservationSet train = view(split.train);
  const ObservationSet inner_train = view(split.inner_train);
  const ObservationSet val = detail::primary_only(split.inner_val);
  const ObservationSet test = detail::primary_only(split.test);
  const int tasks = train.num_tasks;

  const TargetScaler scaler = TargetScaler::fit(train);
  const ObservationSet train_z = scaler.apply(train);
  const ObservationSet inner_z = scaler.apply(inner_train);
  const Eigen::VectorXd val_truth = val.targets();

  std::optional<FittedModel> best;
  std::size_t best_index = 0;
  const auto combos = rank_candidates(method.method, tasks, plan.candidate_ranks);
  for (std::size_t c = 0; c < combos.size(); ++c) {
    CandidateScore cand{combos[c], std::nullopt, {}};
    try {
      OptimizerSettings opt = plan.optimizer;
      opt.seed = splitmix64(report.seed + 1 + c);
      auto structure = make_preset(method.method, tasks, method.kernel_specs(), combos[c]);
      auto fitted = fit(structure, inner_z, opt);
      cand.score = detail::selection_score(val_truth, detail::predict_primary(fitted.model, scaler, val));
      if (!best || *cand.score > *report.candidates[best_index].score) {
        best.emplace(std::move(fitted.model));
        best_index = c;
      }
    } catch (const Error& e) {
      cand.error = e.what();
    }
    report.candidates.push_back(std::move(cand));
  }
  if (!best) {
    std::string msg = "trial " + std::to_string(trial_index) + " (" + report.method +
                      "): every candidate failed";
    for (const auto& c : report.candidates) msg += "\n  " + c.error;
    throw FitError(msg);
  }
  report.selected_ranks = combos[best_index];
  report.inner_r2 = *report.candidates[best_index].score;

  ModelConfig final_config = best->config();
  if (plan.refit) {
    OptimizerSettings opt = plan.optimizer;
    opt.seed = splitmix64(report.seed + 1 + combos.size());
    final_config = fit(make_preset(method.method, tasks, method.kernel_specs(), report.selected_ranks),
                       train_z, opt).model.config();
  }
  const FittedModel final_model(final_config, train_z);
  report.parameters = final_config.params();
  report.test_r2 = r_squared(test.targets(), detail::predict_primary(final_model, scaler, test));
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

struct MethodSummary {
  std::string label;
  int trials = 0;
  int failed = 0;
  double mean_r2 = 0.0;
  double std_r2 = 0.0;
};

struct ExperimentResult {
  std::vector<MethodSummary> summary;        // plan.methods order
  std::vector<TrialReport> reports;          // method-major, then trial order
  std::vector<std::string> failures;
  std::string primary_name;
};

/// Sample standard deviation; 0 for a single value.
inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Runs every (method, trial) pair, on up to `jobs` threads. Results are
/// identical for any `jobs`.
inline ExperimentResult run_experiment(const ExperimentPlan& plan, const SpectraTable& table,
                                       int jobs = 1,
                                       const std::function<void(const TrialReport&)>& progress = {}) {
  plan.validate();
  const std::size_t n_methods = plan.methods.size();
  const auto n_trials = static_cast<std::size_t>(plan.num_trials);
  std::vector<std::optional<TrialReport>> slots(n_methods * n_trials);
  std::vector<std::string> errors(slots.size());
  std::mutex progress_mutex;
  parallel_for(slots.size(), jobs, [&](std::size_t k) {
    const auto& method = plan.methods[k / n_trials];
    const int trial = static_cast<int>(k % n_trials);
    try {
      slots[k] = run_trial(plan, table, method, trial);
    } catch (const Error& e) {
      if (!plan.allow_partial) throw;
      errors[k] = e.what();
      return;
    }
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(*slots[k]);
    }
  });

  ExperimentResult result;
  result.primary_name = table.task_names[plan.primary_task];
  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    MethodSummary s;
    s.label = plan.methods[mi].label();
    std::vector<double> r2;
    for (std::size_t t = 0; t < n_trials; ++t) {
      auto& slot = slots[mi * n_trials + t];
      if (slot) {
        r2.push_back(slot->test_r2);
        result.reports.push_back(std::move(*slot));
      } else {
        ++s.failed;
        result.failures.push_back(errors[mi * n_trials + t]);
      }
    }
    s.trials = static_cast<int>(r2.size());
    if (!r2.empty()) {
      s.mean_r2 = std::accumulate(r2.begin(), r2.end(), 0.0) / static_cast<double>(r2.size());
      s.std_r2 = sample_std(r2);
    }
    result.summary.push_back(s);
  }
  return result;
}

/// Aligned plain-text table: one row per method, "mean (±std)" of test r^2.
inline std::string format_summary_table(const ExperimentResult& r) {
  // Column widths count code points so the UTF-8 "±" does not skew alignment.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
      return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
    }));
  };
  auto pad = [&](const std::string& s, std::size_t w) { return s + std::string(w - width(s), ' '); };
  std::vector<std::array<std::string, 3>> rows{
      {"Method", r.primary_name + " r^2 (mean ±std)", "Trials"}};
  for (const auto& s : r.summary) {
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(4) << s.mean_r2 << " (±" << std::setprecision(3)
         << s.std_r2 << ")";
    std::string trials = std::to_string(s.trials);
    if (s.failed) trials += " (" + std::to_string(s.failed) + " failed)";
    rows.push_back({s.label, cell.str(), trials});
  }
  std::array<std::size_t, 2> w{0, 0};
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < 2; ++c) w[c] = std::max(w[c], width(row[c]));
  }
  std::string out;
  for (const auto& row : rows) out += pad(row[0], w[0]) + "  " + pad(row[1], w[1]) + "  " + row[2] + "\n";
  return out;
}

inline nlohmann::json summary_json(const ExperimentResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.summary) {
    rows.push_back({{"method", s.label},
                    {"trials", s.trials},
                    {"failed", s.failed},
                    {"mean_r2", s.mean_r2},
                    {"std_r2", s.std_r2}});
  }
  return {{"primary_task", r.primary_name}, {"methods", rows}};
}

}  // namespace mtgp
