#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mtgp/data/cube.hpp"
#include "mtgp/data/preprocess.hpp"
#include "mtgp/data/raster.hpp"
#include "mtgp/data/spectra.hpp"
#include "mtgp/data/split.hpp"
#include "mtgp/errors.hpp"
#include "mtgp/experiment.hpp"
#include "mtgp/fit.hpp"
#include "mtgp/mapping.hpp"
#include "mtgp/serialization.hpp"
#include "mtgp/synthetic.hpp"

namespace mtgp::cli {

/// Every option of every subcommand. Config files (TOML/INI via --config)
/// use the long option names as keys; command-line flags override them.
struct RunConfig {
  // shared
  std::string data_path;
  std::string model_path;
  std::string out_path;
  std::vector<std::string> tasks;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool quiet = false;
  bool remove_water = false;
  std::vector<std::string> water_bands;  // "lo:hi"

  // fit
  std::string method = "comp-se-nn";
  std::vector<int> ranks;
  std::string log_path;

  // optimizer
  int restarts = 5;
  int max_iterations = 200;
  double gradient_tolerance = 1e-5;
  double step_tolerance = 1e-9;

  // predict
  bool variance = false;
  bool with_noise = false;

  // benchmark
  bool synthetic = false;
  std::string primary;
  std::vector<std::string> secondary;
  std::vector<std::string> methods{"gp-se",  "gp-nn",  "gp-sum", "sc-se",  "sc-nn",
                                   "sc-sum", "sn-se",  "sn-nn",  "sn-sum", "comp-se-nn"};
  int trials = 50;
  std::vector<int> candidate_ranks;
  bool refit = false;
  bool partial = false;
  bool dry_run = false;
  std::string table_path;
  std::string json_path;
  std::string trials_path;

  // synthetic generator
  int synth_samples = 100;
  int synth_bands = 5;
  std::vector<int> synth_labels{10, 100};
  double synth_coupling = 0.9;

  // map
  std::string cube_path;
  std::string out_prefix = "map";
  double ndvi_red = 670.0;
  double ndvi_nir = 800.0;
  double ndvi_threshold = 0.3;
};

namespace detail {

inline std::vector<BandRange> band_ranges(const RunConfig& c) {
  if (c.water_bands.empty()) return default_water_bands();
  std::vector<BandRange> out;
  for (const auto& s : c.water_bands) {
    const auto colon = s.find(':');
    const auto lo = colon == std::string::npos ? std::nullopt : mtgp::detail::parse_double(s.substr(0, colon));
    const auto hi = colon == std::string::npos ? std::nullopt : mtgp::detail::parse_double(s.substr(colon + 1));
    if (!lo || !hi) throw ConfigError("water band '" + s + "' is not of the form lo:hi");
    if (*lo > *hi) throw ConfigError("water band '" + s + "' has lo > hi");
    out.push_back({*lo, *hi});
  }
  return out;
}

inline OptimizerSettings optimizer_settings(const RunConfig& c) {
  OptimizerSettings o;
  o.num_restarts = c.restarts;
  o.max_iterations = c.max_iterations;
  o.gradient_tolerance = c.gradient_tolerance;
  o.step_tolerance = c.step_tolerance;
  o.seed = c.seed;
  o.validate();
  return o;
}

inline SyntheticSpec synthetic_spec(const RunConfig& c) {
  SyntheticSpec s;
  s.num_samples = c.synth_samples;
  s.num_bands = c.synth_bands;
  s.labels_per_task = c.synth_labels;
  const int m = s.num_tasks();
  s.first_task_matrix = Eigen::MatrixXd::Constant(m, m, c.synth_coupling);
  s.first_task_matrix.diagonal().setOnes();
  s.second_task_matrix = Eigen::MatrixXd::Constant(m, m, -0.3);
  s.second_task_matrix.diagonal().setConstant(0.5);
  s.noise_variance.assign(static_cast<std::size_t>(m), 0.01);
  s.seed = c.seed;
  return s;
}

inline SpectraTable load_table(const RunConfig& c) {
  SpectraTable t = c.synthetic ? generate_synthetic(synthetic_spec(c)) : load_spectra_csv(c.data_path);
  if (c.remove_water) t = remove_bands(t, band_ranges(c));
  return t;
}

inline std::vector<int> resolve_tasks(const SpectraTable& t, const std::vector<std::string>& names) {
  std::vector<int> out;
  if (names.empty()) {
    for (int k = 0; k < t.num_tasks(); ++k) out.push_back(k);
  }
  for (const auto& n : names) out.push_back(t.task_index(n));
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << text;
  if (!f) throw IoError("write failed for '" + path + "'");
}

/// Spectra of `table` expressed on the model's wavelengths.
inline Eigen::MatrixXd align_inputs(const SavedModel& model, const SpectraTable& table) {
  if (table.wavelengths == model.wavelengths) return table.spectra;
  const SpectraTable clean =
      model.band_exclusions.empty() ? table : remove_bands(table, model.band_exclusions);
  check_coverage(model.wavelengths, clean.wavelengths, model.band_exclusions);
  Eigen::MatrixXd x(table.num_samples(), static_cast<Eigen::Index>(model.wavelengths.size()));
  for (Eigen::Index i = 0; i < table.num_samples(); ++i) {
    const Eigen::VectorXd row = clean.spectra.row(i).transpose();
    const auto v = resample_spectrum(clean.wavelengths, {row.data(), row.data() + row.size()},
                                     model.wavelengths);
    x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), x.cols());
  }
  return x;
}

}  // namespace detail

inline int cmd_fit(const RunConfig& c, std::ostream& out) {
  const SpectraTable table = detail::load_table(c);
  const MethodSpec method = MethodSpec::parse(c.method);
  std::vector<int> tasks = detail::resolve_tasks(table, c.tasks);
  if (method.method == Method::GP) {
    if (c.tasks.size() > 1) throw ConfigError("gp is single-task; pass exactly one --tasks name");
    tasks.resize(1);
  }
  const int m = static_cast<int>(tasks.size());
  std::vector<int> ranks = c.ranks;
  if (ranks.empty()) ranks.assign(static_cast<std::size_t>(num_rank_slots(method.method)), std::min(1, m));
  const ObservationSet raw = observations_from_table(table, tasks);
  const TargetScaler scaler = TargetScaler::fit(raw);
  const auto structure = make_preset(method.method, m, method.kernel_specs(), ranks);
  const OptimizerSettings opt = detail::optimizer_settings(c);
  auto result = fit(structure, scaler.apply(raw), opt);

  SavedModel saved{method,
                   std::move(result.model),
                   scaler,
                   {},
                   {},
                   table.wavelengths,
                   c.remove_water ? detail::band_ranges(c) : std::vector<BandRange>{},
                   c.seed};
  for (int t : tasks) {
    saved.task_names.push_back(table.task_names[t]);
    saved.task_units.push_back(table.task_units[t]);
  }
  save_model(c.model_path, saved);

  nlohmann::json log = {{"method", method.label()}, {"observations", raw.size()}, {"restarts", nlohmann::json::array()}};
  for (std::size_t r = 0; r < result.optimization.runs.size(); ++r) {
    const auto& run = result.optimization.runs[r];
    if (!run) {
      log["restarts"].push_back({{"restart", r}, {"error", result.optimization.errors[r]}});
      continue;
    }
    log["restarts"].push_back({{"restart", r},
                               {"initial_nlml", run->f_initial},
                               {"final_nlml", run->f},
                               {"iterations", run->iterations},
                               {"termination", std::string(to_string(run->reason))}});
  }
  log["best_restart"] = result.optimization.best_restart;
  log["nlml"] = saved.model.nlml();
  log["parameters"] = mtgp::detail::to_vec(saved.model.config().params());
  if (!c.log_path.empty()) detail::write_text(c.log_path, log.dump(2) + "\n");
  if (!c.quiet) {
    out << method.label() << " on " << raw.size() << " observations, " << m << " task(s)\n";
    for (const auto& r : log["restarts"]) {
      if (r.contains("error")) {
        out << "  restart " << r["restart"] << ": failed: " << r["error"].get<std::string>() << '\n';
      } else {
        out << "  restart " << r["restart"] << ": NLML " << r["initial_nlml"] << " -> " << r["final_nlml"]
            << " in " << r["iterations"] << " iterations (" << r["termination"].get<std::string>() << ")\n";
      }
    }
    out << "best restart " << log["best_restart"] << ", NLML " << log["nlml"] << "\n"
        << "model written to " << c.model_path << '\n';
  }
  return 0;
}

inline int cmd_predict(const RunConfig& c, std::ostream& out) {
  const SavedModel model = load_model(c.model_path);
  std::ifstream in(c.data_path);
  if (!in) throw IoError("cannot open '" + c.data_path + "'");
  const SpectraTable table = parse_spectra_csv(in);
  const Eigen::MatrixXd x = detail::align_inputs(model, table);
  std::vector<int> tasks;
  if (c.tasks.empty()) {
    for (int t = 0; t < model.model.num_tasks(); ++t) tasks.push_back(t);
  }
  for (const auto& name : c.tasks) {
    const auto it = std::find(model.task_names.begin(), model.task_names.end(), name);
    if (it == model.task_names.end()) throw ConfigError("model has no task '" + name + "'");
    tasks.push_back(static_cast<int>(it - model.task_names.begin()));
  }
  std::ostringstream csv;
  csv << "sample";
  for (int t : tasks) {
    csv << ',' << model.task_names[t] << "_mean";
    if (c.variance) csv << ',' << model.task_names[t] << "_variance";
  }
  csv << '\n';
  std::vector<Eigen::VectorXd> means, vars;
  for (int t : tasks) {
    means.push_back(model.predict(x, t));
    if (c.variance) {
      Eigen::VectorXd v = model.model.predict_variance(x, t);
      if (c.with_noise) v.array() += std::exp(model.model.config().task_noise_log[t]);
      vars.push_back(v * model.scaler.scale[t] * model.scaler.scale[t]);
    }
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    csv << i;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      csv << ',' << mtgp::detail::format_double(means[k][i]);
      if (c.variance) csv << ',' << mtgp::detail::format_double(vars[k][i]);
    }
    csv << '\n';
  }
  if (c.out_path.empty()) {
    out << csv.str();
  } else {
    detail::write_text(c.out_path, csv.str());
  }
  return 0;
}

inline ExperimentPlan build_plan(const RunConfig& c, const SpectraTable& table) {
  ExperimentPlan plan;
  for (const auto& m : c.methods) plan.methods.push_back(MethodSpec::parse(m));
  plan.primary_task = c.primary.empty() ? 0 : table.task_index(c.primary);
  if (c.secondary.empty()) {
    for (int t = 0; t < table.num_tasks(); ++t)
      if (t != plan.primary_task) plan.secondary_tasks.push_back(t);
  } else {
    for (const auto& s : c.secondary) plan.secondary_tasks.push_back(table.task_index(s));
  }
  plan.num_trials = c.trials;
  plan.candidate_ranks = c.candidate_ranks;
  plan.optimizer = detail::optimizer_settings(c);
  plan.base_seed = c.seed;
  plan.refit = c.refit;
  plan.allow_partial = c.partial;
  plan.validate();
  return plan;
}

inline int cmd_benchmark(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (!c.synthetic && c.data_path.empty()) throw ConfigError("benchmark needs --data or --synthetic");
  const SpectraTable table = detail::load_table(c);
  const ExperimentPlan plan = build_plan(c, table);
  if (c.dry_run) {
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : plan.methods) {
      nlohmann::json ranks = nlohmann::json::array();
      const int tasks = m.method == Method::GP ? 1 : plan.num_tasks();
      for (const auto& r : rank_candidates(m.method, tasks, plan.candidate_ranks)) ranks.push_back(r);
      methods.push_back({{"method", m.label()}, {"rank_candidates", ranks}});
    }
    std::vector<std::string> secondary;
    for (int s : plan.secondary_tasks) secondary.push_back(table.task_names[s]);
    const nlohmann::json j = {{"data", c.synthetic ? std::string("synthetic") : c.data_path},
                              {"samples", table.num_samples()},
                              {"bands", table.wavelengths.size()},
                              {"primary", table.task_names[plan.primary_task]},
                              {"secondary", secondary},
                              {"trials", plan.num_trials},
                              {"methods", methods},
                              {"restarts", plan.optimizer.num_restarts},
                              {"max_iterations", plan.optimizer.max_iterations},
                              {"gradient_tolerance", plan.optimizer.gradient_tolerance},
                              {"step_tolerance", plan.optimizer.step_tolerance},
                              {"seed", plan.base_seed},
                              {"refit", plan.refit},
                              {"jobs", c.jobs}};
    out << j.dump(2) << '\n';
    return 0;
  }
  auto progress = [&](const TrialReport& r) {
    if (!c.quiet) {
      err << "[" << r.method << "] trial " << r.trial_index + 1 << "/" << plan.num_trials
          << ": test r^2 = " << r.test_r2 << '\n';
    }
  };
  const ExperimentResult result = run_experiment(plan, table, c.jobs, progress);
  const std::string text = format_summary_table(result);
  out << text;
  if (!c.table_path.empty()) detail::write_text(c.table_path, text);
  if (!c.json_path.empty()) detail::write_text(c.json_path, summary_json(result).dump(2) + "\n");
  if (!c.trials_path.empty()) {
    std::string lines;
    for (const auto& r : result.reports) lines += r.to_json().dump() + "\n";
    detail::write_text(c.trials_path, lines);
  }
  return 0;
}

inline int cmd_map(const RunConfig& c, std::ostream& out) {
  const SavedModel model = load_model(c.model_path);
  const HyperCube cube = read_cube(c.cube_path);
  std::vector<int> tasks;
  if (c.tasks.empty()) {
    for (int t = 0; t < model.model.num_tasks(); ++t) tasks.push_back(t);
  }
  for (const auto& name : c.tasks) {
    const auto it = std::find(model.task_names.begin(), model.task_names.end(), name);
    if (it == model.task_names.end()) throw ConfigError("model has no task '" + name + "'");
    tasks.push_back(static_cast<int>(it - model.task_names.begin()));
  }
  NdviSettings ndvi;
  ndvi.red_nm = c.ndvi_red;
  ndvi.nir_nm = c.ndvi_nir;
  ndvi.threshold = c.ndvi_threshold;
  const MapResult result = predict_map(model, cube, tasks, ndvi, c.jobs);

  PredictionMap mask{cube.width, cube.height, {}};
  for (bool keep : result.mask) mask.values.emplace_back(keep ? 1.0 : 0.0);
  write_map_csv(c.out_prefix + "_mask.csv", mask);
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const std::string stem = c.out_prefix + "_" + model.task_names[tasks[k]];
    write_map_csv(stem + ".csv", result.maps[k]);
    write_map_image(stem + ".pgm", stem + ".legend.json", result.maps[k], model.task_names[tasks[k]],
                    model.task_units[tasks[k]]);
    if (!c.quiet) out << "wrote " << stem << ".{csv,pgm,legend.json}\n";
  }
  return 0;
}

inline int cmd_synth(const RunConfig& c, std::ostream& out) {
  const SpectraTable t = generate_synthetic(detail::synthetic_spec(c));
  save_spectra_csv(c.out_path, t);
  if (!c.quiet) out << "wrote " << t.num_samples() << " samples to " << c.out_path << '\n';
  return 0;
}

inline void add_optimizer_flags(CLI::App* sub, RunConfig& c) {
  sub->add_option("--restarts", c.restarts, "Random restarts per fit")->capture_default_str();
  sub->add_option("--max-iter", c.max_iterations, "L-BFGS iterations per restart")->capture_default_str();
  sub->add_option("--grad-tol", c.gradient_tolerance, "Gradient infinity-norm tolerance")->capture_default_str();
  sub->add_option("--step-tol", c.step_tolerance, "Step infinity-norm tolerance")->capture_default_str();
}

inline void add_synthetic_flags(CLI::App* sub, RunConfig& c) {
  sub->add_option("--synth-samples", c.synth_samples, "Synthetic samples")->capture_default_str();
  sub->add_option("--synth-bands", c.synth_bands, "Synthetic bands")->capture_default_str();
  sub->add_option("--synth-labels", c.synth_labels, "Labels kept per task, primary first")->capture_default_str();
  sub->add_option("--synth-coupling", c.synth_coupling, "Off-diagonal of the first task matrix")
      ->capture_default_str();
}

inline void add_water_flags(CLI::App* sub, RunConfig& c) {
  sub->add_flag("--remove-water", c.remove_water, "Remove water absorption bands before modeling");
  sub->add_option("--water-band", c.water_bands,
                  "Band range lo:hi in nm to remove (repeatable; default 1350:1460 1790:1960)");
}

/// Runs the command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  RunConfig c;
  CLI::App app{"Multitask Gaussian process regression for spectra-to-biochemistry transfer"};
  app.set_config("--config", "", "TOML/INI config file; keys are long option names");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("-q,--quiet", c.quiet, "Suppress progress output");

  auto* fit_cmd = app.add_subcommand("fit", "Learn a model from a spectra CSV");
  fit_cmd->add_option("--data", c.data_path, "Spectra CSV")->required();
  fit_cmd->add_option("--model,--out", c.model_path, "Model file to write")->required();
  fit_cmd->add_option("--tasks", c.tasks, "Task names, primary first (default: all)");
  fit_cmd->add_option("--method", c.method, "gp-<k>, sc-<k>, sn-<k> or comp-<k1>-<k2>")->capture_default_str();
  fit_cmd->add_option("--ranks", c.ranks, "Task matrix ranks, one per rank slot (default: 1)");
  fit_cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  fit_cmd->add_option("--log", c.log_path, "Write a JSON fit log");
  add_optimizer_flags(fit_cmd, c);
  add_water_flags(fit_cmd, c);

  auto* predict_cmd = app.add_subcommand("predict", "Predict labels for spectra");
  predict_cmd->add_option("--model", c.model_path, "Model file")->required();
  predict_cmd->add_option("--data", c.data_path, "Spectra CSV (labels ignored)")->required();
  predict_cmd->add_option("--out", c.out_path, "Output CSV (default: stdout)");
  predict_cmd->add_option("--tasks", c.tasks, "Tasks to predict (default: all)");
  predict_cmd->add_flag("--variance", c.variance, "Also write latent predictive variance");
  predict_cmd->add_flag("--with-noise", c.with_noise, "Add task noise variance to --variance");

  auto* bench_cmd = app.add_subcommand("benchmark", "Run the repeated-trial transfer evaluation");
  bench_cmd->add_option("--data", c.data_path, "Spectra CSV");
  bench_cmd->add_flag("--synthetic", c.synthetic, "Use the built-in synthetic generator");
  bench_cmd->add_option("--primary", c.primary, "Primary task (default: first)");
  bench_cmd->add_option("--secondary", c.secondary, "Secondary tasks (default: all others)");
  bench_cmd->add_option("--methods", c.methods, "Methods to compare")->capture_default_str();
  bench_cmd->add_option("--trials", c.trials, "Independent trials")->capture_default_str();
  bench_cmd->add_option("--ranks", c.candidate_ranks, "Candidate ranks (default: 0..M)");
  bench_cmd->add_option("--seed", c.seed, "Base seed")->capture_default_str();
  bench_cmd->add_option("--jobs", c.jobs, "Concurrent trials")->capture_default_str();
  bench_cmd->add_flag("--refit", c.refit, "Re-optimize on the full training set after rank selection");
  bench_cmd->add_flag("--partial", c.partial, "Report partial results when trials fail");
  bench_cmd->add_flag("--dry-run", c.dry_run, "Print the resolved plan and exit");
  bench_cmd->add_option("--table", c.table_path, "Write the summary table");
  bench_cmd->add_option("--json", c.json_path, "Write the summary as JSON");
  bench_cmd->add_option("--trial-log", c.trials_path, "Write per-trial reports (JSON lines)");
  add_optimizer_flags(bench_cmd, c);
  add_synthetic_flags(bench_cmd, c);
  add_water_flags(bench_cmd, c);

  auto* map_cmd = app.add_subcommand("map", "Predict per-pixel maps from a hyperspectral cube");
  map_cmd->add_option("--model", c.model_path, "Model file")->required();
  map_cmd->add_option("--cube", c.cube_path, "Cube sidecar (.json)")->required();
  map_cmd->add_option("--out-prefix", c.out_prefix, "Output path prefix")->capture_default_str();
  map_cmd->add_option("--tasks", c.tasks, "Tasks to map (default: all)");
  map_cmd->add_option("--ndvi-red", c.ndvi_red, "Red band (nm)")->capture_default_str();
  map_cmd->add_option("--ndvi-nir", c.ndvi_nir, "NIR band (nm)")->capture_default_str();
  map_cmd->add_option("--ndvi-threshold", c.ndvi_threshold, "Minimum NDVI kept")->capture_default_str();
  map_cmd->add_option("--jobs", c.jobs, "Concurrent image rows")->capture_default_str();

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic spectra CSV");
  synth_cmd->add_option("--out", c.out_path, "Output CSV")->required();
  synth_cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  add_synthetic_flags(synth_cmd, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfiguration);
  }
  try {
    if (*fit_cmd) return cmd_fit(c, out);
    if (*predict_cmd) return cmd_predict(c, out);
    if (*bench_cmd) return cmd_benchmark(c, out, err);
    if (*map_cmd) return cmd_map(c, out);
    if (*synth_cmd) return cmd_synth(c, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kIo);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kNumerical);
  }
  return static_cast<int>(ExitCode::kConfiguration);
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"mtgp"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mtgp::cli
