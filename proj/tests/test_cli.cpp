#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mtgp/cli.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mtgp_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = mtgp::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Vegetation-like spectra on 670/700/800 nm with one smooth label.
void write_red_edge_csv(const fs::path& path, int rows) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::ofstream out(path);
  out << "670,700,800,N [%]\n";
  for (int i = 0; i < rows; ++i) {
    const double red = 0.02 + 0.1 * u(rng), edge = 0.2 + 0.2 * u(rng), nir = 0.3 + 0.4 * u(rng);
    out << red << ',' << edge << ',' << nir << ',' << 1.0 + 2.0 * nir - red << '\n';
  }
}

TEST(Serialization, RoundTripPredictsBitIdentically) {
  const auto dir = scratch_dir("roundtrip");
  mtgp::SyntheticSpec spec;
  spec.num_samples = 20;
  spec.labels_per_task = {8, 20};
  const auto table = mtgp::generate_synthetic(spec);
  const auto obs = mtgp::observations_from_table(table, {0, 1});
  const auto scaler = mtgp::TargetScaler::fit(obs);
  mtgp::OptimizerSettings opt;
  opt.num_restarts = 2;
  auto fitted = mtgp::fit(mtgp::make_preset(mtgp::Method::COMP, 2,
                                            {mtgp::KernelSpec::unit(mtgp::KernelKind::SE),
                                             mtgp::KernelSpec::unit(mtgp::KernelKind::NN)},
                                            {1, 1}),
                          scaler.apply(obs), opt);
  const mtgp::SavedModel saved{mtgp::MethodSpec::parse("comp-se-nn"),
                               fitted.model,
                               scaler,
                               table.task_names,
                               table.task_units,
                               table.wavelengths,
                               {},
                               3};
  mtgp::save_model((dir / "m.json").string(), saved);
  const auto loaded = mtgp::load_model((dir / "m.json").string());
  const Eigen::MatrixXd xs = Eigen::MatrixXd::Random(6, spec.num_bands).cwiseAbs();
  for (int task = 0; task < 2; ++task) {
    const Eigen::VectorXd a = saved.predict(xs, task), b = loaded.predict(xs, task);
    EXPECT_TRUE((a.array() == b.array()).all());
  }
  EXPECT_EQ(loaded.model.config().params(), saved.model.config().params());
  EXPECT_EQ(loaded.seed, 3u);
  EXPECT_EQ(loaded.method.label(), "MTGP-COMP (SE, NN)");
}

TEST(Serialization, TamperedTrainingDataRejected) {
  const auto dir = scratch_dir("tamper");
  write_red_edge_csv(dir / "d.csv", 10);
  ASSERT_EQ(cli({"fit", "--data", (dir / "d.csv").string(), "--model", (dir / "m.json").string(),
                 "--method", "gp-se", "--restarts", "1", "-q"})
                .code,
            0);
  auto j = nlohmann::json::parse(slurp(dir / "m.json"));
  j["training"]["observations"][0][2] = 123.0;
  std::ofstream(dir / "bad.json") << j.dump();
  EXPECT_THROW(mtgp::load_model((dir / "bad.json").string()), mtgp::DataError);
}

TEST(Cli, FitPredictMatchesLibrary) {
  const auto dir = scratch_dir("fit");
  write_red_edge_csv(dir / "d.csv", 12);
  const auto r = cli({"fit", "--data", (dir / "d.csv").string(), "--model", (dir / "m.json").string(),
                      "--method", "gp-se", "--restarts", "2", "--log", (dir / "log.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("NLML"), std::string::npos);
  const auto log = nlohmann::json::parse(slurp(dir / "log.json"));
  EXPECT_EQ(log["restarts"].size(), 2u);
  EXPECT_TRUE(log.contains("parameters"));

  const auto p = cli({"predict", "--model", (dir / "m.json").string(), "--data", (dir / "d.csv").string(),
                      "--out", (dir / "p.csv").string()});
  ASSERT_EQ(p.code, 0) << p.err;
  const auto model = mtgp::load_model((dir / "m.json").string());
  const auto table = mtgp::load_spectra_csv((dir / "d.csv").string());
  const Eigen::VectorXd expect = model.predict(table.spectra, 0);
  std::istringstream lines(slurp(dir / "p.csv"));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "sample,N_mean");
  for (Eigen::Index i = 0; i < expect.size(); ++i) {
    ASSERT_TRUE(std::getline(lines, line));
    EXPECT_EQ(line, std::to_string(i) + "," + mtgp::detail::format_double(expect[i]));
  }
}

TEST(Cli, SameSeedGivesIdenticalModelFiles) {
  const auto dir = scratch_dir("seed");
  ASSERT_EQ(cli({"synth", "--out", (dir / "s.csv").string(), "--synth-samples", "20",
                 "--synth-labels", "6", "20", "-q"})
                .code,
            0);
  for (const char* name : {"a.json", "b.json"}) {
    ASSERT_EQ(cli({"fit", "--data", (dir / "s.csv").string(), "--model", (dir / name).string(),
                   "--method", "sc-se", "--restarts", "2", "--seed", "9", "-q"})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
}

TEST(Cli, UnknownTaskIsConfigurationError) {
  const auto dir = scratch_dir("task");
  write_red_edge_csv(dir / "d.csv", 6);
  const auto r = cli({"fit", "--data", (dir / "d.csv").string(), "--model", (dir / "m.json").string(),
                      "--tasks", "P"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("valid tasks: N"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch_dir("codes");
  EXPECT_EQ(cli({"fit", "--data", (dir / "none.csv").string(), "--model", "x.json"}).code, 5);
  std::ofstream(dir / "bad.csv") << "400,500,N\n0.1,x,1\n";
  EXPECT_EQ(cli({"fit", "--data", (dir / "bad.csv").string(), "--model", "x.json"}).code, 3);
  EXPECT_EQ(cli({"fit", "--bogus"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"benchmark", "--synthetic", "--methods", "nope"}).code, 2);
}

TEST(Cli, BenchmarkSingleTrialOneRow) {
  const auto dir = scratch_dir("bench");
  const auto r = cli({"benchmark", "--synthetic", "--synth-samples", "20", "--synth-labels", "9", "20",
                      "--trials", "1", "--methods", "gp-se", "--restarts", "1", "-q", "--table",
                      (dir / "t.txt").string(), "--trial-log", (dir / "trials.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 2);
  EXPECT_NE(r.out.find("GP (SE)"), std::string::npos);
  EXPECT_EQ(slurp(dir / "t.txt"), r.out);
  const auto trials = slurp(dir / "trials.jsonl");
  EXPECT_EQ(std::count(trials.begin(), trials.end(), '\n'), 1);
}

TEST(Cli, DryRunPrintsPlan) {
  const auto r = cli({"benchmark", "--synthetic", "--dry-run", "--methods", "sc-se", "comp-se-nn"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["methods"].size(), 2u);
  EXPECT_EQ(j["methods"][1]["rank_candidates"].size(), 9u);
  EXPECT_EQ(j["trials"], 50);
  EXPECT_EQ(j["seed"], 0);
}

TEST(Cli, ConfigFileSuppliesOptions) {
  const auto dir = scratch_dir("config");
  std::ofstream(dir / "run.toml") << "[benchmark]\nsynthetic = true\ndry-run = true\ntrials = 7\n";
  const auto r = cli({"--config", (dir / "run.toml").string(), "benchmark"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["trials"], 7);
}

TEST(Cli, MapSingleVegetationPixel) {
  const auto dir = scratch_dir("map");
  write_red_edge_csv(dir / "d.csv", 12);
  ASSERT_EQ(cli({"fit", "--data", (dir / "d.csv").string(), "--model", (dir / "m.json").string(),
                 "--method", "gp-se", "--restarts", "1", "-q"})
                .code,
            0);
  mtgp::HyperCube cube;
  cube.width = 2;
  cube.height = 2;
  cube.wavelengths = {660, 670, 700, 800, 810};
  // pixel (0,1) is vegetation; others are soil-like or dark
  const std::vector<std::array<float, 5>> px{
      {0.20f, 0.20f, 0.22f, 0.25f, 0.25f},
      {0.05f, 0.05f, 0.30f, 0.50f, 0.50f},
      {0.30f, 0.30f, 0.30f, 0.30f, 0.30f},
      {0.0f, 0.0f, 0.0f, 0.0f, 0.0f}};
  for (int b = 0; b < 5; ++b)
    for (const auto& p : px) cube.raw.push_back(p[b]);
  mtgp::write_cube(cube, (dir / "cube.json").string());
  const auto prefix = (dir / "out").string();
  const auto r = cli({"map", "--model", (dir / "m.json").string(), "--cube", (dir / "cube.json").string(),
                      "--out-prefix", prefix, "-q"});
  ASSERT_EQ(r.code, 0) << r.err;

  const auto model = mtgp::load_model((dir / "m.json").string());
  Eigen::RowVectorXd x(3);
  x << double(0.05f), double(0.30f), double(0.50f);
  const double expect = model.predict(x, 0)[0];
  EXPECT_EQ(slurp(prefix + "_N.csv"), "nan," + mtgp::detail::format_double(expect) + "\nnan,nan\n");
  EXPECT_EQ(slurp(prefix + "_mask.csv"), "0,1\n0,0\n");
  const auto legend = nlohmann::json::parse(slurp(prefix + "_N.legend.json"));
  EXPECT_EQ(legend["min"].get<double>(), expect);
  EXPECT_EQ(legend["max"].get<double>(), expect);
  EXPECT_EQ(legend["unit"], "%");
}

TEST(Cli, MapCoverageGapIsRangeError) {
  const auto dir = scratch_dir("gap");
  write_red_edge_csv(dir / "d.csv", 8);
  ASSERT_EQ(cli({"fit", "--data", (dir / "d.csv").string(), "--model", (dir / "m.json").string(),
                 "--method", "gp-se", "--restarts", "1", "-q"})
                .code,
            0);
  mtgp::HyperCube cube;
  cube.width = 1;
  cube.height = 1;
  cube.wavelengths = {670, 700, 750};
  cube.raw = {0.05f, 0.3f, 0.5f};
  mtgp::write_cube(cube, (dir / "cube.json").string());
  const auto r = cli({"map", "--model", (dir / "m.json").string(), "--cube", (dir / "cube.json").string(),
                      "--out-prefix", (dir / "o").string(), "--ndvi-nir", "750"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("800"), std::string::npos);
}

}  // namespace
