#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>

#include "mtgp/fit.hpp"
#include "mtgp/model.hpp"
#include "oracle.hpp"

namespace {

using mtgp::KernelSpec;
using mtgp::Method;
using mtgp::ModelConfig;
using mtgp::ObservationSet;

constexpr double kLog2Pi = 1.8378770664093453;

ObservationSet random_full_grid(int n, int m, std::mt19937_64& rng, int d = 3) {
  const auto x = oracle::random_inputs(n, d, rng);
  return oracle::full_grid(x, m, oracle::random_vector(n * m, rng));
}

// ------------------------------------------------------------ assemble_sigma

TEST(AssembleSigma, IdentityTaskMatrixDecouples) {
  std::mt19937_64 rng(1);
  auto data = random_full_grid(2, 2, rng);
  auto c = mtgp::make_sc(2, KernelSpec::se(1.0, 0.8), 0);
  c.task_noise_log.setConstant(std::log(1e-300));
  const Eigen::MatrixXd s = mtgp::assemble_sigma(c, data);
  const Eigen::MatrixXd k = mtgp::kernel_matrix(c.terms[0].kernel, data.x);
  EXPECT_TRUE(s.block(0, 0, 2, 2).isApprox(k, 1e-15));
  EXPECT_TRUE(s.block(2, 2, 2, 2).isApprox(k, 1e-15));
  EXPECT_EQ(s.block(0, 2, 2, 2), Eigen::MatrixXd::Zero(2, 2));
}

TEST(AssembleSigma, MatchesDenseKroneckerOracle) {
  std::mt19937_64 rng(2);
  for (auto method : {Method::SC, Method::SN, Method::COMP}) {
    for (int rep = 0; rep < 5; ++rep) {
      const auto c = oracle::random_config(method, 3, rng, mtgp::KernelKind::SUM);
      const auto data = random_full_grid(4, 3, rng);
      EXPECT_LE((mtgp::assemble_sigma(c, data) - oracle::full_grid_sigma(c, data.x))
                    .cwiseAbs()
                    .maxCoeff(),
                1e-12);
    }
  }
}

TEST(AssembleSigma, PartialGridDeletesRowAndColumn) {
  std::mt19937_64 rng(3);
  const auto c = oracle::random_config(Method::COMP, 2, rng);
  auto data = random_full_grid(3, 2, rng);
  const Eigen::MatrixXd full = mtgp::assemble_sigma(c, data);
  const int drop = 4;
  data.obs.erase(data.obs.begin() + drop);
  const Eigen::MatrixXd part = mtgp::assemble_sigma(c, data);
  std::vector<int> keep;
  for (int i = 0; i < 6; ++i)
    if (i != drop) keep.push_back(i);
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) EXPECT_EQ(part(a, b), full(keep[a], keep[b]));
}

TEST(AssembleSigma, ShapeErrors) {
  std::mt19937_64 rng(4);
  auto data = random_full_grid(3, 2, rng);
  EXPECT_THROW(mtgp::assemble_sigma(mtgp::make_sc(3, KernelSpec::se(1, 1), 1), data),
               mtgp::ShapeError);
  data.obs.push_back({7, 0, 1.0});
  EXPECT_THROW(mtgp::assemble_sigma(mtgp::make_sc(2, KernelSpec::se(1, 1), 1), data),
               mtgp::ShapeError);
}

TEST(AssembleSigma, DuplicatePairsRejected) {
  std::mt19937_64 rng(5);
  auto data = random_full_grid(2, 1, rng);
  data.obs.push_back(data.obs.front());
  EXPECT_THROW(mtgp::assemble_sigma(mtgp::make_gp(KernelSpec::se(1, 1)), data), mtgp::DataError);
}

TEST(AssembleSigma, FactorizationFailureCarriesPivot) {
  ObservationSet data{Eigen::MatrixXd::Zero(2, 1), 1, {{0, 0, 1.0}, {1, 0, 2.0}}};
  // Two identical inputs with negligible noise: singular beyond the jitter policy.
  auto c = mtgp::make_gp(KernelSpec::se(1e8, 1.0), 1e-300);
  try {
    mtgp::negative_log_marginal_likelihood(c, data);
    FAIL() << "expected NumericalError";
  } catch (const mtgp::NumericalError& e) {
    EXPECT_EQ(e.pivot(), 1);
  }
}

// ---------------------------------------------------------------- NLML

TEST(Nlml, ScalarClosedForm) {
  ObservationSet data{Eigen::MatrixXd::Zero(1, 2), 1, {{0, 0, 1.3}}};
  auto c = mtgp::make_gp(KernelSpec::se(0.9, 1.0), 0.2);
  const double s = 0.81 + 0.2;
  EXPECT_NEAR(mtgp::negative_log_marginal_likelihood(c, data),
              0.5 * 1.3 * 1.3 / s + 0.5 * std::log(s) + 0.5 * kLog2Pi, 1e-14);
}

TEST(Nlml, MatchesDenseDensityOracle) {
  std::mt19937_64 rng(6);
  for (auto method : {Method::SC, Method::SN, Method::COMP}) {
    const auto c = oracle::random_config(method, 2, rng);
    const auto data = random_full_grid(3, 2, rng);
    EXPECT_NEAR(mtgp::negative_log_marginal_likelihood(c, data),
                oracle::mvn_nll(data.targets(), oracle::full_grid_sigma(c, data.x)), 1e-10);
  }
}

TEST(Nlml, ZeroTargetsLeaveOnlyDeterminant) {
  std::mt19937_64 rng(7);
  const auto c = oracle::random_config(Method::COMP, 2, rng);
  auto data = random_full_grid(3, 2, rng);
  for (auto& o : data.obs) o.value = 0.0;
  const Eigen::MatrixXd s = mtgp::assemble_sigma(c, data);
  const double logdet = 2.0 * s.llt().matrixLLT().diagonal().array().log().sum();
  EXPECT_EQ(mtgp::negative_log_marginal_likelihood(c, data),
            0.5 * logdet + 0.5 * 6.0 * std::log(2.0 * std::numbers::pi));
}

// ------------------------------------------------------------- gradient

TEST(NlmlGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> ndist(2, 6);
  for (auto method : {Method::GP, Method::SC, Method::SN, Method::COMP}) {
    for (auto kind : {mtgp::KernelKind::SE, mtgp::KernelKind::NN, mtgp::KernelKind::SUM}) {
      const int m = method == Method::GP ? 1 : 2;
      auto c = oracle::random_config(method, m, rng, kind, mtgp::KernelKind::SE);
      auto data = random_full_grid(ndist(rng), m, rng);
      if (data.obs.size() > 3) data.obs.erase(data.obs.begin() + 1);
      const Eigen::VectorXd g = mtgp::nlml_gradient(c, data);
      const Eigen::VectorXd fd = oracle::finite_diff(
          [&](const Eigen::VectorXd& p) {
            auto cc = c;
            cc.set_params(p);
            return mtgp::negative_log_marginal_likelihood(cc, data);
          },
          c.params(), 1e-5);
      ASSERT_EQ(g.size(), fd.size());
      for (Eigen::Index i = 0; i < g.size(); ++i)
        EXPECT_LE(oracle::rel_err(g[i], fd[i]), 1e-5) << to_string(method) << " param " << i;
    }
  }
}

TEST(NlmlGradient, NoiseGradientDecouplesAcrossIndependentTasks) {
  std::mt19937_64 rng(9);
  auto c = mtgp::make_sc(2, KernelSpec::se(1.0, 0.6), 2);  // B = 0 -> diagonal task matrix
  c.task_noise_log << std::log(0.1), std::log(0.3);
  auto data = random_full_grid(4, 2, rng);
  const int off = c.task_noise_offset();
  const Eigen::VectorXd g1 = mtgp::nlml_gradient(c, data);
  for (auto& o : data.obs)
    if (o.task == 1) o.value *= -3.0;
  const Eigen::VectorXd g2 = mtgp::nlml_gradient(c, data);
  EXPECT_NEAR(g1[off], g2[off], 1e-12);
  EXPECT_GT(std::abs(g1[off + 1] - g2[off + 1]), 1e-6);
}

// --------------------------------------------------------------- predict

TEST(Predict, SingleTaskReduction) {
  std::mt19937_64 rng(10);
  const auto x = oracle::random_inputs(6, 2, rng);
  const auto xs = oracle::random_inputs(4, 2, rng);
  const Eigen::VectorXd y = oracle::random_vector(6, rng);
  auto c = mtgp::make_gp(KernelSpec::se(1.3, 0.7), 0.05);
  const mtgp::FittedModel model(c, oracle::full_grid(x, 1, y));
  Eigen::MatrixXd kxx = oracle::gram(c.terms[0].kernel, x, x);
  kxx.diagonal().array() += 0.05;
  const auto ref = oracle::condition(kxx, oracle::gram(c.terms[0].kernel, xs, x),
                                     oracle::gram(c.terms[0].kernel, xs, xs), y);
  EXPECT_LE((model.predict_mean(xs, 0) - ref.mean).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((model.predict_variance(xs, 0) - ref.cov.diagonal()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Predict, InterpolatesWithTinyNoise) {
  std::mt19937_64 rng(11);
  const auto c0 = oracle::random_config(Method::COMP, 2, rng);
  auto c = c0;
  c.task_noise_log.setConstant(std::log(1e-12));
  auto data = random_full_grid(4, 2, rng);
  data.obs.erase(data.obs.begin() + 2);
  const mtgp::FittedModel model(c, data);
  for (const auto& o : data.obs) {
    EXPECT_NEAR(model.predict_mean(data.x.row(o.input), o.task)[0], o.value, 1e-6);
  }
}

TEST(Predict, DiagonalTaskMatricesDecouple) {
  std::mt19937_64 rng(12);
  auto c = mtgp::make_comp(2, KernelSpec::se(1.0, 0.5), KernelSpec::nn(0.8, 1.2), 0, 0);
  auto data = random_full_grid(5, 2, rng);
  const auto xs = oracle::random_inputs(3, 3, rng);
  const Eigen::VectorXd before = mtgp::FittedModel(c, data).predict_mean(xs, 0);
  for (auto& o : data.obs)
    if (o.task == 1) o.value += 10.0;
  EXPECT_EQ(mtgp::FittedModel(c, data).predict_mean(xs, 0), before);
}

TEST(Predict, VarianceSmallerNearData) {
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 0.05, -0.05;
  ObservationSet data{x, 1, {{0, 0, 1.0}, {1, 0, 1.1}, {2, 0, 0.9}}};
  const mtgp::FittedModel model(mtgp::make_gp(KernelSpec::se(1.0, 0.5), 1e-4), data);
  Eigen::MatrixXd q(2, 1);
  q << 0.0, 5.0;
  const auto v = model.predict_variance(q, 0);
  EXPECT_LE(v[0], v[1]);
}

TEST(Predict, PriorVarianceWithoutCoupledData) {
  std::mt19937_64 rng(13);
  auto c = mtgp::make_sc(2, KernelSpec::sum(1.0, 0.5, 0.7, 1.1), 0, 0.1);
  c.terms[0].task.a0 = 1.3;
  auto data = random_full_grid(4, 2, rng).only_task(1);
  const mtgp::FittedModel model(c, data);
  const auto xs = oracle::random_inputs(3, 3, rng);
  const Eigen::VectorXd prior = oracle::prior_cov(c, xs, 0).diagonal();
  EXPECT_LE((model.predict_variance(xs, 0) - prior).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predict, ShapeErrors) {
  std::mt19937_64 rng(14);
  const mtgp::FittedModel model(mtgp::make_gp(KernelSpec::se(1, 1)), random_full_grid(3, 1, rng));
  EXPECT_THROW(model.predict_mean(Eigen::MatrixXd::Zero(1, 2), 0), mtgp::ShapeError);
  EXPECT_THROW(model.predict_mean(Eigen::MatrixXd::Zero(1, 3), 1), mtgp::ShapeError);
}

// ------------------------------------------------------------- invariants

TEST(Invariants, ZeroSecondTermReducesToSharedCovariance) {
  std::mt19937_64 rng(15);
  auto comp = oracle::random_config(Method::COMP, 2, rng);
  comp.terms[1].task.a0 = 0.0;
  comp.terms[1].task.b.setZero();
  ModelConfig sc;
  sc.terms = {comp.terms[0]};
  sc.task_noise_log = comp.task_noise_log;
  auto data = random_full_grid(5, 2, rng);
  data.obs.erase(data.obs.begin() + 7);
  const auto xs = oracle::random_inputs(4, 3, rng);
  for (int l = 0; l < 2; ++l) {
    EXPECT_LE((mtgp::FittedModel(comp, data).predict_mean(xs, l) -
               mtgp::FittedModel(sc, data).predict_mean(xs, l)).cwiseAbs().maxCoeff(),
              1e-10);
  }
}

TEST(Invariants, PermutingObservationsChangesNothing) {
  std::mt19937_64 rng(16);
  const auto c = oracle::random_config(Method::SN, 3, rng);
  auto data = random_full_grid(4, 3, rng);
  auto shuffled = data;
  std::shuffle(shuffled.obs.begin(), shuffled.obs.end(), rng);
  EXPECT_NEAR(mtgp::negative_log_marginal_likelihood(c, data),
              mtgp::negative_log_marginal_likelihood(c, shuffled), 1e-10);
  const auto xs = oracle::random_inputs(3, 3, rng);
  const mtgp::FittedModel a(c, data), b(c, shuffled);
  for (int l = 0; l < 3; ++l) {
    EXPECT_LE((a.predict_mean(xs, l) - b.predict_mean(xs, l)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((a.predict_variance(xs, l) - b.predict_variance(xs, l)).cwiseAbs().maxCoeff(),
              1e-10);
  }
}

TEST(Invariants, FactorizesWithNoiseFloor) {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    auto c = oracle::random_config(Method::COMP, 3, rng);
    c.task_noise_log.setConstant(std::log(1e-8));
    const auto data = random_full_grid(4, 3, rng);
    EXPECT_NO_THROW(mtgp::FittedModel(c, data));
  }
}

TEST(ModelConfig, FlatteningOrder) {
  Eigen::MatrixXd b(2, 1);
  b << 0.1, 0.2;
  ModelConfig c;
  c.terms.push_back({mtgp::TaskCorrMatrix(0.5, b), KernelSpec::se(1.0, 2.0)});
  c.noise = mtgp::TaskCorrMatrix(2, 0, 0.3);
  c.task_noise_log = Eigen::Vector2d(-1.0, -2.0);
  Eigen::VectorXd expected(8);
  expected << 0.5, 0.1, 0.2, 0.0, std::log(2.0), 0.3, -1.0, -2.0;
  EXPECT_EQ(c.params(), expected);
  EXPECT_EQ(c.task_noise_offset(), 6);
  auto d = c;
  d.set_params(expected);
  EXPECT_EQ(d.params(), expected);
}

// ------------------------------------------------------------------- fit

TEST(Fit, RecoversLengthScaleFromPrior) {
  std::mt19937_64 rng(18);
  const int n = 40;
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = -3.0 + 6.0 * i / (n - 1.0);
  const double true_ls = 0.8;
  Eigen::MatrixXd k = oracle::gram(KernelSpec::se(1.0, true_ls), x, x);
  k.diagonal().array() += 0.01;
  const Eigen::VectorXd y = k.llt().matrixL() * oracle::random_vector(n, rng);
  mtgp::OptimizerSettings opt;
  opt.seed = 3;
  const auto r = mtgp::fit(mtgp::make_gp(KernelSpec::se(1, 1)), oracle::full_grid(x, 1, y), opt);
  EXPECT_NEAR(r.model.config().terms[0].kernel.log_hypers[1], std::log(true_ls), 0.5);
}

TEST(Fit, DeterministicAndSelectsMinimum) {
  std::mt19937_64 rng(19);
  const auto data = random_full_grid(6, 2, rng, 2);
  mtgp::OptimizerSettings opt;
  opt.seed = 42;
  opt.max_iterations = 60;
  const auto structure = mtgp::make_comp(2, KernelSpec::se(1, 1), KernelSpec::nn(1, 1), 1, 1);
  const auto a = mtgp::fit(structure, data, opt);
  const auto b = mtgp::fit(structure, data, opt);
  EXPECT_EQ(a.model.config().params(), b.model.config().params());
  ASSERT_EQ(a.optimization.runs.size(), 5u);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& run : a.optimization.runs) {
    ASSERT_TRUE(run.has_value());
    best = std::min(best, run->f);
    EXPECT_LE(a.model.nlml(), run->f_initial + 1e-9);
  }
  EXPECT_NEAR(a.model.nlml(), best, 1e-9);
}

TEST(Fit, GradientSmallAtOptimum) {
  std::mt19937_64 rng(20);
  Eigen::MatrixXd x = oracle::random_inputs(15, 1, rng);
  Eigen::VectorXd y(15);
  for (int i = 0; i < 15; ++i) y[i] = std::sin(3.0 * x(i, 0)) + 0.1 * oracle::random_vector(1, rng)[0];
  mtgp::OptimizerSettings opt;
  opt.max_iterations = 500;
  const auto data = oracle::full_grid(x, 1, y);
  const auto r = mtgp::fit(mtgp::make_gp(KernelSpec::se(1, 1)), data, opt);
  ASSERT_EQ(r.optimization.best.reason, mtgp::Termination::Gradient);
  EXPECT_LE(mtgp::nlml_gradient(r.model.config(), data).lpNorm<Eigen::Infinity>(), 1e-4);
}

}  // namespace
