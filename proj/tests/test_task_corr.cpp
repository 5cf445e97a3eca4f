#include <gtest/gtest.h>

#include <random>

#include "mtgp/task_corr.hpp"

namespace {

using mtgp::TaskCorrMatrix;

TaskCorrMatrix random_tc(int m, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  TaskCorrMatrix tc(m, k, n01(rng));
  for (Eigen::Index i = 0; i < tc.b.size(); ++i) tc.b.data()[i] = n01(rng);
  return tc;
}

double min_eig(const Eigen::MatrixXd& a) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues().minCoeff();
}

TEST(TaskCorr, IdentityCase) {
  EXPECT_EQ(mtgp::materialize(TaskCorrMatrix(2, 0, 1.0)), Eigen::MatrixXd::Identity(2, 2));
}

TEST(TaskCorr, RankOneOuterProduct) {
  Eigen::MatrixXd b(2, 1);
  b << 1.0, 1.0;
  EXPECT_EQ(mtgp::materialize(TaskCorrMatrix(0.0, b)), Eigen::MatrixXd::Ones(2, 2));
}

TEST(TaskCorr, LowRankPartIsPsd) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const auto tc = random_tc(3, 2, rng);
    const Eigen::MatrixXd low =
        mtgp::materialize(tc) - tc.a0 * tc.a0 * Eigen::MatrixXd::Identity(3, 3);
    EXPECT_GE(min_eig(low), -1e-10);
  }
}

TEST(TaskCorr, ZeroFactorIsExactlyScaledIdentity) {
  TaskCorrMatrix tc(4, 2, 0.37);
  EXPECT_EQ(mtgp::materialize(tc), (0.37 * 0.37) * Eigen::MatrixXd::Identity(4, 4));
}

TEST(TaskCorr, ColumnSignFlipInvariance) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    auto tc = random_tc(3, 3, rng);
    const Eigen::MatrixXd a = mtgp::materialize(tc);
    tc.b.col(rep % 3) *= -1.0;
    EXPECT_TRUE(mtgp::materialize(tc).isApprox(a, 1e-15));
  }
}

TEST(TaskCorr, RandomMaterializationsArePsd) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 5);
  for (int rep = 0; rep < 200; ++rep) {
    const int m = dim(rng);
    const auto tc = random_tc(m, std::uniform_int_distribution<int>(0, m)(rng), rng);
    const Eigen::MatrixXd a = mtgp::materialize(tc);
    EXPECT_EQ(a, a.transpose());
    EXPECT_GE(min_eig(a), -1e-10);
  }
}

TEST(TaskCorr, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    auto tc = random_tc(3, 1 + rep % 3, rng);
    const auto grads = mtgp::task_corr_grad(tc);
    ASSERT_EQ(static_cast<int>(grads.size()), tc.num_params());
    const Eigen::VectorXd p = tc.params();
    for (int k = 0; k < tc.num_params(); ++k) {
      Eigen::VectorXd up = p, down = p;
      up[k] += 1e-6;
      down[k] -= 1e-6;
      TaskCorrMatrix a = tc, b = tc;
      a.set_params(up);
      b.set_params(down);
      const Eigen::MatrixXd fd = (mtgp::materialize(a) - mtgp::materialize(b)) / 2e-6;
      EXPECT_LE((fd - grads[k]).cwiseAbs().maxCoeff(), 1e-6);
      EXPECT_EQ(grads[k], grads[k].transpose());
    }
  }
}

TEST(TaskCorr, RankZeroHasOnlyScaleGradient) {
  TaskCorrMatrix tc(3, 0, 0.8);
  const auto grads = mtgp::task_corr_grad(tc);
  ASSERT_EQ(grads.size(), 1u);
  EXPECT_EQ(grads[0], 1.6 * Eigen::MatrixXd::Identity(3, 3));
}

TEST(TaskCorr, FactorEntryTouchesOnlyItsRowAndColumn) {
  std::mt19937_64 rng(5);
  auto tc = random_tc(4, 1, rng);
  const Eigen::MatrixXd before = mtgp::materialize(tc);
  tc.b(0, 0) += 0.25;
  const Eigen::MatrixXd diff = mtgp::materialize(tc) - before;
  for (int i = 1; i < 4; ++i)
    for (int j = 1; j < 4; ++j) EXPECT_EQ(diff(i, j), 0.0);
  EXPECT_NE(diff(0, 0), 0.0);
}

TEST(TaskCorr, ParamsRoundTripColumnMajor) {
  Eigen::MatrixXd b(2, 2);
  b << 1, 2, 3, 4;
  TaskCorrMatrix tc(0.5, b);
  Eigen::VectorXd expected(5);
  expected << 0.5, 1, 3, 2, 4;
  EXPECT_EQ(tc.params(), expected);
}

TEST(TaskCorr, Errors) {
  EXPECT_THROW(TaskCorrMatrix(2, 3), mtgp::ParameterError);
  EXPECT_THROW(TaskCorrMatrix(0, 0), mtgp::ParameterError);
  TaskCorrMatrix tc(2, 1);
  tc.a0 = std::numeric_limits<double>::infinity();
  EXPECT_THROW(mtgp::materialize(tc), mtgp::ParameterError);
}

}  // namespace
