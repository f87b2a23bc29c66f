#include <random>

#include <gtest/gtest.h>

#include "expsel/gaussian_fd.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace expsel;

namespace {

FeatureSet with_embeddings(std::uint32_t d, std::vector<float> emb) {
  const std::size_t n = emb.size() / d;
  return testutil::make_set("g", 1, 1, d, std::vector<float>(n, 0.f), std::move(emb));
}

GaussianSummary summary(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  return GaussianSummary{10, std::move(mean), std::move(cov)};
}

Eigen::MatrixXd random_psd(std::mt19937_64& rng, int dim, int rank) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd b(dim, rank);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < rank; ++j) b(i, j) = g(rng);
  return b * b.transpose();
}

GaussianSummary random_summary(std::mt19937_64& rng, int dim, int rank) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd mean(dim);
  for (int i = 0; i < dim; ++i) mean(i) = g(rng);
  return summary(mean, random_psd(rng, dim, rank));
}

}  // namespace

TEST(FitGaussian, TwoPoints) {
  const auto g = fit_gaussian(with_embeddings(2, {0.f, 0.f, 2.f, 0.f}));
  EXPECT_EQ(g.count, 2u);
  EXPECT_EQ(g.mean, Eigen::Vector2d(1.0, 0.0));
  Eigen::Matrix2d expected;
  expected << 2.0, 0.0, 0.0, 0.0;
  EXPECT_EQ(g.covariance, Eigen::MatrixXd(expected));
}

TEST(FitGaussian, IdenticalEmbeddingsGiveZeroCovariance) {
  const auto g = fit_gaussian(with_embeddings(3, {1.f, 2.f, 3.f, 1.f, 2.f, 3.f, 1.f, 2.f, 3.f}));
  EXPECT_TRUE(g.covariance.isZero(0.0));
}

TEST(FitGaussian, MatchesDoubleLoopCovariance) {
  std::mt19937_64 rng(10);
  std::normal_distribution<float> g(0.0f, 2.0f);
  std::vector<float> emb(10 * 4);
  for (auto& v : emb) v = g(rng);
  std::vector<std::vector<double>> rows(10, std::vector<double>(4));
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 4; ++j) rows[i][j] = emb[i * 4 + j];

  const auto fit = fit_gaussian(with_embeddings(4, emb));
  const auto cov = oracle::covariance(rows);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) EXPECT_NEAR(fit.covariance(a, b), cov[a][b], 1e-12);
  }
  EXPECT_EQ(fit.covariance, Eigen::MatrixXd(fit.covariance.transpose()));
}

TEST(FitGaussian, NeedsTwoImages) {
  try {
    fit_gaussian(with_embeddings(2, {1.f, 2.f}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewImages);
  }
}

TEST(Frechet, IdenticalGaussiansAreZero) {
  std::mt19937_64 rng(1);
  for (int dim : {1, 4, 16}) {
    const auto g = random_summary(rng, dim, dim);
    EXPECT_LE(frechet_distance(g, g), 1e-6);
  }
}

TEST(Frechet, OneDimensionalClosedForm) {
  const auto a = summary(Eigen::VectorXd::Constant(1, 0.0), Eigen::MatrixXd::Constant(1, 1, 1.0));
  const auto b = summary(Eigen::VectorXd::Constant(1, 3.0), Eigen::MatrixXd::Constant(1, 1, 4.0));
  EXPECT_NEAR(frechet_distance(a, b), std::sqrt(10.0), 1e-9);
}

TEST(Frechet, CommutingCovariancesClosedForm) {
  const auto a = summary(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 4).asDiagonal().toDenseMatrix());
  const auto b = summary(Eigen::Vector2d(1, 1), Eigen::Vector2d(4, 1).asDiagonal().toDenseMatrix());
  EXPECT_NEAR(frechet_distance(a, b), 2.0, 1e-9);
}

TEST(Frechet, SymmetricAndBoundedBelowByMeanGap) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + static_cast<int>(rng() % 12);
    const auto a = random_summary(rng, dim, dim);
    const auto b = random_summary(rng, dim, dim);
    const double ab = frechet_distance(a, b);
    EXPECT_NEAR(ab, frechet_distance(b, a), 1e-8);
    EXPECT_GE(ab, (a.mean - b.mean).norm() - 1e-9);
  }
}

TEST(Frechet, RankDeficientCovariancesDoNotFail) {
  std::mt19937_64 rng(3);
  const auto a = random_summary(rng, 64, 10);
  const auto b = random_summary(rng, 64, 5);
  double d = 0.0;
  EXPECT_NO_THROW(d = frechet_distance(a, b));
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_LE(frechet_distance(a, a), 1e-4);

  // N < D straight from embeddings.
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> e1(5 * 32), e2(7 * 32);
  for (auto& v : e1) v = g(rng);
  for (auto& v : e2) v = g(rng);
  EXPECT_NO_THROW(frechet_distance(fit_gaussian(with_embeddings(32, e1)), fit_gaussian(with_embeddings(32, e2))));
}

TEST(Frechet, DimensionMismatch) {
  std::mt19937_64 rng(4);
  try {
    frechet_distance(random_summary(rng, 3, 3), random_summary(rng, 4, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimMismatch);
  }
}

TEST(Frechet, NonFiniteInputIsEigenFailure) {
  std::mt19937_64 rng(5);
  auto a = random_summary(rng, 3, 3);
  a.covariance(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    frechet_distance(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EigenFailure);
  }
}

TEST(PsdSqrt, SquaresBackToInput) {
  std::mt19937_64 rng(6);
  for (int rank : {16, 12, 4, 1}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::MatrixXd a = random_psd(rng, 16, rank);
      const Eigen::MatrixXd r = psd_sqrt(a);
      EXPECT_LE((r * r - a).norm() / a.norm(), 1e-8) << "rank " << rank;
    }
  }
}

TEST(GaussianSerialisation, RoundTrip) {
  std::mt19937_64 rng(7);
  const auto g = random_summary(rng, 5, 5);
  const auto back = decode_gaussian(encode_gaussian_payload(g), gaussian_json(g));
  EXPECT_EQ(back.count, g.count);
  EXPECT_EQ(back.mean, g.mean);
  EXPECT_EQ(back.covariance, g.covariance);
  EXPECT_EQ(encode_gaussian_payload(g).size(), (5 + 25) * sizeof(double));
}
