#include "ptd/estimators.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "ptd/design.hpp"
#include "ptd/matrix.hpp"
#include "ptd/rng.hpp"
#include "test_util.hpp"

using ptd::EstimatorKind;
using ptd::EstimatorSpec;
using ptd::FitResult;
using ptd::Matrix;
using ptd::RngStream;
using ptd::WeightVector;

namespace {

EstimatorSpec mean_spec(std::size_t columns = 1) {
  EstimatorSpec spec;
  spec.kind = EstimatorKind::kMean;
  spec.include_intercept = false;
  for (std::size_t j = 0; j < columns; ++j) spec.covariate_columns.push_back(j);
  return spec;
}

EstimatorSpec regression_spec(EstimatorKind kind, std::size_t dz, double q = 0.5) {
  EstimatorSpec spec;
  spec.kind = kind;
  spec.quantile_level = q;
  spec.response_column = 0;
  for (std::size_t j = 0; j < dz; ++j) spec.covariate_columns.push_back(j + 1);
  spec.include_intercept = true;
  return spec;
}

// Dense linear solve by Gaussian elimination with partial pivoting; the
// brute-force oracle route, independent of the library's Cholesky path.
std::vector<long double> gauss_solve(std::vector<std::vector<long double>> a,
                                     std::vector<long double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(static_cast<double>(a[r][col])) >
          std::abs(static_cast<double>(a[pivot][col])))
        pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const long double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<long double> x(n, 0.0L);
  for (std::size_t ri = n; ri-- > 0;) {
    long double s = b[ri];
    for (std::size_t c = ri + 1; c < n; ++c) s -= a[ri][c] * x[c];
    x[ri] = s / a[ri][ri];
  }
  return x;
}

// 20-row fixed logistic dataset (response, covariate); not separable.
Matrix fixed_logistic_data() {
  return Matrix::from_rows({{0, -1.2}, {0, -0.7}, {1, -0.5}, {0, -0.4}, {0, -0.1},
                            {1, 0.0},  {0, 0.2},  {1, 0.3},  {0, 0.5},  {1, 0.6},
                            {1, 0.8},  {0, 0.9},  {1, 1.1},  {1, 1.3},  {0, 1.4},
                            {1, 1.6},  {1, 1.9},  {1, 2.2},  {0, 2.4},  {1, 2.8}});
}

// Independent Newton solver for the weighted logistic score equations,
// run in extended precision without damping.
std::vector<double> logistic_newton_oracle(const Matrix& data, const WeightVector& w) {
  std::array<long double, 2> beta{0.0L, 0.0L};
  for (int iter = 0; iter < 60; ++iter) {
    std::vector<std::vector<long double>> h(2, std::vector<long double>(2, 0.0L));
    std::vector<long double> g(2, 0.0L);
    for (std::size_t i = 0; i < data.rows(); ++i) {
      if (w[i] <= 0.0) continue;
      const long double x0 = 1.0L, x1 = data(i, 1);
      const long double t = beta[0] * x0 + beta[1] * x1;
      const long double p = 1.0L / (1.0L + std::exp(static_cast<double>(-t)));
      const long double r = data(i, 0) - p;
      g[0] += w[i] * r * x0;
      g[1] += w[i] * r * x1;
      const long double v = w[i] * p * (1.0L - p);
      h[0][0] += v * x0 * x0;
      h[0][1] += v * x0 * x1;
      h[1][0] += v * x1 * x0;
      h[1][1] += v * x1 * x1;
    }
    const auto step = gauss_solve(h, g);
    beta[0] += step[0];
    beta[1] += step[1];
    if (std::abs(static_cast<double>(step[0])) + std::abs(static_cast<double>(step[1])) < 1e-14)
      break;
  }
  return {static_cast<double>(beta[0]), static_cast<double>(beta[1])};
}

}  // namespace

TEST(Fit, MeanUnweighted) {
  const Matrix data = Matrix::from_rows({{1}, {2}, {3}});
  const FitResult fr = ptd::fit(mean_spec(), data, {1, 1, 1});
  ASSERT_EQ(fr.theta.size(), 1u);
  EXPECT_DOUBLE_EQ(fr.theta[0], 2.0);
  EXPECT_EQ(fr.effective_rows, 3u);
}

TEST(Fit, MeanDropsZeroWeightRows) {
  const Matrix data = Matrix::from_rows({{1}, {2}, {3}});
  const FitResult fr = ptd::fit(mean_spec(), data, {0, 0, 3});
  EXPECT_DOUBLE_EQ(fr.theta[0], 3.0);
  EXPECT_EQ(fr.effective_rows, 1u);
}

TEST(Fit, OlsExactLinearRelation) {
  const Matrix data = Matrix::from_rows({{2, 1}, {4, 2}, {6, 3}});
  const FitResult fr = ptd::fit(regression_spec(EstimatorKind::kOls, 1), data, {1, 1, 1});
  ASSERT_EQ(fr.theta.size(), 2u);
  EXPECT_NEAR(fr.theta[0], 0.0, 1e-12);
  EXPECT_NEAR(fr.theta[1], 2.0, 1e-12);
}

TEST(Fit, LogisticMatchesIndependentNewtonOracle) {
  const Matrix data = fixed_logistic_data();
  const WeightVector w(20, 1.0);
  const FitResult fr = ptd::fit(regression_spec(EstimatorKind::kLogistic, 1), data, w);
  const auto oracle = logistic_newton_oracle(data, w);
  EXPECT_NEAR(fr.theta[0], oracle[0], 1e-6);
  EXPECT_NEAR(fr.theta[1], oracle[1], 1e-6);
  EXPECT_TRUE(fr.converged);
}

TEST(Fit, LogisticWeightedMatchesOracle) {
  const Matrix data = fixed_logistic_data();
  WeightVector w(20, 1.0);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 + static_cast<double>(i % 4);
  const FitResult fr = ptd::fit(regression_spec(EstimatorKind::kLogistic, 1), data, w);
  const auto oracle = logistic_newton_oracle(data, w);
  EXPECT_NEAR(fr.theta[0], oracle[0], 1e-6);
  EXPECT_NEAR(fr.theta[1], oracle[1], 1e-6);
}

TEST(Fit, OlsAgreesWithBruteForceNormalEquations) {
  RngStream rng(21);
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t n = 20 + rng.next_below(180);
    const std::size_t dz = 1 + rng.next_below(5);
    Matrix data(n, dz + 1);
    WeightVector w(n);
    for (std::size_t i = 0; i < n; ++i) {
      double y = rng.next_normal();
      for (std::size_t j = 0; j < dz; ++j) {
        data(i, j + 1) = rng.next_normal();
        y += 0.5 * data(i, j + 1);
      }
      data(i, 0) = y;
      w[i] = rng.next_double() < 0.2 ? 0.0 : 0.25 + 2.0 * rng.next_double();
    }
    const auto spec = regression_spec(EstimatorKind::kOls, dz);
    const std::size_t d = spec.dimension();
    FitResult fr;
    try {
      fr = ptd::fit(spec, data, w);
    } catch (const ptd::InsufficientDataError&) {
      continue;
    }
    // Brute-force weighted normal equations in extended precision.
    std::vector<std::vector<long double>> xtwx(d, std::vector<long double>(d, 0.0L));
    std::vector<long double> xtwy(d, 0.0L);
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] <= 0.0) continue;
      std::vector<long double> x(d);
      x[0] = 1.0L;
      for (std::size_t j = 0; j < dz; ++j) x[j + 1] = data(i, j + 1);
      for (std::size_t a = 0; a < d; ++a) {
        xtwy[a] += w[i] * x[a] * static_cast<long double>(data(i, 0));
        for (std::size_t b = 0; b < d; ++b) xtwx[a][b] += w[i] * x[a] * x[b];
      }
    }
    const auto oracle = gauss_solve(xtwx, xtwy);
    for (std::size_t j = 0; j < d; ++j)
      EXPECT_NEAR(fr.theta[j], static_cast<double>(oracle[j]), 1e-8) << "rep=" << rep;
  }
}

TEST(Fit, WeightScaleInvariance) {
  RngStream rng(22);
  const std::size_t n = 60;
  Matrix data(n, 2);
  WeightVector w(n);
  for (std::size_t i = 0; i < n; ++i) {
    data(i, 1) = rng.next_normal();
    data(i, 0) = rng.next_double() < ptd::detail::sigmoid(0.7 * data(i, 1)) ? 1.0 : 0.0;
    w[i] = 0.5 + rng.next_double();
  }
  WeightVector w_scaled = w;
  for (double& v : w_scaled) v *= 37.5;
  for (EstimatorKind kind :
       {EstimatorKind::kOls, EstimatorKind::kLogistic, EstimatorKind::kQuantile}) {
    const auto spec = regression_spec(kind, 1, 0.3);
    const FitResult a = ptd::fit(spec, data, w);
    const FitResult b = ptd::fit(spec, data, w_scaled);
    EXPECT_LE(ptd_test::max_abs_diff(a.theta, b.theta), 1e-10);
  }
  const FitResult a = ptd::fit(mean_spec(1), data, w);
  const FitResult b = ptd::fit(mean_spec(1), data, w_scaled);
  EXPECT_LE(ptd_test::max_abs_diff(a.theta, b.theta), 1e-12);
}

TEST(Fit, ZeroWeightRowsHaveNoInfluence) {
  RngStream rng(23);
  const std::size_t n = 40;
  Matrix data(n, 2);
  WeightVector w(n);
  for (std::size_t i = 0; i < n; ++i) {
    data(i, 1) = rng.next_normal();
    data(i, 0) = 1.5 * data(i, 1) + rng.next_normal();
    w[i] = i % 3 == 0 ? 0.0 : 1.0;
  }
  Matrix poisoned = data;
  for (std::size_t i = 0; i < n; ++i)
    if (w[i] == 0.0) {
      poisoned(i, 0) = ptd::kMissing;
      poisoned(i, 1) = 1e9;
    }
  for (EstimatorKind kind : {EstimatorKind::kOls, EstimatorKind::kQuantile}) {
    const auto spec = regression_spec(kind, 1);
    const FitResult clean = ptd::fit(spec, data, w);
    const FitResult dirty = ptd::fit(spec, poisoned, w);
    for (std::size_t j = 0; j < clean.theta.size(); ++j)
      EXPECT_EQ(clean.theta[j], dirty.theta[j]);
  }
}

TEST(Fit, InsufficientDataThrows) {
  const Matrix data = Matrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_THROW(ptd::fit(regression_spec(EstimatorKind::kOls, 1), data, {1, 0}),
               ptd::InsufficientDataError);
}

TEST(Fit, RankDeficientDesignThrows) {
  // Constant covariate collides with the intercept.
  const Matrix data = Matrix::from_rows({{1, 2}, {2, 2}, {3, 2}, {4, 2}});
  EXPECT_THROW(ptd::fit(regression_spec(EstimatorKind::kOls, 1), data, {1, 1, 1, 1}),
               ptd::RankDeficientError);
}

TEST(Fit, QuantileResidualFractionNearLevel) {
  RngStream rng(24);
  for (double q : {0.25, 0.5, 0.7}) {
    const std::size_t n = 400;
    Matrix data(n, 2);
    WeightVector w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      data(i, 1) = rng.next_normal();
      data(i, 0) = 1.0 + 2.0 * data(i, 1) + rng.next_normal();
    }
    const auto spec = regression_spec(EstimatorKind::kQuantile, 1, q);
    const FitResult fr = ptd::fit(spec, data, w);
    double below = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fitv = fr.theta[0] + fr.theta[1] * data(i, 1);
      if (data(i, 0) - fitv < 0.0) below += 1.0;
    }
    EXPECT_NEAR(below / n, q, 1.0 / static_cast<double>(fr.effective_rows) + 1e-12)
        << "q=" << q;
  }
}

TEST(Fit, QuantileMarginalMatchesSampleQuantile) {
  RngStream rng(25);
  const std::size_t n = 200;
  Matrix data(n, 1);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    data(i, 0) = rng.next_normal();
    values[i] = data(i, 0);
  }
  EstimatorSpec spec;
  spec.kind = EstimatorKind::kQuantile;
  spec.quantile_level = 0.5;
  spec.response_column = 0;
  spec.include_intercept = true;
  const FitResult fr = ptd::fit(spec, data, WeightVector(n, 1.0));
  EXPECT_NEAR(fr.theta[0], ptd::empirical_quantile(values, 0.5), 0.02);
}

TEST(Score, MeanVanishesAtWeightedMean) {
  const Matrix data = Matrix::from_rows({{1}, {2}, {4}});
  const WeightVector w{1, 2, 1};
  const FitResult fr = ptd::fit(mean_spec(), data, w);
  const auto g = ptd::score(mean_spec(), data, w, fr.theta);
  EXPECT_NEAR(g[0], 0.0, 1e-14);
}

TEST(Score, OlsVanishesAtFit) {
  RngStream rng(26);
  const std::size_t n = 50;
  Matrix data(n, 2);
  WeightVector w(n);
  for (std::size_t i = 0; i < n; ++i) {
    data(i, 1) = rng.next_normal();
    data(i, 0) = 0.5 - data(i, 1) + 0.3 * rng.next_normal();
    w[i] = 0.2 + rng.next_double();
  }
  const auto spec = regression_spec(EstimatorKind::kOls, 1);
  const FitResult fr = ptd::fit(spec, data, w);
  for (double g : ptd::score(spec, data, w, fr.theta)) EXPECT_NEAR(g, 0.0, 1e-10);
}

TEST(Score, LogisticScoreWithinToleranceAtFit) {
  const Matrix data = fixed_logistic_data();
  const WeightVector w(20, 1.0);
  const auto spec = regression_spec(EstimatorKind::kLogistic, 1);
  const FitResult fr = ptd::fit(spec, data, w);
  for (double g : ptd::score(spec, data, w, fr.theta)) EXPECT_LE(std::abs(g), 1e-8);
}

TEST(Score, LogisticMatchesFiniteDifferences) {
  const Matrix data = fixed_logistic_data();
  WeightVector w(20);
  for (std::size_t i = 0; i < 20; ++i) w[i] = 0.5 + 0.1 * static_cast<double>(i);
  const auto spec = regression_spec(EstimatorKind::kLogistic, 1);
  const std::vector<double> theta{0.17, -0.42};

  auto weighted_loss = [&](const std::vector<double>& beta) {
    double wsum = 0.0, loss = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      const double t = beta[0] + beta[1] * data(i, 1);
      loss += w[i] * (std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))) - data(i, 0) * t);
      wsum += w[i];
    }
    return loss / wsum;
  };
  const auto g = ptd::score(spec, data, w, theta);
  const double h = 1e-6;
  for (std::size_t j = 0; j < 2; ++j) {
    std::vector<double> up = theta, down = theta;
    up[j] += h;
    down[j] -= h;
    const double fd = (weighted_loss(up) - weighted_loss(down)) / (2.0 * h);
    EXPECT_NEAR(g[j], fd, 1e-5);
  }
}

TEST(Sandwich, MeanReducesToSampleVarianceOverN) {
  RngStream rng(27);
  const std::size_t n = 31;
  Matrix data(n, 1);
  for (std::size_t i = 0; i < n; ++i) data(i, 0) = rng.next_normal() * 2.0 + 1.0;
  const WeightVector w(n, 1.0);
  const FitResult fr = ptd::fit(mean_spec(), data, w);
  const Matrix v = ptd::sandwich_covariance(mean_spec(), data, w, fr.theta);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = data(i, 0) - fr.theta[0];
    ss += c * c;
  }
  const double expected = ss / static_cast<double>(n) / static_cast<double>(n);
  EXPECT_NEAR(v(0, 0), expected, 1e-10 * expected);
}

TEST(Sandwich, InvariantToWeightDoubling) {
  RngStream rng(28);
  const std::size_t n = 80;
  Matrix data(n, 2);
  WeightVector w(n);
  for (std::size_t i = 0; i < n; ++i) {
    data(i, 1) = rng.next_normal();
    data(i, 0) = 1.0 + data(i, 1) + rng.next_normal();
    w[i] = i % 4 == 0 ? 0.0 : 1.0 + rng.next_double();
  }
  WeightVector w2 = w;
  for (double& v : w2) v *= 2.0;
  const auto spec = regression_spec(EstimatorKind::kOls, 1);
  const FitResult fr = ptd::fit(spec, data, w);
  const Matrix a = ptd::sandwich_covariance(spec, data, w, fr.theta);
  const Matrix b = ptd::sandwich_covariance(spec, data, w2, fr.theta);
  EXPECT_LE(ptd_test::max_abs_diff(a, b), 1e-12 * a.max_abs());
}

TEST(Sandwich, SymmetricAndPsd) {
  RngStream rng(29);
  const std::size_t n = 120;
  Matrix data(n, 3);
  WeightVector w(n);
  for (std::size_t i = 0; i < n; ++i) {
    data(i, 1) = rng.next_normal();
    data(i, 2) = rng.next_normal();
    data(i, 0) = 0.4 + data(i, 1) - 0.5 * data(i, 2) + rng.next_normal();
    w[i] = 0.25 + rng.next_double();
  }
  for (EstimatorKind kind :
       {EstimatorKind::kOls, EstimatorKind::kQuantile}) {
    const auto spec = regression_spec(kind, 2);
    const FitResult fr = ptd::fit(spec, data, w);
    Matrix v = ptd::sandwich_covariance(spec, data, w, fr.theta);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(v(i, j), v(j, i), 1e-12);
    // PSD within a -1e-10 eigenvalue tolerance, checked via Cholesky attempt.
    double trace = 0.0;
    for (std::size_t j = 0; j < 3; ++j) trace += v(j, j);
    for (std::size_t j = 0; j < 3; ++j) v(j, j) += 1e-10 * trace;
    EXPECT_NO_THROW(ptd::cholesky(v));
  }
}

TEST(Sandwich, OlsMatchesBootstrapCovarianceOracle) {
  RngStream rng(30);
  const std::size_t n = 10000;
  Matrix data(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    data(i, 1) = rng.next_normal();
    data(i, 2) = rng.next_normal();
    data(i, 0) = 1.0 + 0.8 * data(i, 1) - 0.6 * data(i, 2) + rng.next_normal();
  }
  const WeightVector w(n, 1.0);
  const auto spec = regression_spec(EstimatorKind::kOls, 2);
  const FitResult fr = ptd::fit(spec, data, w);
  const Matrix v = ptd::sandwich_covariance(spec, data, w, fr.theta);

  constexpr std::size_t kRefits = 2000;
  Matrix draws(kRefits, 3);
  std::vector<std::int32_t> rows(n);
  std::vector<double> weights(n, 1.0);
  for (std::size_t b = 0; b < kRefits; ++b) {
    RngStream boot = RngStream::derive(777, b);
    for (std::size_t k = 0; k < n; ++k)
      rows[k] = static_cast<std::int32_t>(boot.next_below(n));
    const FitResult refit = ptd::fit_rows(spec, data, rows, weights);
    for (std::size_t j = 0; j < 3; ++j) draws(b, j) = refit.theta[j];
  }
  const Matrix boot_cov = ptd::sample_covariance(draws);
  for (std::size_t j = 0; j < 3; ++j)
    EXPECT_NEAR(v(j, j), boot_cov(j, j), 0.15 * boot_cov(j, j)) << "j=" << j;
}

TEST(CrossCovariance, IdenticalProxiesEqualScaledSandwich) {
  RngStream rng(31);
  const std::size_t n = 150;
  Matrix data(n, 2);
  WeightVector w(n);
  for (std::size_t i = 0; i < n; ++i) {
    data(i, 1) = rng.next_normal();
    data(i, 0) = 0.3 + 0.9 * data(i, 1) + rng.next_normal();
    w[i] = i % 5 == 0 ? 0.0 : 1.0 + rng.next_double();
  }
  const auto spec = regression_spec(EstimatorKind::kOls, 1);
  const FitResult fr = ptd::fit(spec, data, w);
  const Matrix cross =
      ptd::cross_covariance_mest(spec, data, data, w, fr.theta, fr.theta);
  const Matrix scaled =
      ptd::sandwich_covariance(spec, data, w, fr.theta).scaled(static_cast<double>(n));
  EXPECT_LE(ptd_test::max_abs_diff(cross, scaled), 1e-10 * scaled.max_abs());
}

TEST(CrossCovariance, IndependentProxiesNearZero) {
  RngStream rng(32);
  const std::size_t n = 20000;
  Matrix truth(n, 1), proxy(n, 1);
  WeightVector w(n);
  std::vector<double> summand(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    truth(i, 0) = rng.next_normal();
    proxy(i, 0) = rng.next_normal();  // independent of the truth
    w[i] = rng.next_double() < 0.5 ? 2.0 : 0.0;
  }
  const auto spec = mean_spec();
  const FitResult theta = ptd::fit(spec, truth, w);
  const FitResult gamma = ptd::fit(spec, proxy, w);
  const Matrix cross =
      ptd::cross_covariance_mest(spec, truth, proxy, w, theta.theta, gamma.theta);
  double wbar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    wbar += w[i];
    summand[i] =
        w[i] * w[i] * (truth(i, 0) - theta.theta[0]) * (proxy(i, 0) - gamma.theta[0]);
  }
  wbar /= static_cast<double>(n);
  double mean = 0.0, ss = 0.0;
  for (double s : summand) mean += s;
  mean /= static_cast<double>(n);
  for (double s : summand) ss += (s - mean) * (s - mean);
  const double mc_se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) /
                       (wbar * wbar);
  EXPECT_LE(std::abs(cross(0, 0)), 3.0 * mc_se);
}

TEST(CrossCovariance, MeanKindMatchesHandFormula) {
  const Matrix truth = Matrix::from_rows({{1.0}, {2.0}, {4.0}, {0.5}});
  const Matrix proxy = Matrix::from_rows({{1.2}, {1.7}, {4.4}, {0.1}});
  const WeightVector w{2.0, 0.0, 1.0, 3.0};
  const auto spec = mean_spec();
  const FitResult theta = ptd::fit(spec, truth, w);
  const FitResult gamma = ptd::fit(spec, proxy, w);
  const Matrix cross =
      ptd::cross_covariance_mest(spec, truth, proxy, w, theta.theta, gamma.theta);
  const double n = 4.0;
  double c12 = 0.0, wbar = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    c12 += w[i] * w[i] * (truth(i, 0) - theta.theta[0]) * (proxy(i, 0) - gamma.theta[0]) / n;
    wbar += w[i] / n;
  }
  EXPECT_NEAR(cross(0, 0), c12 / (wbar * wbar), 1e-12 * std::abs(c12 / (wbar * wbar)));
}

TEST(CrossCovariance, QuantileUnsupported) {
  const Matrix data = Matrix::from_rows({{1, 0}, {2, 1}, {3, 2}, {4, 0.5}});
  const auto spec = regression_spec(EstimatorKind::kQuantile, 1);
  const std::vector<double> theta{0.0, 1.0};
  EXPECT_THROW(
      ptd::cross_covariance_mest(spec, data, data, WeightVector(4, 1.0), theta, theta),
      ptd::UnsupportedKindError);
}

TEST(ClusterSandwich, ReducesToIidSandwichOnSingletons) {
  RngStream rng(33);
  const std::size_t n = 60;
  Matrix data(n, 2);
  WeightVector w(n);
  std::vector<std::int32_t> singleton(n);
  for (std::size_t i = 0; i < n; ++i) {
    data(i, 1) = rng.next_normal();
    data(i, 0) = data(i, 1) + rng.next_normal();
    w[i] = 0.5 + rng.next_double();
    singleton[i] = static_cast<std::int32_t>(i);
  }
  const auto spec = regression_spec(EstimatorKind::kOls, 1);
  const FitResult fr = ptd::fit(spec, data, w);
  const Matrix iid = ptd::sandwich_covariance(spec, data, w, fr.theta);
  const Matrix cl = ptd::cluster_sandwich_covariance(spec, data, w, fr.theta, singleton);
  EXPECT_LE(ptd_test::max_abs_diff(iid, cl), 1e-12 * iid.max_abs());
}

TEST(Fit, QuantileWeightedResidualFractionNearLevel) {
  RngStream rng(34);
  for (double q : {0.3, 0.5}) {
    const std::size_t n = 500;
    Matrix data(n, 2);
    WeightVector w(n);
    for (std::size_t i = 0; i < n; ++i) {
      data(i, 1) = rng.next_normal();
      data(i, 0) = 0.5 + 1.5 * data(i, 1) + rng.next_normal();
      w[i] = 0.8 + 0.4 * rng.next_double();
    }
    const auto spec = regression_spec(EstimatorKind::kQuantile, 1, q);
    const FitResult fr = ptd::fit(spec, data, w);
    double below = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      wsum += w[i];
      const double fitv = fr.theta[0] + fr.theta[1] * data(i, 1);
      if (data(i, 0) - fitv < 0.0) below += w[i];
    }
    EXPECT_NEAR(below / wsum, q, 1.0 / static_cast<double>(fr.effective_rows) + 1e-12)
        << "q=" << q;
  }
}
