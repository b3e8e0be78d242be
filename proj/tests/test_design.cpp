#include "ptd/design.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <vector>

#include "ptd/matrix.hpp"
#include "ptd/rng.hpp"

using ptd::Dataset;
using ptd::Matrix;
using ptd::RngStream;

namespace {

Dataset uniform_dataset(std::size_t n, double pi, const std::vector<std::uint8_t>& labeled) {
  Dataset ds;
  ds.proxy = Matrix(n, 1, 1.0);
  ds.truth = Matrix(n, 1, 1.0);
  ds.labeled = labeled;
  for (std::size_t i = 0; i < n; ++i)
    if (!labeled[i]) ds.truth(i, 0) = ptd::kMissing;
  ds.design = ptd::UniformBernoulli{pi};
  return ds;
}

}  // namespace

TEST(ComputeWeights, UniformBernoulliValues) {
  const Dataset ds = uniform_dataset(2, 0.25, {1, 0});
  const auto w = ptd::compute_weights(ds);
  EXPECT_DOUBLE_EQ(w.complete[0], 4.0);
  EXPECT_DOUBLE_EQ(w.incomplete[0], 0.0);
  EXPECT_DOUBLE_EQ(w.complete[1], 0.0);
  EXPECT_DOUBLE_EQ(w.incomplete[1], 4.0 / 3.0);
}

TEST(ComputeWeights, ClusterFormula) {
  Dataset ds;
  ds.proxy = Matrix(4, 1, 1.0);
  ds.truth = Matrix(4, 1, 1.0);
  ds.labeled = {1, 1, 0, 0};
  ds.truth(2, 0) = ptd::kMissing;
  ds.truth(3, 0) = ptd::kMissing;
  ptd::Clustered cl;
  cl.cluster_of = {0, 0, 1, 1};
  cl.pi_k = {0.5, 0.5};
  ds.design = cl;
  const auto w = ptd::compute_weights(ds);
  EXPECT_DOUBLE_EQ(w.complete[0], 2.0);
  EXPECT_DOUBLE_EQ(w.complete[1], 2.0);
  EXPECT_DOUBLE_EQ(w.incomplete[2], 2.0);
  EXPECT_DOUBLE_EQ(w.incomplete[3], 2.0);
}

TEST(ComputeWeights, ClusterRejectsMixedLabels) {
  Dataset ds;
  ds.proxy = Matrix(2, 1, 1.0);
  ds.truth = Matrix(2, 1, 1.0);
  ds.labeled = {1, 0};
  ds.truth(1, 0) = ptd::kMissing;
  ptd::Clustered cl;
  cl.cluster_of = {0, 0};
  cl.pi_k = {0.5};
  ds.design = cl;
  EXPECT_THROW(ptd::compute_weights(ds), ptd::InvalidDesignError);
}

TEST(ComputeWeights, StratifiedFormula) {
  Dataset ds;
  ds.proxy = Matrix(6, 1, 1.0);
  ds.truth = Matrix(6, 1, 1.0);
  ds.labeled = {1, 0, 0, 1, 1, 0};
  for (std::size_t i : {1u, 2u, 5u}) ds.truth(i, 0) = ptd::kMissing;
  ptd::Stratified st;
  st.stratum_of = {0, 0, 0, 1, 1, 1};
  st.n_complete = {1, 2};
  st.n_incomplete = {2, 1};
  ds.design = st;
  const auto w = ptd::compute_weights(ds);
  EXPECT_DOUBLE_EQ(w.complete[0], 3.0 / 1.0);
  EXPECT_DOUBLE_EQ(w.incomplete[1], 3.0 / 2.0);
  EXPECT_DOUBLE_EQ(w.incomplete[2], 3.0 / 2.0);
  EXPECT_DOUBLE_EQ(w.complete[3], 3.0 / 2.0);
  EXPECT_DOUBLE_EQ(w.complete[4], 3.0 / 2.0);
  EXPECT_DOUBLE_EQ(w.incomplete[5], 3.0 / 1.0);
}

TEST(ComputeWeights, StratifiedRejectsCountMismatch) {
  Dataset ds;
  ds.proxy = Matrix(3, 1, 1.0);
  ds.truth = Matrix(3, 1, 1.0);
  ds.labeled = {1, 1, 0};
  ds.truth(2, 0) = ptd::kMissing;
  ptd::Stratified st;
  st.stratum_of = {0, 0, 0};
  st.n_complete = {1};  // two rows are actually labeled
  st.n_incomplete = {1};
  ds.design = st;
  EXPECT_THROW(ptd::compute_weights(ds), ptd::InvalidDesignError);
}

TEST(ComputeWeights, DisjointSupportAcrossDesigns) {
  RngStream rng(41);
  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t n = 50;
    std::vector<std::uint8_t> labeled(n);
    for (auto& l : labeled) l = rng.next_double() < 0.3 ? 1 : 0;
    labeled[0] = 1;
    labeled[1] = 0;
    const Dataset ds = uniform_dataset(n, 0.3, labeled);
    const auto w = ptd::compute_weights(ds);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(w.complete[i] * w.incomplete[i], 0.0);
  }
}

TEST(ComputeWeights, MeanWeightedLabeledCountNearOne) {
  RngStream rng(42);
  const std::size_t n = 200;
  const double pi = 0.3;
  double sum = 0.0, sum_sq = 0.0;
  const int sims = 1000;
  for (int s = 0; s < sims; ++s) {
    std::vector<std::uint8_t> labeled(n);
    std::size_t count = 0;
    for (auto& l : labeled) {
      l = rng.next_double() < pi ? 1 : 0;
      count += l;
    }
    if (count == 0 || count == n) continue;
    const Dataset ds = uniform_dataset(n, pi, labeled);
    const auto w = ptd::compute_weights(ds);
    double mean_w = 0.0;
    for (double v : w.complete) mean_w += v;
    mean_w /= static_cast<double>(n);
    sum += mean_w;
    sum_sq += mean_w * mean_w;
  }
  const double mean = sum / sims;
  const double var = sum_sq / sims - mean * mean;
  const double se = std::sqrt(var / sims);
  EXPECT_NEAR(mean, 1.0, 3.0 * se);
}

TEST(ResampleIid, SingleRowAndDeterminism) {
  RngStream rng1 = RngStream::derive(7, 0);
  EXPECT_EQ(ptd::resample_iid(1, rng1), std::vector<std::int32_t>{0});
  RngStream a = RngStream::derive(7, 1);
  RngStream b = RngStream::derive(7, 1);
  EXPECT_EQ(ptd::resample_iid(100, a), ptd::resample_iid(100, b));
}

TEST(ResampleClusters, SingleClusterReturnsItsIndices) {
  RngStream rng(43);
  const std::vector<std::vector<std::int32_t>> clusters{{3, 4, 5}};
  EXPECT_EQ(ptd::resample_clusters(clusters, rng), (std::vector<std::int32_t>{3, 4, 5}));
}

TEST(ResampleClusters, EqualSizesPreserveLength) {
  RngStream rng(44);
  const std::vector<std::vector<std::int32_t>> clusters{{0, 1}, {2, 3}, {4, 5}};
  for (int rep = 0; rep < 20; ++rep)
    EXPECT_EQ(ptd::resample_clusters(clusters, rng).size(), 6u);
}

TEST(ResampleClusters, WholeClustersOnly) {
  RngStream rng(45);
  const std::vector<std::vector<std::int32_t>> clusters{{0, 1, 2}, {3}, {4, 5}};
  for (int rep = 0; rep < 50; ++rep) {
    const auto idx = ptd::resample_clusters(clusters, rng);
    // Walk the output; it must decompose into a concatenation of clusters.
    std::size_t pos = 0;
    while (pos < idx.size()) {
      bool matched = false;
      for (const auto& c : clusters) {
        if (pos + c.size() <= idx.size() &&
            std::equal(c.begin(), c.end(), idx.begin() + static_cast<long>(pos))) {
          pos += c.size();
          matched = true;
          break;
        }
      }
      ASSERT_TRUE(matched);
    }
  }
}

TEST(ResampleClusters, LengthDistributionMatchesEnumeration) {
  // Clusters {0,1} and {2}: drawing K=2 ids uniformly gives lengths
  // {4, 3, 3, 2} over the four equally likely draws.
  const std::vector<std::vector<std::int32_t>> clusters{{0, 1}, {2}};
  std::map<std::size_t, int> hist;
  const int reps = 40000;
  RngStream rng(46);
  for (int rep = 0; rep < reps; ++rep) ++hist[ptd::resample_clusters(clusters, rng).size()];
  EXPECT_NEAR(hist[4] / static_cast<double>(reps), 0.25, 0.02);
  EXPECT_NEAR(hist[3] / static_cast<double>(reps), 0.50, 0.02);
  EXPECT_NEAR(hist[2] / static_cast<double>(reps), 0.25, 0.02);
}

namespace {

Dataset stratified_dataset() {
  Dataset ds;
  const std::size_t n = 12;
  ds.proxy = Matrix(n, 1, 1.0);
  ds.truth = Matrix(n, 1, 1.0);
  ds.labeled = {1, 0, 0, 0, 1, 1, 0, 0, 1, 1, 1, 0};
  for (std::size_t i = 0; i < n; ++i)
    if (!ds.labeled[i]) ds.truth(i, 0) = ptd::kMissing;
  ptd::Stratified st;
  st.stratum_of = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  st.n_complete = {1, 2, 3};
  st.n_incomplete = {3, 2, 1};
  ds.design = st;
  return ds;
}

}  // namespace

TEST(ResampleStratified, OutputSizesMatchDeclaredCounts) {
  const Dataset ds = stratified_dataset();
  RngStream rng(47);
  for (int rep = 0; rep < 25; ++rep) {
    const auto res = ptd::resample_stratified(ds, rng);
    EXPECT_EQ(res.complete.size(), 6u);
    EXPECT_EQ(res.incomplete.size(), 6u);
  }
}

TEST(ResampleStratified, MembershipRespectsStrataAndLabels) {
  const Dataset ds = stratified_dataset();
  const auto& st = std::get<ptd::Stratified>(ds.design);
  RngStream rng(48);
  for (int rep = 0; rep < 1000; ++rep) {
    const auto res = ptd::resample_stratified(ds, rng);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::int64_t t = 0; t < st.n_complete[s]; ++t, ++pos) {
        const auto i = static_cast<std::size_t>(res.complete[pos]);
        EXPECT_EQ(st.stratum_of[i], static_cast<std::int32_t>(s));
        EXPECT_TRUE(ds.labeled[i]);
      }
    pos = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::int64_t t = 0; t < st.n_incomplete[s]; ++t, ++pos) {
        const auto i = static_cast<std::size_t>(res.incomplete[pos]);
        EXPECT_EQ(st.stratum_of[i], static_cast<std::int32_t>(s));
        EXPECT_FALSE(ds.labeled[i]);
      }
  }
}

TEST(ResampleStratified, SingleLabeledRowPerStratumIsForced) {
  Dataset ds;
  ds.proxy = Matrix(4, 1, 1.0);
  ds.truth = Matrix(4, 1, 1.0);
  ds.labeled = {1, 0, 1, 0};
  ds.truth(1, 0) = ptd::kMissing;
  ds.truth(3, 0) = ptd::kMissing;
  ptd::Stratified st;
  st.stratum_of = {0, 0, 1, 1};
  st.n_complete = {1, 1};
  st.n_incomplete = {1, 1};
  ds.design = st;
  RngStream rng(49);
  for (int rep = 0; rep < 10; ++rep) {
    const auto res = ptd::resample_stratified(ds, rng);
    EXPECT_EQ(res.complete, (std::vector<std::int32_t>{0, 2}));
  }
}

TEST(DesignWarnings, ThinStratumIsFlagged) {
  const Dataset ds = stratified_dataset();
  EXPECT_FALSE(ptd::design_warnings(ds).empty());
}
