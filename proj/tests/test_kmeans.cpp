#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "oracles.hpp"
#include "soilpq/kmeans.hpp"
#include "soilpq/parallel.hpp"

namespace {

namespace km = soilpq::kmeans;
using soilpq::ErrorCode;
using testing_util::to_matrix;

TEST(KMeansFit, DistinctPointsEqualToKAreReproduced) {
  const auto pts = to_matrix({{0, 0}, {5, 1}, {-3, 4}, {2, -6}});
  const auto model = km::fit(pts, 4, {.seed = 3});
  EXPECT_EQ(model.final_sse, 0.0);
  std::vector<std::vector<double>> got = testing_util::to_rows(model.centroids);
  std::vector<std::vector<double>> want = testing_util::to_rows(pts);
  std::sort(got.begin(), got.end());
  std::sort(want.begin(), want.end());
  EXPECT_EQ(got, want);
}

TEST(KMeansFit, SingleClusterIsColumnMean) {
  const auto rows = oracle::random_rows(50, 3, 1);
  const auto model = km::fit(to_matrix(rows), 1);
  std::vector<double> mean(3, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < 3; ++j) mean[j] += r[j] / 50.0;
  }
  double sse = 0.0;
  for (const auto& r : rows) sse += oracle::dist_sq(r, mean);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(model.centroids(0, j), mean[j], 1e-12);
  EXPECT_TRUE(oracle::rel_close(model.final_sse, sse, 1e-12));
}

TEST(KMeansFit, OneDimensionalTwoClusterOptimum) {
  const oracle::Rows rows = {{0}, {1}, {9}, {10}};
  const double global = oracle::brute_force_min_sse(rows, 2);
  ASSERT_DOUBLE_EQ(global, 1.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto model = km::fit(to_matrix(rows), 2, {.seed = seed});
    std::vector<double> c = {model.centroids(0, 0), model.centroids(1, 0)};
    std::sort(c.begin(), c.end());
    EXPECT_EQ(c, (std::vector<double>{0.5, 9.5}));
    EXPECT_DOUBLE_EQ(model.final_sse, 1.0);
  }
}

TEST(KMeansFit, SseHistoryNonIncreasing) {
  for (std::uint32_t seed = 0; seed < 30; ++seed) {
    const auto rows = oracle::random_rows(300, 2 + seed % 3, seed);
    const auto model = km::fit(to_matrix(rows), 2 + seed % 7, {.seed = seed, .max_iters = 100, .tol = 0.0});
    for (std::size_t t = 1; t < model.sse_history.size(); ++t) {
      ASSERT_LE(model.sse_history[t], model.sse_history[t - 1] * (1 + 1e-9)) << "seed " << seed << " step " << t;
    }
  }
}

TEST(KMeansFit, FinalSseMatchesAssignAndSse) {
  const auto pts = to_matrix(oracle::random_rows(500, 4, 9));
  const auto model = km::fit(pts, 6, {.seed = 9});
  const auto labels = km::assign(pts, model.centroids);
  EXPECT_EQ(labels, model.labels);
  EXPECT_TRUE(oracle::rel_close(model.final_sse, km::sse(pts, model.centroids, labels), 1e-9));
}

TEST(KMeansFit, DeterministicAcrossThreadCounts) {
  const auto pts = to_matrix(oracle::random_rows(5000, 3, 12));
  km::Options options{.seed = 77, .max_iters = 50, .tol = 1e-6, .chunk_rows = 256};
  soilpq::set_num_threads(1);
  const auto a = km::fit(pts, 8, options);
  soilpq::set_num_threads(6);
  const auto b = km::fit(pts, 8, options);
  soilpq::set_num_threads(0);
  const auto c = km::fit(pts, 8, options);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.centroids, b.centroids);
  EXPECT_EQ(a.centroids, c.centroids);
  EXPECT_EQ(a.sse_history, b.sse_history);
}

TEST(KMeansFit, EmptyClusterRepairedDeterministically) {
  // Two distinct values for three clusters: seeding must duplicate a
  // centroid, leaving a cluster empty.
  const auto pts = to_matrix({{0}, {0}, {0}, {0}, {10}});
  const auto model = km::fit(pts, 3, {.seed = 1, .restarts = 1});
  EXPECT_GT(model.empty_repairs, 0u);
  EXPECT_EQ(model.final_sse, 0.0);
  for (std::size_t t = 1; t < model.sse_history.size(); ++t) {
    EXPECT_LE(model.sse_history[t], model.sse_history[t - 1]);
  }
}

TEST(KMeansFit, RepairMovesFarthestPoint) {
  // Outlier at 100 is farthest from its centroid once clusters collapse.
  const auto pts = to_matrix({{0}, {0}, {1}, {1}, {100}});
  const auto model = km::fit(pts, 3, {.seed = 4});
  EXPECT_NEAR(model.final_sse, 0.0, 1e-12);
}

TEST(KMeansFit, Errors) {
  const auto pts = to_matrix({{0, 0}, {1, 1}});
  try {
    km::fit(pts, 3);
    FAIL();
  } catch (const soilpq::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewPoints);
  }
  const auto bad = to_matrix({{0, std::numeric_limits<double>::infinity()}, {1, 1}});
  try {
    km::fit(bad, 1);
    FAIL();
  } catch (const soilpq::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
}

TEST(KMeansAssign, ExactAndTieCases) {
  const auto centroids = to_matrix({{0, 0}, {2, 0}, {5, 5}});
  EXPECT_EQ(km::assign(to_matrix({{5, 5}}), centroids), (km::Assignment{2}));
  EXPECT_EQ(km::assign(to_matrix({{1, 0}}), centroids), (km::Assignment{0}));
}

TEST(KMeansAssign, MatchesExhaustiveScan) {
  const auto rows = oracle::random_rows(1000, 5, 21);
  const auto cents = oracle::random_rows(17, 5, 22);
  const auto labels = km::assign(to_matrix(rows), to_matrix(cents));
  for (std::size_t i = 0; i < rows.size(); ++i) ASSERT_EQ(labels[i], oracle::nearest(rows[i], cents));
}

TEST(KMeansAssign, DimensionMismatch) {
  try {
    km::assign(to_matrix({{0, 0}}), to_matrix({{0}}));
    FAIL();
  } catch (const soilpq::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(KMeansSse, SmallCases) {
  EXPECT_EQ(km::sse(to_matrix({{1, 1}, {2, 2}}), to_matrix({{1, 1}, {2, 2}}), km::Assignment{0, 1}), 0.0);
  EXPECT_EQ(km::sse(to_matrix({{2, 0}}), to_matrix({{0, 0}}), km::Assignment{0}), 4.0);
}

TEST(KMeansSse, MatchesNaiveDoubleLoop) {
  const auto rows = oracle::random_rows(700, 3, 31);
  const auto cents = oracle::random_rows(5, 3, 32);
  km::Assignment labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = static_cast<std::uint32_t>(i % 5);
  double naive = 0.0;
  for (std::size_t c = 0; c < 5; ++c) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (labels[i] == c) naive += oracle::dist_sq(rows[i], cents[c]);
    }
  }
  EXPECT_TRUE(oracle::rel_close(km::sse(to_matrix(rows), to_matrix(cents), labels), naive, 1e-12));
}

TEST(KMeansFit, MicroInstancesReachGlobalOptimum) {
  std::mt19937 gen(2024);
  int optimal = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + gen() % 3;
    const std::size_t n = k + gen() % (9 - k);
    const std::size_t d = 1 + gen() % 2;
    const auto rows = oracle::random_rows(n, d, gen());
    const auto model = km::fit(to_matrix(rows), k, {.seed = static_cast<std::uint64_t>(trial)});
    for (std::size_t t = 1; t < model.sse_history.size(); ++t) {
      ASSERT_LE(model.sse_history[t], model.sse_history[t - 1] * (1 + 1e-9));
    }
    const double best = oracle::brute_force_min_sse(rows, k);
    if (std::abs(model.final_sse - best) <= 1e-9 * std::max(best, 1e-300) || model.final_sse == best) ++optimal;
  }
  EXPECT_GE(optimal, 95);
}

}  // namespace
