// Independent reference computations for tests. Nothing here calls into the
// library's kernels; every routine is the plainest loop that states the
// definition.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double dist_sq(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline bool rel_close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

/// Exhaustive argmin with ties to the lowest index.
inline std::size_t nearest(const std::vector<double>& x, const Rows& centroids) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    if (dist_sq(x, centroids[c]) < dist_sq(x, centroids[best])) best = c;
  }
  return best;
}

/// Global minimum of the clustering SSE over every labeling of the points
/// into at most k groups (k^N enumeration).
inline double brute_force_min_sse(const Rows& points, std::size_t k) {
  const std::size_t n = points.size();
  const std::size_t d = points.front().size();
  std::vector<std::size_t> labels(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    Rows sums(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t j = 0; j < d; ++j) sums[labels[i]][j] += points[i][j];
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double mean = sums[labels[i]][j] / static_cast<double>(counts[labels[i]]);
        sse += (points[i][j] - mean) * (points[i][j] - mean);
      }
    }
    best = std::min(best, sse);
    std::size_t pos = 0;
    while (pos < n && ++labels[pos] == k) labels[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

/// O(n^2) dominance flags for (mse, time) minimization.
inline std::vector<bool> dominated_flags(const std::vector<std::pair<double, double>>& objs) {
  std::vector<bool> flags(objs.size(), false);
  for (std::size_t i = 0; i < objs.size(); ++i) {
    for (std::size_t j = 0; j < objs.size(); ++j) {
      if (i == j) continue;
      const auto& a = objs[j];
      const auto& b = objs[i];
      if (a.first <= b.first && a.second <= b.second && (a.first < b.first || a.second < b.second)) flags[i] = true;
    }
  }
  return flags;
}

inline Rows random_rows(std::size_t n, std::size_t d, std::uint32_t seed, double lo = -3.0, double hi = 3.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Rows rows(n, std::vector<double>(d));
  for (auto& r : rows) {
    for (auto& v : r) v = u(gen);
  }
  return rows;
}

/// Fresh empty directory under the system temp path, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("soilpq_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
