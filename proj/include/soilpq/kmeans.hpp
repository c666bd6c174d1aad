#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "soilpq/error.hpp"
#include "soilpq/matrix.hpp"
#include "soilpq/parallel.hpp"
#include "soilpq/random.hpp"

namespace soilpq::kmeans {

using Assignment = std::vector<std::uint32_t>;

struct Options {
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-4;
  std::size_t chunk_rows = kDefaultChunkRows;
  /// Independent k-means++ starts drawn from one seeded stream; the run with
  /// the lowest final SSE is kept (earliest run on ties).
  std::size_t restarts = 10;
};

struct Model {
  Matrix centroids;  // k x d
  std::size_t k = 0;
  std::size_t d = 0;
  double final_sse = 0.0;
  std::size_t iterations_run = 0;
  std::uint64_t seed = 0;
  Assignment labels;                // assign(points, centroids) on the training set
  std::vector<double> sse_history;  // SSE after initialization and after every iteration
  std::size_t empty_repairs = 0;
  std::size_t best_restart = 0;
};

namespace detail {

inline void check_finite(MatrixView points, const char* what) {
  for (double v : points.data()) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, std::string(what) + " contain a non-finite value");
  }
}

/// Nearest centroid for rows [begin, end); returns the chunk's SSE.
inline double assign_range(MatrixView points, MatrixView centroids, std::size_t begin, std::size_t end,
                           std::span<std::uint32_t> labels, std::span<double> dists) {
  double total = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const auto x = points.row(i);
    double best = squared_l2(x, centroids.row(0));
    std::uint32_t best_k = 0;
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
      const double dist = squared_l2(x, centroids.row(c));
      if (dist < best) {
        best = dist;
        best_k = static_cast<std::uint32_t>(c);
      }
    }
    labels[i] = best_k;
    if (!dists.empty()) dists[i] = best;
    total += best;
  }
  return total;
}

/// Labels every row; per-chunk SSE partials are added in chunk order.
inline double assign_all(MatrixView points, MatrixView centroids, std::size_t chunk_rows,
                         std::span<std::uint32_t> labels, std::span<double> dists) {
  std::vector<double> partial(chunk_count(points.rows(), chunk_rows), 0.0);
  parallel_chunks(points.rows(), chunk_rows, [&](std::size_t c, std::size_t begin, std::size_t end) {
    partial[c] = assign_range(points, centroids, begin, end, labels, dists);
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

/// Per-cluster coordinate sums and member counts. Chunks are processed in
/// waves to bound scratch memory; each wave is folded in ascending chunk
/// order, which makes the sums independent of the thread count.
inline void cluster_sums(MatrixView points, std::span<const std::uint32_t> labels, std::size_t k,
                         std::size_t chunk_rows, std::vector<double>& sums, std::vector<std::size_t>& counts) {
  const std::size_t d = points.cols();
  sums.assign(k * d, 0.0);
  counts.assign(k, 0);
  const std::size_t chunks = chunk_count(points.rows(), chunk_rows);
  constexpr std::size_t kWave = 64;
  std::vector<std::vector<double>> wave_sums(std::min(kWave, chunks), std::vector<double>(k * d));
  std::vector<std::vector<std::size_t>> wave_counts(std::min(kWave, chunks), std::vector<std::size_t>(k));
  for (std::size_t first = 0; first < chunks; first += kWave) {
    const std::size_t in_wave = std::min(kWave, chunks - first);
    const std::size_t row_begin = first * chunk_rows;
    const std::size_t row_end = std::min(points.rows(), (first + in_wave) * chunk_rows);
    parallel_chunks(row_end - row_begin, chunk_rows, [&](std::size_t c, std::size_t begin, std::size_t end) {
      auto& s = wave_sums[c];
      auto& n = wave_counts[c];
      std::fill(s.begin(), s.end(), 0.0);
      std::fill(n.begin(), n.end(), 0);
      for (std::size_t i = row_begin + begin; i < row_begin + end; ++i) {
        const std::size_t label = labels[i];
        const auto x = points.row(i);
        for (std::size_t j = 0; j < d; ++j) s[label * d + j] += x[j];
        ++n[label];
      }
    });
    for (std::size_t c = 0; c < in_wave; ++c) {
      for (std::size_t t = 0; t < k * d; ++t) sums[t] += wave_sums[c][t];
      for (std::size_t t = 0; t < k; ++t) counts[t] += wave_counts[c][t];
    }
  }
}

/// k-means++ seeding: each new centroid is a data point drawn with
/// probability proportional to its squared distance to the nearest centroid
/// chosen so far.
inline Matrix plus_plus_init(MatrixView points, std::size_t k, Rng& rng, std::size_t chunk_rows) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  std::ranges::copy(points.row(pick), centroids.row(0).begin());

  std::vector<double> nearest(n);
  auto refresh = [&](std::size_t c, bool first) {
    parallel_chunks(n, chunk_rows, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const double dist = squared_l2(points.row(i), centroids.row(c));
        nearest[i] = first ? dist : std::min(nearest[i], dist);
      }
    });
  };
  refresh(0, true);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : nearest) total += v;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double running = 0.0;
      pick = n;
      std::size_t last_positive = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (nearest[i] > 0.0) last_positive = i;
        running += nearest[i];
        if (running > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = last_positive;
    } else {
      // Fewer distinct points than centroids.
      pick = static_cast<std::size_t>(rng.below(n));
    }
    std::ranges::copy(points.row(pick), centroids.row(c).begin());
    refresh(c, false);
  }
  return centroids;
}

}  // namespace detail

/// Label of the nearest centroid (squared l2) for every point; ties go to the
/// lowest centroid index.
inline Assignment assign(MatrixView points, MatrixView centroids) {
  if (centroids.rows() == 0) fail(ErrorCode::InvalidParams, "no centroids");
  if (points.cols() != centroids.cols()) {
    fail(ErrorCode::DimensionMismatch, "points have " + std::to_string(points.cols()) +
                                           " dims, centroids have " + std::to_string(centroids.cols()));
  }
  Assignment labels(points.rows());
  detail::assign_all(points, centroids, kDefaultChunkRows, labels, {});
  return labels;
}

/// Sum of squared distances from each point to its assigned centroid.
inline double sse(MatrixView points, MatrixView centroids, std::span<const std::uint32_t> labels) {
  if (points.cols() != centroids.cols() || labels.size() != points.rows()) {
    fail(ErrorCode::DimensionMismatch, "points, centroids and assignment shapes disagree");
  }
  std::vector<double> partial(chunk_count(points.rows(), kDefaultChunkRows), 0.0);
  parallel_chunks(points.rows(), kDefaultChunkRows, [&](std::size_t c, std::size_t begin, std::size_t end) {
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      if (labels[i] >= centroids.rows()) {
        fail(ErrorCode::InvalidParams, "label " + std::to_string(labels[i]) + " out of range at row " +
                                           std::to_string(i));
      }
      total += squared_l2(points.row(i), centroids.row(labels[i]));
    }
    partial[c] = total;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

namespace detail {

inline Model lloyd(MatrixView points, std::size_t k, const Options& options, Rng& rng) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  Model model;
  model.k = k;
  model.d = d;
  model.seed = options.seed;
  model.centroids = plus_plus_init(points, k, rng, options.chunk_rows);
  model.labels.assign(n, 0);
  std::vector<double> dists(n);
  double current = assign_all(points, model.centroids, options.chunk_rows, model.labels, dists);
  model.sse_history.push_back(current);

  Assignment next_labels(n);
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  while (model.iterations_run < options.max_iters) {
    cluster_sums(points, model.labels, k, options.chunk_rows, sums, counts);
    bool any_empty = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        any_empty = true;
        continue;
      }
      const double inv = 1.0 / static_cast<double>(counts[c]);
      for (std::size_t j = 0; j < d; ++j) model.centroids(c, j) = sums[c * d + j] * inv;
    }
    if (any_empty) {
      parallel_chunks(n, options.chunk_rows, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          dists[i] = squared_l2(points.row(i), model.centroids.row(model.labels[i]));
        }
      });
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] != 0) continue;
        const auto far = static_cast<std::size_t>(std::distance(dists.begin(), std::ranges::max_element(dists)));
        std::ranges::copy(points.row(far), model.centroids.row(c).begin());
        dists[far] = 0.0;
        ++model.empty_repairs;
      }
    }

    const double previous = current;
    current = assign_all(points, model.centroids, options.chunk_rows, next_labels, dists);
    model.sse_history.push_back(current);
    ++model.iterations_run;
    const bool changed = next_labels != model.labels;
    model.labels.swap(next_labels);
    if (!changed) break;
    const double improvement = (previous - current) / std::max(previous, std::numeric_limits<double>::min());
    if (improvement < options.tol) break;
  }
  model.final_sse = current;
  return model;
}

}  // namespace detail

/// Lloyd iterations from seeded k-means++ starts. Each run stops when the
/// relative SSE improvement drops below tol, when labels stop changing, or
/// after max_iters iterations. Empty clusters are reseeded with the point
/// farthest from its current centroid (lowest row index on ties).
inline Model fit(MatrixView points, std::size_t k, const Options& options = {}) {
  const std::size_t n = points.rows();
  if (k < 1) fail(ErrorCode::InvalidParams, "k must be at least 1");
  if (points.cols() < 1) fail(ErrorCode::InvalidParams, "points have no dimensions");
  if (n < k) {
    fail(ErrorCode::TooFewPoints, std::to_string(n) + " points cannot fill " + std::to_string(k) + " clusters");
  }
  if (!(options.tol >= 0.0)) fail(ErrorCode::InvalidParams, "tol must be non-negative");
  if (options.chunk_rows == 0) fail(ErrorCode::InvalidParams, "chunk_rows must be positive");
  if (options.restarts == 0) fail(ErrorCode::InvalidParams, "restarts must be at least 1");
  detail::check_finite(points, "points");

  Rng rng(options.seed);
  Model best = detail::lloyd(points, k, options, rng);
  // A single cluster has one optimum; further starts cannot improve it.
  const std::size_t runs = k == 1 ? 1 : options.restarts;
  for (std::size_t r = 1; r < runs; ++r) {
    Model candidate = detail::lloyd(points, k, options, rng);
    if (candidate.final_sse < best.final_sse) {
      best = std::move(candidate);
      best.best_restart = r;
    }
    if (best.final_sse == 0.0) break;
  }
  return best;
}

}  // namespace soilpq::kmeans
