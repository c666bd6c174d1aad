#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "soilpq/error.hpp"
#include "soilpq/parallel.hpp"
#include "soilpq/pq.hpp"

namespace soilpq {

/// table[j][k] = squared distance from query subvector j to centroid k of
/// subspace j.
struct LookupTable {
  std::size_t subspaces = 0;
  std::size_t centroids = 0;
  std::vector<double> values;

  double operator()(std::size_t j, std::size_t k) const noexcept { return values[j * centroids + k]; }
};

struct Neighbor {
  std::size_t row_id = 0;
  double distance = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

inline bool neighbor_less(const Neighbor& a, const Neighbor& b) noexcept {
  return a.distance < b.distance || (a.distance == b.distance && a.row_id < b.row_id);
}

inline LookupTable build_lookup_table(std::span<const double> query, const Codebook& cb) {
  if (query.size() != cb.dim()) {
    fail(ErrorCode::DimensionMismatch, "query has " + std::to_string(query.size()) + " dims, codebook expects " +
                                           std::to_string(cb.dim()));
  }
  LookupTable table{cb.num_subspaces(), cb.num_centroids(), {}};
  table.values.resize(table.subspaces * table.centroids);
  const std::size_t sub_dim = cb.sub_dim();
  for (std::size_t j = 0; j < table.subspaces; ++j) {
    const auto part = query.subspan(j * sub_dim, sub_dim);
    for (std::size_t k = 0; k < table.centroids; ++k) {
      table.values[j * table.centroids + k] = squared_l2(part, cb.centroid(j, k));
    }
  }
  return table;
}

namespace detail {
inline double adc_sq(std::span<const CodeEntry> code, const LookupTable& table) noexcept {
  double total = 0.0;
  for (std::size_t j = 0; j < code.size(); ++j) total += table(j, code[j]);
  return total;
}

inline void check_code(std::span<const CodeEntry> code, std::size_t subspaces, std::size_t centroids) {
  if (code.size() != subspaces) {
    fail(ErrorCode::CodeOutOfRange, "code has " + std::to_string(code.size()) + " entries, expected " +
                                        std::to_string(subspaces));
  }
  for (std::size_t j = 0; j < code.size(); ++j) {
    if (code[j] >= centroids) {
      fail(ErrorCode::CodeOutOfRange, "code entry " + std::to_string(code[j]) + " at subspace " +
                                          std::to_string(j) + " is not below K=" + std::to_string(centroids));
    }
  }
}

/// Keeps the n smallest of `distance(row)` over all rows, ordered by
/// (distance, row_id). Per-chunk winners are merged in chunk order.
template <typename DistanceFn>
std::vector<Neighbor> top_n(std::size_t rows, std::size_t n, DistanceFn&& distance) {
  if (n == 0) fail(ErrorCode::InvalidParams, "n must be at least 1");
  const std::size_t chunks = chunk_count(rows, kDefaultChunkRows);
  std::vector<std::vector<Neighbor>> best(chunks);
  parallel_chunks(rows, kDefaultChunkRows, [&](std::size_t c, std::size_t begin, std::size_t end) {
    auto& local = best[c];
    local.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) local.push_back({i, distance(i)});
    const std::size_t keep = std::min(n, local.size());
    std::partial_sort(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(keep), local.end(),
                      neighbor_less);
    local.resize(keep);
  });
  std::vector<Neighbor> merged;
  for (auto& local : best) merged.insert(merged.end(), local.begin(), local.end());
  const std::size_t keep = std::min(n, merged.size());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(keep), merged.end(),
                    neighbor_less);
  merged.resize(keep);
  return merged;
}
}  // namespace detail

/// Asymmetric distance: sqrt of the summed table entries picked by the code.
/// Equals ||y - decode(code)|| for the query y the table was built from.
inline double adc_distance(std::span<const CodeEntry> code, const LookupTable& table) {
  detail::check_code(code, table.subspaces, table.centroids);
  return std::sqrt(detail::adc_sq(code, table));
}

/// Symmetric distance between two encoded vectors, read from the codebook's
/// cached inter-centroid tables.
inline double sdc_distance(std::span<const CodeEntry> code_y, std::span<const CodeEntry> code_x,
                           const Codebook& cb) {
  cb.check_code(code_y);
  cb.check_code(code_x);
  double total = 0.0;
  for (std::size_t j = 0; j < code_y.size(); ++j) total += cb.centroid_distance_sq(j, code_y[j], code_x[j]);
  return std::sqrt(total);
}

/// Exhaustive ADC scan; the n closest rows sorted by (distance, row_id).
inline std::vector<Neighbor> knn(std::span<const double> query, const CodeMatrix& codes, const Codebook& cb,
                                 std::size_t n) {
  if (codes.rows == 0) fail(ErrorCode::InvalidParams, "code matrix is empty");
  check_codes_match(codes, cb);
  const auto table = build_lookup_table(query, cb);
  return detail::top_n(codes.rows, n,
                       [&](std::size_t row) { return std::sqrt(detail::adc_sq(codes.code(row), table)); });
}

/// Exhaustive SDC scan against an already encoded query.
inline std::vector<Neighbor> knn_symmetric(std::span<const CodeEntry> query_code, const CodeMatrix& codes,
                                           const Codebook& cb, std::size_t n) {
  if (codes.rows == 0) fail(ErrorCode::InvalidParams, "code matrix is empty");
  check_codes_match(codes, cb);
  cb.check_code(query_code);
  return detail::top_n(codes.rows, n, [&](std::size_t row) {
    const auto code = codes.code(row);
    double total = 0.0;
    for (std::size_t j = 0; j < code.size(); ++j) total += cb.centroid_distance_sq(j, query_code[j], code[j]);
    return std::sqrt(total);
  });
}

/// Posting list of row ids per class id.
struct InvertedIndex {
  std::map<std::uint64_t, std::vector<std::size_t>> lists;
  std::size_t total_rows = 0;

  std::span<const std::size_t> find(std::uint64_t class_id) const noexcept {
    const auto it = lists.find(class_id);
    if (it == lists.end()) return {};
    return it->second;
  }
  friend bool operator==(const InvertedIndex&, const InvertedIndex&) = default;
};

inline InvertedIndex build_inverted_index(const CodeMatrix& codes, const Codebook& cb) {
  check_codes_match(codes, cb);
  InvertedIndex index;
  index.total_rows = codes.rows;
  for (std::size_t i = 0; i < codes.rows; ++i) {
    index.lists[class_id(codes.code(i), codes.centroids)].push_back(i);
  }
  return index;
}

/// Rows sharing the query's code, in ascending row order; empty when the
/// query's class is not in the index.
inline std::vector<std::size_t> analog_lookup(std::span<const double> query, const InvertedIndex& index,
                                              const Codebook& cb) {
  const auto code = encode(query, cb);
  const auto hits = index.find(class_id(code, cb.num_centroids()));
  return {hits.begin(), hits.end()};
}

}  // namespace soilpq
