#pragma once

#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "soilpq/matrix.hpp"
#include "soilpq/pq.hpp"

namespace testing_util {

inline soilpq::Matrix to_matrix(const oracle::Rows& rows) {
  soilpq::Matrix m;
  for (const auto& r : rows) m.append_row(r);
  return m;
}

inline oracle::Rows to_rows(soilpq::MatrixView m) {
  oracle::Rows rows;
  for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
  return rows;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Codebook with M subspaces of K centroids each, drawn uniformly.
inline soilpq::Codebook random_codebook(std::size_t m, std::size_t k, std::size_t sub_dim, std::uint32_t seed) {
  std::vector<double> values;
  for (const auto& r : oracle::random_rows(m * k, sub_dim, seed)) values.insert(values.end(), r.begin(), r.end());
  return soilpq::Codebook(m * sub_dim, m, k, values, {}, seed);
}

inline soilpq::CodeMatrix random_codes(std::size_t n, std::size_t m, std::size_t k, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  soilpq::CodeMatrix codes{n, m, k, {}};
  codes.entries.resize(n * m);
  for (auto& e : codes.entries) e = static_cast<soilpq::CodeEntry>(pick(gen));
  return codes;
}

}  // namespace testing_util
