#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "soilpq/error.hpp"
#include "soilpq/kmeans.hpp"
#include "soilpq/matrix.hpp"
#include "soilpq/parallel.hpp"
#include "soilpq/preprocess.hpp"

namespace soilpq {

using CodeEntry = std::uint16_t;
using PQCode = std::vector<CodeEntry>;

inline constexpr std::size_t kMaxCentroids = 65536;
inline constexpr std::uint64_t kMaxClasses = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());

/// Exact K^M; Overflow past 2^63 - 1.
inline std::uint64_t num_classes(std::size_t subspaces, std::size_t centroids) {
  if (subspaces < 1 || centroids < 1) fail(ErrorCode::InvalidParams, "M and K must be at least 1");
  std::uint64_t total = 1;
  for (std::size_t j = 0; j < subspaces; ++j) {
    if (total > kMaxClasses / centroids) {
      fail(ErrorCode::Overflow, std::to_string(centroids) + "^" + std::to_string(subspaces) +
                                    " classes exceeds 2^63 - 1");
    }
    total *= centroids;
  }
  return total;
}

/// Big-endian mixed radix: id = sum_j code[j] * K^(M-1-j).
inline std::uint64_t class_id(std::span<const CodeEntry> code, std::size_t centroids) {
  num_classes(code.size(), centroids);
  std::uint64_t id = 0;
  for (std::size_t j = 0; j < code.size(); ++j) {
    if (code[j] >= centroids) {
      fail(ErrorCode::CodeOutOfRange, "code entry " + std::to_string(code[j]) + " at subspace " +
                                          std::to_string(j) + " is not below K=" + std::to_string(centroids));
    }
    id = id * centroids + code[j];
  }
  return id;
}

inline PQCode code_from_class_id(std::uint64_t id, std::size_t subspaces, std::size_t centroids) {
  if (id >= num_classes(subspaces, centroids)) {
    fail(ErrorCode::CodeOutOfRange, "class id " + std::to_string(id) + " out of range");
  }
  PQCode code(subspaces);
  for (std::size_t j = subspaces; j-- > 0;) {
    code[j] = static_cast<CodeEntry>(id % centroids);
    id /= centroids;
  }
  return code;
}

namespace detail {
// Inter-centroid squared distances, M x K x K, filled on first SDC query.
struct SdcCache {
  std::once_flag once;
  std::vector<double> table;
};
}  // namespace detail

/// Per-subspace centroids of a trained product quantizer. Immutable once
/// built; copies share the lazily built SDC tables.
class Codebook {
 public:
  Codebook(std::size_t dim, std::size_t subspaces, std::size_t centroids, std::vector<double> values,
           std::vector<double> subspace_sse, std::uint64_t seed, std::optional<Scaler> scaler = std::nullopt)
      : dim_(dim),
        subspaces_(subspaces),
        centroids_(centroids),
        values_(std::move(values)),
        subspace_sse_(std::move(subspace_sse)),
        seed_(seed),
        scaler_(std::move(scaler)),
        sdc_(std::make_shared<detail::SdcCache>()) {
    if (subspaces_ < 1 || dim_ < 1 || dim_ % subspaces_ != 0) {
      fail(ErrorCode::IndivisibleDims, "D=" + std::to_string(dim_) + " is not divisible by M=" +
                                           std::to_string(subspaces_));
    }
    if (centroids_ < 1 || centroids_ > kMaxCentroids) {
      fail(ErrorCode::InvalidParams, "K must be in [1, 65536], got " + std::to_string(centroids_));
    }
    if (values_.size() != subspaces_ * centroids_ * sub_dim()) {
      fail(ErrorCode::SchemaError, "centroid array holds " + std::to_string(values_.size()) + " values, expected " +
                                       std::to_string(subspaces_ * centroids_ * sub_dim()));
    }
    for (double v : values_) {
      if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "codebook holds a non-finite centroid value");
    }
    if (subspace_sse_.empty()) subspace_sse_.assign(subspaces_, 0.0);
    if (subspace_sse_.size() != subspaces_) fail(ErrorCode::SchemaError, "need one SSE per subspace");
    if (scaler_ && scaler_->columns.size() != dim_) {
      fail(ErrorCode::DimensionMismatch, "embedded scaler has " + std::to_string(scaler_->columns.size()) +
                                             " columns, codebook has D=" + std::to_string(dim_));
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_subspaces() const noexcept { return subspaces_; }
  std::size_t num_centroids() const noexcept { return centroids_; }
  std::size_t sub_dim() const noexcept { return dim_ / subspaces_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t num_classes() const { return soilpq::num_classes(subspaces_, centroids_); }

  /// Flat M x K x sub_dim array.
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> centroid(std::size_t subspace, std::size_t k) const noexcept {
    return std::span<const double>(values_).subspan((subspace * centroids_ + k) * sub_dim(), sub_dim());
  }
  MatrixView subspace(std::size_t j) const noexcept {
    return {std::span<const double>(values_).subspan(j * centroids_ * sub_dim(), centroids_ * sub_dim()),
            centroids_, sub_dim()};
  }

  std::span<const double> subspace_sse() const noexcept { return subspace_sse_; }
  double total_sse() const noexcept {
    double total = 0.0;
    for (double s : subspace_sse_) total += s;
    return total;
  }

  const std::optional<Scaler>& scaler() const noexcept { return scaler_; }
  Codebook with_scaler(Scaler scaler) const {
    return Codebook(dim_, subspaces_, centroids_, values_, subspace_sse_, seed_, std::move(scaler));
  }

  /// Squared distance between centroid a and centroid b of one subspace.
  double centroid_distance_sq(std::size_t subspace, std::size_t a, std::size_t b) const {
    std::call_once(sdc_->once, [this] {
      auto& table = sdc_->table;
      table.resize(subspaces_ * centroids_ * centroids_);
      for (std::size_t j = 0; j < subspaces_; ++j) {
        for (std::size_t a2 = 0; a2 < centroids_; ++a2) {
          for (std::size_t b2 = 0; b2 < centroids_; ++b2) {
            table[(j * centroids_ + a2) * centroids_ + b2] = squared_l2(centroid(j, a2), centroid(j, b2));
          }
        }
      }
    });
    return sdc_->table[(subspace * centroids_ + a) * centroids_ + b];
  }

  void check_code(std::span<const CodeEntry> code) const {
    if (code.size() != subspaces_) {
      fail(ErrorCode::CodeOutOfRange, "code has " + std::to_string(code.size()) + " entries, M=" +
                                          std::to_string(subspaces_));
    }
    for (std::size_t j = 0; j < code.size(); ++j) {
      if (code[j] >= centroids_) {
        fail(ErrorCode::CodeOutOfRange, "code entry " + std::to_string(code[j]) + " at subspace " +
                                            std::to_string(j) + " is not below K=" + std::to_string(centroids_));
      }
    }
  }

  friend bool operator==(const Codebook& a, const Codebook& b) {
    return a.dim_ == b.dim_ && a.subspaces_ == b.subspaces_ && a.centroids_ == b.centroids_ &&
           a.values_ == b.values_ && a.subspace_sse_ == b.subspace_sse_ && a.seed_ == b.seed_ &&
           a.scaler_ == b.scaler_;
  }

 private:
  std::size_t dim_;
  std::size_t subspaces_;
  std::size_t centroids_;
  std::vector<double> values_;
  std::vector<double> subspace_sse_;
  std::uint64_t seed_;
  std::optional<Scaler> scaler_;
  std::shared_ptr<detail::SdcCache> sdc_;
};

/// N x M code entries. Row ids are the row positions 0..N-1.
struct CodeMatrix {
  std::size_t rows = 0;
  std::size_t subspaces = 0;
  std::size_t centroids = 0;
  std::vector<CodeEntry> entries;

  std::span<const CodeEntry> code(std::size_t row) const noexcept {
    return std::span<const CodeEntry>(entries).subspan(row * subspaces, subspaces);
  }
  friend bool operator==(const CodeMatrix&, const CodeMatrix&) = default;
};

inline void check_codes_match(const CodeMatrix& codes, const Codebook& cb) {
  if (codes.subspaces != cb.num_subspaces() || codes.centroids != cb.num_centroids()) {
    fail(ErrorCode::DimensionMismatch, "codes are (M=" + std::to_string(codes.subspaces) + ", K=" +
                                           std::to_string(codes.centroids) + "), codebook is (M=" +
                                           std::to_string(cb.num_subspaces()) + ", K=" +
                                           std::to_string(cb.num_centroids()) + ")");
  }
  if (codes.entries.size() != codes.rows * codes.subspaces) {
    fail(ErrorCode::SchemaError, "code matrix size does not match its shape");
  }
  for (std::size_t t = 0; t < codes.entries.size(); ++t) {
    if (codes.entries[t] >= codes.centroids) {
      fail(ErrorCode::CodeOutOfRange, "row " + std::to_string(t / codes.subspaces) + " subspace " +
                                          std::to_string(t % codes.subspaces) + ": entry " +
                                          std::to_string(codes.entries[t]) + " is not below K=" +
                                          std::to_string(codes.centroids));
    }
  }
}

inline std::string valid_subspace_counts(std::size_t dim) {
  std::string out;
  for (std::size_t m = 1; m <= dim; ++m) {
    if (dim % m == 0) out += (out.empty() ? "" : ", ") + std::to_string(m);
  }
  return out;
}

struct TrainOptions {
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-4;
  std::size_t restarts = 10;
  std::function<void(const std::string&)> warn = nullptr;  // null: print to stderr
};

/// Trains one k-means codebook per contiguous block of D/M columns.
/// Subspace j uses seed + j.
inline Codebook train(MatrixView data, std::size_t subspaces, std::size_t centroids,
                      const TrainOptions& options = {}) {
  const std::size_t n = data.rows();
  const std::size_t dim = data.cols();
  if (subspaces < 1 || dim % subspaces != 0) {
    fail(ErrorCode::IndivisibleDims, "D=" + std::to_string(dim) + " is not divisible by M=" +
                                         std::to_string(subspaces) + "; valid M values: " +
                                         valid_subspace_counts(dim));
  }
  if (centroids < 1 || centroids > kMaxCentroids) {
    fail(ErrorCode::InvalidParams, "K must be in [1, 65536], got " + std::to_string(centroids));
  }
  if (n < centroids) {
    fail(ErrorCode::TooFewPoints, std::to_string(n) + " rows cannot train K=" + std::to_string(centroids));
  }

  for (std::size_t j = 0; j < dim; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += data(i, j);
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) sq += (data(i, j) - mean) * (data(i, j) - mean);
    const double sd = std::sqrt(sq / static_cast<double>(n));
    if (std::abs(sd - 1.0) > 0.1) {
      const std::string message = "column " + std::to_string(j) + " has standard deviation " +
                                  csv::format_double(sd) + "; input does not look standardized";
      if (options.warn) {
        options.warn(message);
      } else {
        std::cerr << "warning: " << message << '\n';
      }
      break;
    }
  }

  const std::size_t sub_dim = dim / subspaces;
  std::vector<double> values;
  values.reserve(subspaces * centroids * sub_dim);
  std::vector<double> sse;
  Matrix block(n, sub_dim);
  for (std::size_t j = 0; j < subspaces; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = data.row(i).subspan(j * sub_dim, sub_dim);
      std::ranges::copy(row, block.row(i).begin());
    }
    const auto model = kmeans::fit(block, centroids,
                                   {.seed = options.seed + j,
                                    .max_iters = options.max_iters,
                                    .tol = options.tol,
                                    .chunk_rows = kDefaultChunkRows,
                                    .restarts = options.restarts});
    values.insert(values.end(), model.centroids.data().begin(), model.centroids.data().end());
    sse.push_back(model.final_sse);
  }
  return Codebook(dim, subspaces, centroids, std::move(values), std::move(sse), options.seed);
}

inline Codebook train(const Dataset& data, std::size_t subspaces, std::size_t centroids,
                      const TrainOptions& options = {}) {
  return train(data.features.view(), subspaces, centroids, options);
}

namespace detail {
inline void encode_into(std::span<const double> v, const Codebook& cb, std::span<CodeEntry> out) {
  const std::size_t sub_dim = cb.sub_dim();
  for (std::size_t j = 0; j < cb.num_subspaces(); ++j) {
    const auto part = v.subspan(j * sub_dim, sub_dim);
    double best = squared_l2(part, cb.centroid(j, 0));
    std::size_t best_k = 0;
    for (std::size_t k = 1; k < cb.num_centroids(); ++k) {
      const double dist = squared_l2(part, cb.centroid(j, k));
      if (dist < best) {
        best = dist;
        best_k = k;
      }
    }
    out[j] = static_cast<CodeEntry>(best_k);
  }
}
}  // namespace detail

/// Nearest centroid per subspace, ties to the lowest index.
inline PQCode encode(std::span<const double> v, const Codebook& cb) {
  if (v.size() != cb.dim()) {
    fail(ErrorCode::DimensionMismatch, "vector has " + std::to_string(v.size()) + " dims, codebook expects " +
                                           std::to_string(cb.dim()));
  }
  PQCode code(cb.num_subspaces());
  detail::encode_into(v, cb, code);
  return code;
}

inline CodeMatrix encode(MatrixView data, const Codebook& cb) {
  if (data.cols() != cb.dim()) {
    fail(ErrorCode::DimensionMismatch, "data has " + std::to_string(data.cols()) + " dims, codebook expects " +
                                           std::to_string(cb.dim()));
  }
  CodeMatrix codes{data.rows(), cb.num_subspaces(), cb.num_centroids(), {}};
  codes.entries.resize(data.rows() * cb.num_subspaces());
  parallel_chunks(data.rows(), kDefaultChunkRows, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      detail::encode_into(data.row(i), cb,
                          std::span<CodeEntry>(codes.entries).subspan(i * codes.subspaces, codes.subspaces));
    }
  });
  return codes;
}

inline CodeMatrix encode(const Dataset& data, const Codebook& cb) { return encode(data.features.view(), cb); }

/// Concatenation of the selected centroids.
inline std::vector<double> decode(std::span<const CodeEntry> code, const Codebook& cb) {
  cb.check_code(code);
  std::vector<double> out;
  out.reserve(cb.dim());
  for (std::size_t j = 0; j < code.size(); ++j) {
    const auto c = cb.centroid(j, code[j]);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

struct ReconstructionError {
  double mse = 0.0;
  double rmse = 0.0;
};

namespace detail {
inline double row_error_sq(std::span<const double> x, std::span<const CodeEntry> code, const Codebook& cb) {
  const std::size_t sub_dim = cb.sub_dim();
  double total = 0.0;
  for (std::size_t j = 0; j < code.size(); ++j) {
    total += squared_l2(x.subspan(j * sub_dim, sub_dim), cb.centroid(j, code[j]));
  }
  return total;
}

inline ReconstructionError finish_error(const std::vector<double>& partial, std::size_t rows) {
  double total = 0.0;
  for (double p : partial) total += p;
  ReconstructionError err;
  err.mse = rows == 0 ? 0.0 : total / static_cast<double>(rows);
  err.rmse = std::sqrt(err.mse);
  return err;
}
}  // namespace detail

/// Mean squared round-trip error ||x - decode(encode(x))||^2 over the rows.
inline ReconstructionError reconstruction_error(MatrixView data, const Codebook& cb) {
  if (data.cols() != cb.dim()) {
    fail(ErrorCode::DimensionMismatch, "data has " + std::to_string(data.cols()) + " dims, codebook expects " +
                                           std::to_string(cb.dim()));
  }
  std::vector<double> partial(chunk_count(data.rows(), kDefaultChunkRows), 0.0);
  parallel_chunks(data.rows(), kDefaultChunkRows, [&](std::size_t c, std::size_t begin, std::size_t end) {
    PQCode code(cb.num_subspaces());
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      detail::encode_into(data.row(i), cb, code);
      total += detail::row_error_sq(data.row(i), code, cb);
    }
    partial[c] = total;
  });
  return detail::finish_error(partial, data.rows());
}

/// Same measure against codes that were computed (or loaded) earlier.
inline ReconstructionError reconstruction_error(MatrixView data, const CodeMatrix& codes, const Codebook& cb) {
  if (data.cols() != cb.dim() || data.rows() != codes.rows) {
    fail(ErrorCode::DimensionMismatch, "data is " + std::to_string(data.rows()) + "x" +
                                           std::to_string(data.cols()) + ", codes cover " +
                                           std::to_string(codes.rows) + " rows of D=" + std::to_string(cb.dim()));
  }
  check_codes_match(codes, cb);
  std::vector<double> partial(chunk_count(data.rows(), kDefaultChunkRows), 0.0);
  parallel_chunks(data.rows(), kDefaultChunkRows, [&](std::size_t c, std::size_t begin, std::size_t end) {
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i) total += detail::row_error_sq(data.row(i), codes.code(i), cb);
    partial[c] = total;
  });
  return detail::finish_error(partial, data.rows());
}

inline ReconstructionError reconstruction_error(const Dataset& data, const Codebook& cb) {
  return reconstruction_error(data.features.view(), cb);
}

}  // namespace soilpq
