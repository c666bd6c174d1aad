#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "soilpq/csv.hpp"
#include "soilpq/error.hpp"
#include "soilpq/pq.hpp"

namespace soilpq {

struct SweepRecord {
  std::size_t subspaces = 0;
  std::size_t centroids = 0;
  std::uint64_t num_classes = 0;
  double train_seconds = 0.0;
  double encode_seconds = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  std::uint64_t seed = 0;
  bool skipped = false;
  std::string reason;  // why the cell was skipped
  friend bool operator==(const SweepRecord&, const SweepRecord&) = default;
};

struct ParetoPoint {
  SweepRecord record;
  bool dominated = false;
};

struct SweepOptions {
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-4;
  std::size_t restarts = 10;
  std::size_t repeats = 1;  // timings are the median over repeats
  bool timing = true;       // false reports zero seconds, for byte-stable output
};

namespace detail {
inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

inline std::string skip_reason(std::size_t dim, std::size_t rows, std::size_t m, std::size_t k) {
  if (m < 1 || dim % m != 0) {
    return "D=" + std::to_string(dim) + " not divisible by M=" + std::to_string(m) + " (valid M: " +
           valid_subspace_counts(dim) + ")";
  }
  if (k < 1 || k > kMaxCentroids) return "K=" + std::to_string(k) + " outside [1, 65536]";
  if (rows < k) return "N=" + std::to_string(rows) + " rows is fewer than K=" + std::to_string(k);
  try {
    num_classes(m, k);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}
}  // namespace detail

/// Trains and evaluates every (M, K) in the Cartesian product, M-major.
/// Cells that cannot be trained are kept as skipped records with a reason.
inline std::vector<SweepRecord> run_sweep(MatrixView data, std::span<const std::size_t> subspace_list,
                                          std::span<const std::size_t> centroid_list,
                                          const SweepOptions& options = {}) {
  if (subspace_list.empty() || centroid_list.empty()) fail(ErrorCode::EmptyGrid, "sweep grid is empty");
  if (options.repeats < 1) fail(ErrorCode::InvalidParams, "repeats must be at least 1");
  using clock = std::chrono::steady_clock;
  std::vector<SweepRecord> records;
  for (std::size_t m : subspace_list) {
    for (std::size_t k : centroid_list) {
      SweepRecord rec;
      rec.subspaces = m;
      rec.centroids = k;
      rec.seed = options.seed;
      rec.reason = detail::skip_reason(data.cols(), data.rows(), m, k);
      if (!rec.reason.empty()) {
        rec.skipped = true;
        records.push_back(std::move(rec));
        continue;
      }
      rec.num_classes = num_classes(m, k);
      std::vector<double> train_times;
      std::vector<double> encode_times;
      for (std::size_t r = 0; r < options.repeats; ++r) {
        const auto t0 = clock::now();
        const Codebook cb = train(data, m, k,
                                  {options.seed, options.max_iters, options.tol, options.restarts,
                                   [](const std::string&) {}});
        const auto t1 = clock::now();
        const CodeMatrix codes = encode(data, cb);
        const auto t2 = clock::now();
        train_times.push_back(std::chrono::duration<double>(t1 - t0).count());
        encode_times.push_back(std::chrono::duration<double>(t2 - t1).count());
        if (r == 0) {
          const auto err = reconstruction_error(data, codes, cb);
          rec.mse = err.mse;
          rec.rmse = err.rmse;
        }
      }
      if (options.timing) {
        rec.train_seconds = detail::median(train_times);
        rec.encode_seconds = detail::median(encode_times);
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

inline std::vector<SweepRecord> run_sweep(const Dataset& data, std::span<const std::size_t> subspace_list,
                                          std::span<const std::size_t> centroid_list,
                                          const SweepOptions& options = {}) {
  return run_sweep(data.features.view(), subspace_list, centroid_list, options);
}

/// a dominates b when it is no worse in both mse and train_seconds and
/// strictly better in at least one.
inline bool dominates(const SweepRecord& a, const SweepRecord& b) noexcept {
  return a.mse <= b.mse && a.train_seconds <= b.train_seconds &&
         (a.mse < b.mse || a.train_seconds < b.train_seconds);
}

/// Flags dominated records under (mse, train_seconds) minimization; output is
/// sorted by mse, then by the remaining fields so equal-mse ties do not depend
/// on input order.
inline std::vector<ParetoPoint> pareto_front(std::span<const SweepRecord> records) {
  if (records.empty()) fail(ErrorCode::InvalidParams, "no records to rank");
  for (const auto& r : records) {
    if (r.skipped) {
      fail(ErrorCode::InvalidParams, "skipped record (M=" + std::to_string(r.subspaces) + ", K=" +
                                         std::to_string(r.centroids) + ") has no measurements");
    }
  }
  auto key = [](const SweepRecord& r) {
    return std::tie(r.mse, r.train_seconds, r.encode_seconds, r.subspaces, r.centroids, r.seed, r.rmse,
                    r.num_classes);
  };
  std::vector<ParetoPoint> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r, false});
  std::sort(out.begin(), out.end(), [&](const ParetoPoint& a, const ParetoPoint& b) {
    return key(a.record) < key(b.record);
  });

  // Sweep groups of equal mse. Within a group the first entry has the least
  // train time; anything slower than the best strictly-lower-mse time or the
  // group's own best is dominated.
  double best_time_below = std::numeric_limits<double>::infinity();
  for (std::size_t first = 0; first < out.size();) {
    std::size_t last = first;
    while (last < out.size() && out[last].record.mse == out[first].record.mse) ++last;
    const double group_best = out[first].record.train_seconds;
    for (std::size_t i = first; i < last; ++i) {
      const double t = out[i].record.train_seconds;
      out[i].dominated = best_time_below <= t || group_best < t;
    }
    best_time_below = std::min(best_time_below, group_best);
    first = last;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: M,K,num_classes,train_seconds,encode_seconds,mse,rmse,seed,status,reason
// with an extra trailing `dominated` column for Pareto output.

namespace detail {
inline std::string quote_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_record(std::ostream& out, const SweepRecord& r) {
  out << r.subspaces << ',' << r.centroids << ',';
  if (r.num_classes) out << r.num_classes;
  out << ',';
  if (r.skipped) {
    out << ",,,";
  } else {
    out << csv::format_double(r.train_seconds) << ',' << csv::format_double(r.encode_seconds) << ','
        << csv::format_double(r.mse) << ',' << csv::format_double(r.rmse);
  }
  out << ',' << r.seed << ',' << (r.skipped ? "skipped" : "ok") << ',' << quote_field(r.reason);
}

inline constexpr const char* kSweepHeader = "M,K,num_classes,train_seconds,encode_seconds,mse,rmse,seed,status,reason";
}  // namespace detail

inline void write_sweep_csv(std::span<const SweepRecord> records, const std::string& path) {
  auto out = csv::open_for_write(path);
  out << detail::kSweepHeader << '\n';
  for (const auto& r : records) {
    detail::write_record(out, r);
    out << '\n';
  }
  csv::finish_write(out, path);
}

inline void write_pareto_csv(std::span<const ParetoPoint> points, const std::string& path) {
  auto out = csv::open_for_write(path);
  out << detail::kSweepHeader << ",dominated\n";
  for (const auto& p : points) {
    detail::write_record(out, p.record);
    out << ',' << (p.dominated ? "true" : "false") << '\n';
  }
  csv::finish_write(out, path);
}

inline std::vector<SweepRecord> read_sweep_csv(const std::string& path) {
  const auto doc = csv::read_document(path);
  const std::vector<std::string> expected = {"M",   "K",    "num_classes", "train_seconds", "encode_seconds",
                                             "mse", "rmse", "seed",        "status",        "reason"};
  if (doc.header.size() < expected.size() ||
      !std::equal(expected.begin(), expected.end(), doc.header.begin())) {
    fail(ErrorCode::SchemaError, "'" + path + "': header must start with " + detail::kSweepHeader);
  }
  std::vector<SweepRecord> records;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& f = doc.rows[r];
    auto bad = [&](std::size_t c) -> void {
      fail(ErrorCode::SchemaError, "'" + path + "' row " + std::to_string(r) + " column '" + expected[c] +
                                       "': cannot parse '" + f[c] + "'");
    };
    auto integer = [&](std::size_t c) {
      const auto v = csv::parse_integer<std::uint64_t>(f[c]);
      if (!v) bad(c);
      return *v;
    };
    auto real = [&](std::size_t c) {
      const auto v = csv::parse_double(f[c]);
      if (!v) bad(c);
      return *v;
    };
    SweepRecord rec;
    rec.subspaces = integer(0);
    rec.centroids = integer(1);
    rec.seed = integer(7);
    rec.reason = f[9];
    if (f[8] == "skipped") {
      rec.skipped = true;
      if (!f[2].empty()) rec.num_classes = integer(2);
    } else if (f[8] == "ok") {
      rec.num_classes = integer(2);
      rec.train_seconds = real(3);
      rec.encode_seconds = real(4);
      rec.mse = real(5);
      rec.rmse = real(6);
    } else {
      bad(8);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace soilpq
