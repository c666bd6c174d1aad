#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "soilpq/csv.hpp"
#include "soilpq/error.hpp"
#include "soilpq/matrix.hpp"
#include "soilpq/random.hpp"

namespace soilpq {

struct Coord {
  double lon = 0.0;
  double lat = 0.0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

/// Tabular input before cleaning. Missing cells are stored as NaN.
struct RawTable {
  std::vector<std::string> feature_names;
  std::vector<Coord> coords;  // empty when the source carried no lon/lat
  Matrix features;

  std::size_t rows() const noexcept { return features.rows(); }
  bool has_coords() const noexcept { return !coords.empty(); }
};

/// Clean, finite N x D feature matrix.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<Coord> coords;
  Matrix features;

  std::size_t rows() const noexcept { return features.rows(); }
  std::size_t dims() const noexcept { return features.cols(); }
  bool has_coords() const noexcept { return !coords.empty(); }
};

enum class LogBase { natural, base10 };

struct ScalerColumn {
  std::string name;
  bool is_ph = false;
  double mean = 0.0;
  double std = 1.0;  // population standard deviation of the log-space column
  bool log_applied = true;
  friend bool operator==(const ScalerColumn&, const ScalerColumn&) = default;
};

/// Everything needed to push a raw feature vector through the same
/// transform chain as the training data.
struct Scaler {
  std::vector<ScalerColumn> columns;
  LogBase log_base = LogBase::natural;
  friend bool operator==(const Scaler&, const Scaler&) = default;
};

struct CleanSummary {
  std::size_t missing = 0;
  std::size_t negative = 0;
  std::size_t duplicate = 0;
  friend bool operator==(const CleanSummary&, const CleanSummary&) = default;
};

struct CleanResult {
  Dataset data;
  CleanSummary summary;
  std::vector<std::size_t> kept_rows;  // input row index of each surviving row
};

struct FitTransformResult {
  Dataset data;
  Scaler scaler;
};

struct SyntheticTable {
  RawTable table;
  std::vector<std::size_t> labels;  // generating cluster of each row
};

namespace detail {

inline void validate_names(const std::vector<std::string>& names) {
  if (names.empty()) fail(ErrorCode::SchemaError, "table has no feature columns");
  std::set<std::string> seen;
  for (const auto& name : names) {
    if (name.empty()) fail(ErrorCode::SchemaError, "empty column name");
    if (name == "lon" || name == "lat" || !seen.insert(name).second) {
      fail(ErrorCode::SchemaError, "duplicate column name '" + name + "'");
    }
  }
}

inline std::pair<std::uint64_t, std::uint64_t> coord_bits(const Coord& c) {
  return {std::bit_cast<std::uint64_t>(c.lon), std::bit_cast<std::uint64_t>(c.lat)};
}

struct CoordBitsHash {
  std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& p) const noexcept {
    return std::hash<std::uint64_t>{}(p.first * 0x9E3779B97F4A7C15ull ^ p.second);
  }
};

}  // namespace detail

/// The log step alone: log(v) for ordinary columns, log(10^-pH) = -pH*log(10)
/// for pH columns (closed form, since 10^-pH underflows for large pH).
inline double log_step(double v, bool is_ph, LogBase base = LogBase::natural) {
  if (is_ph) return base == LogBase::natural ? -v * std::numbers::ln10 : -v;
  if (!(v > 0.0)) fail(ErrorCode::NonPositive, "value " + csv::format_double(v) + " is not positive");
  return base == LogBase::natural ? std::log(v) : std::log10(v);
}

namespace detail {

inline double log_value(double v, const ScalerColumn& column, LogBase base, std::size_t row) {
  if (!column.log_applied) return v;
  if (!column.is_ph && !(v > 0.0)) {
    fail(ErrorCode::NonPositive, "column '" + column.name + "' row " + std::to_string(row) +
                                     ": value " + csv::format_double(v) + " is not positive");
  }
  return log_step(v, column.is_ph, base);
}

}  // namespace detail

/// Drops rows with missing cells, rows with any negative feature value and
/// rows repeating an earlier (lon, lat) pair (bitwise comparison). Row order
/// is otherwise preserved. Duplicates are judged among rows that passed the
/// first two filters, so a dropped row never shadows a valid later one.
inline CleanResult clean(const RawTable& raw) {
  detail::validate_names(raw.feature_names);
  if (raw.features.cols() != raw.feature_names.size()) {
    fail(ErrorCode::SchemaError, "feature matrix width does not match column names");
  }
  if (raw.has_coords() && raw.coords.size() != raw.rows()) {
    fail(ErrorCode::SchemaError, "coordinate count does not match row count");
  }

  CleanResult result;
  result.data.feature_names = raw.feature_names;
  std::unordered_set<std::pair<std::uint64_t, std::uint64_t>, detail::CoordBitsHash> seen;
  std::vector<double> kept;
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const auto row = raw.features.row(i);
    bool missing = std::any_of(row.begin(), row.end(), [](double v) { return !std::isfinite(v); });
    if (raw.has_coords()) {
      missing = missing || !std::isfinite(raw.coords[i].lon) || !std::isfinite(raw.coords[i].lat);
    }
    if (missing) {
      ++result.summary.missing;
      continue;
    }
    if (std::any_of(row.begin(), row.end(), [](double v) { return v < 0.0; })) {
      ++result.summary.negative;
      continue;
    }
    if (raw.has_coords() && !seen.insert(detail::coord_bits(raw.coords[i])).second) {
      ++result.summary.duplicate;
      continue;
    }
    kept.insert(kept.end(), row.begin(), row.end());
    if (raw.has_coords()) result.data.coords.push_back(raw.coords[i]);
    result.kept_rows.push_back(i);
  }
  if (result.kept_rows.empty()) {
    fail(ErrorCode::AllRowsRemoved,
         "no rows survive cleaning (missing " + std::to_string(result.summary.missing) + ", negative " +
             std::to_string(result.summary.negative) + ", duplicate " +
             std::to_string(result.summary.duplicate) + ")");
  }
  result.data.features = Matrix(result.kept_rows.size(), raw.feature_names.size(), std::move(kept));
  return result;
}

inline RawTable to_raw_table(const Dataset& data) {
  return RawTable{data.feature_names, data.coords, data.features};
}

/// Validates a table that is expected to be clean already (no missing cells).
inline Dataset to_dataset(const RawTable& raw) {
  detail::validate_names(raw.feature_names);
  if (raw.rows() == 0) fail(ErrorCode::SchemaError, "table has no rows");
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const auto row = raw.features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!std::isfinite(row[j])) {
        fail(ErrorCode::NonFinite, "row " + std::to_string(i) + " column '" + raw.feature_names[j] +
                                       "' is missing or not finite");
      }
    }
  }
  return Dataset{raw.feature_names, raw.coords, raw.features};
}

/// Log transform (pH columns as log(10^-pH)), then per-column centering and
/// scaling by the population standard deviation.
inline FitTransformResult fit_transform(const Dataset& data, const std::set<std::string>& ph_columns,
                                        LogBase base = LogBase::natural) {
  const std::size_t n = data.rows();
  const std::size_t d = data.dims();
  if (n == 0 || d == 0) fail(ErrorCode::SchemaError, "dataset is empty");
  for (const auto& name : ph_columns) {
    if (std::find(data.feature_names.begin(), data.feature_names.end(), name) == data.feature_names.end()) {
      fail(ErrorCode::SchemaError, "pH column '" + name + "' is not a feature column");
    }
  }

  FitTransformResult result;
  result.scaler.log_base = base;
  result.data.feature_names = data.feature_names;
  result.data.coords = data.coords;
  result.data.features = Matrix(n, d);
  Matrix& out = result.data.features;

  std::vector<std::string> constant;
  for (std::size_t j = 0; j < d; ++j) {
    ScalerColumn column{data.feature_names[j], ph_columns.contains(data.feature_names[j]), 0.0, 1.0, true};
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out(i, j) = detail::log_value(data.features(i, j), column, base, i);
      sum += out(i, j);
    }
    column.mean = sum / static_cast<double>(n);
    double sq = 0.0;
    double lo = out(0, j);
    double hi = out(0, j);
    for (std::size_t i = 0; i < n; ++i) {
      const double centered = out(i, j) - column.mean;
      sq += centered * centered;
      lo = std::min(lo, out(i, j));
      hi = std::max(hi, out(i, j));
    }
    column.std = std::sqrt(sq / static_cast<double>(n));
    if (lo == hi || !(column.std > 0.0)) constant.push_back(column.name);
    result.scaler.columns.push_back(std::move(column));
  }
  if (!constant.empty()) {
    std::string list;
    for (const auto& name : constant) list += (list.empty() ? "" : ", ") + name;
    fail(ErrorCode::ZeroVariance, "constant column(s) after transform: " + list);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const auto& c = result.scaler.columns[j];
      out(i, j) = (out(i, j) - c.mean) / c.std;
    }
  }
  return result;
}

/// Applies a fitted transform chain to one raw feature vector.
inline std::vector<double> apply_scaler(std::span<const double> raw, const Scaler& scaler) {
  if (raw.size() != scaler.columns.size()) {
    fail(ErrorCode::DimensionMismatch, "vector has " + std::to_string(raw.size()) + " values, scaler expects " +
                                           std::to_string(scaler.columns.size()));
  }
  std::vector<double> out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    const auto& c = scaler.columns[j];
    out[j] = (detail::log_value(raw[j], c, scaler.log_base, 0) - c.mean) / c.std;
  }
  return out;
}

/// Gaussian blobs around g random centers, shifted so every feature is
/// positive, with uniform random coordinates. Row i belongs to cluster i % g.
inline SyntheticTable gen_synthetic(std::size_t n, std::size_t d, std::size_t g, std::uint64_t seed) {
  if (g < 1 || d < 1 || n < g) {
    fail(ErrorCode::InvalidParams, "gen_synthetic needs n >= g >= 1 and d >= 1 (n=" + std::to_string(n) +
                                       ", d=" + std::to_string(d) + ", g=" + std::to_string(g) + ")");
  }
  Rng rng(seed);
  Matrix centers(g, d);
  for (double& c : centers.data()) c = rng.uniform(-20.0, 20.0);

  SyntheticTable out;
  auto& table = out.table;
  for (std::size_t j = 0; j < d; ++j) table.feature_names.push_back("f" + std::to_string(j + 1));
  table.features = Matrix(n, d);
  table.coords.resize(n);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % g;
    out.labels[i] = label;
    for (std::size_t j = 0; j < d; ++j) table.features(i, j) = centers(label, j) + rng.normal();
    table.coords[i] = Coord{rng.uniform(-180.0, 180.0), rng.uniform(-90.0, 90.0)};
  }
  for (std::size_t j = 0; j < d; ++j) {
    double lo = table.features(0, j);
    for (std::size_t i = 1; i < n; ++i) lo = std::min(lo, table.features(i, j));
    const double shift = 1.0 - lo;
    for (std::size_t i = 0; i < n; ++i) table.features(i, j) += shift;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingest / export. Columns are `lon,lat,<features...>`; the coordinate
// pair is optional but must come first when present.

inline RawTable read_raw_table(const std::string& path) {
  const auto doc = csv::read_document(path);
  const bool coords = doc.header.size() >= 2 && doc.header[0] == "lon" && doc.header[1] == "lat";
  const std::size_t first = coords ? 2 : 0;
  RawTable table;
  table.feature_names.assign(doc.header.begin() + static_cast<std::ptrdiff_t>(first), doc.header.end());
  if (table.feature_names.empty()) fail(ErrorCode::SchemaError, "'" + path + "': no feature columns");
  detail::validate_names(table.feature_names);

  std::vector<double> values;
  values.reserve(doc.rows.size() * table.feature_names.size());
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& fields = doc.rows[r];
    auto cell = [&](std::size_t c) {
      if (csv::is_missing_token(fields[c])) return std::numeric_limits<double>::quiet_NaN();
      const auto v = csv::parse_double(fields[c]);
      if (!v) {
        fail(ErrorCode::SchemaError, "'" + path + "' row " + std::to_string(r) + " column '" + doc.header[c] +
                                         "': cannot parse '" + fields[c] + "'");
      }
      return *v;
    };
    if (coords) table.coords.push_back(Coord{cell(0), cell(1)});
    for (std::size_t c = first; c < fields.size(); ++c) values.push_back(cell(c));
  }
  table.features = Matrix(doc.rows.size(), table.feature_names.size(), std::move(values));
  return table;
}

inline void write_table(const RawTable& table, const std::string& path) {
  auto out = csv::open_for_write(path);
  if (table.has_coords()) out << "lon,lat" << (table.feature_names.empty() ? "" : ",");
  for (std::size_t j = 0; j < table.feature_names.size(); ++j) {
    out << (j ? "," : "") << table.feature_names[j];
  }
  out << '\n';
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (table.has_coords()) {
      out << csv::format_double(table.coords[i].lon) << ',' << csv::format_double(table.coords[i].lat) << ',';
    }
    const auto row = table.features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      if (!std::isnan(row[j])) out << csv::format_double(row[j]);
    }
    out << '\n';
  }
  csv::finish_write(out, path);
}

inline void write_dataset(const Dataset& data, const std::string& path) { write_table(to_raw_table(data), path); }

inline Dataset read_dataset(const std::string& path) {
  try {
    return to_dataset(read_raw_table(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NonFinite) fail(ErrorCode::NonFinite, "'" + path + "': " + e.what());
    throw;
  }
}

}  // namespace soilpq
