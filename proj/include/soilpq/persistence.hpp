#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soilpq/csv.hpp"
#include "soilpq/error.hpp"
#include "soilpq/pq.hpp"
#include "soilpq/preprocess.hpp"

namespace soilpq::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr std::array<char, 4> kCodesMagic = {'P', 'Q', 'C', '1'};
inline constexpr std::size_t kCodesHeaderBytes = 12;

namespace detail {

inline const json& field(const json& object, const std::string& path, const char* key) {
  if (!object.is_object()) fail(ErrorCode::SchemaError, path + ": expected an object");
  const auto it = object.find(key);
  if (it == object.end()) fail(ErrorCode::SchemaError, path + "/" + key + ": missing");
  return *it;
}

inline double number(const json& value, const std::string& path) {
  if (!value.is_number()) fail(ErrorCode::SchemaError, path + ": expected a number");
  return value.get<double>();
}

inline std::uint64_t count(const json& value, const std::string& path) {
  if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0)) {
    fail(ErrorCode::SchemaError, path + ": expected a non-negative integer");
  }
  return value.get<std::uint64_t>();
}

inline bool boolean(const json& value, const std::string& path) {
  if (!value.is_boolean()) fail(ErrorCode::SchemaError, path + ": expected true/false");
  return value.get<bool>();
}

inline const json& array(const json& value, const std::string& path, std::size_t expected_size) {
  if (!value.is_array()) fail(ErrorCode::SchemaError, path + ": expected an array");
  if (value.size() != expected_size) {
    fail(ErrorCode::SchemaError, path + ": expected " + std::to_string(expected_size) + " entries, found " +
                                     std::to_string(value.size()));
  }
  return value;
}

inline json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, "'" + path + "': invalid JSON: " + e.what());
  }
}

inline void write_text(const std::string& text, const std::string& path) {
  auto out = csv::open_for_write(path);
  out << text << '\n';
  csv::finish_write(out, path);
}

inline void check_version(const json& doc, const std::string& path) {
  const auto version = count(field(doc, "", "format_version"), "/format_version");
  if (version != kFormatVersion) {
    fail(ErrorCode::FormatVersionMismatch, "'" + path + "': format_version " + std::to_string(version) +
                                               " is not supported (expected " + std::to_string(kFormatVersion) + ")");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scaler

inline json scaler_to_json(const Scaler& scaler) {
  json columns = json::array();
  for (const auto& c : scaler.columns) {
    columns.push_back({{"name", c.name}, {"is_ph", c.is_ph}, {"mean", c.mean}, {"std", c.std},
                       {"log_applied", c.log_applied}});
  }
  return {{"log_base", scaler.log_base == LogBase::natural ? "e" : "10"}, {"columns", std::move(columns)}};
}

inline Scaler scaler_from_json(const json& doc, const std::string& path) {
  Scaler scaler;
  if (doc.contains("log_base")) {
    const auto& base = doc["log_base"];
    if (base == "e") {
      scaler.log_base = LogBase::natural;
    } else if (base == "10") {
      scaler.log_base = LogBase::base10;
    } else {
      fail(ErrorCode::SchemaError, path + "/log_base: expected \"e\" or \"10\"");
    }
  }
  const auto& columns = detail::field(doc, path, "columns");
  if (!columns.is_array()) fail(ErrorCode::SchemaError, path + "/columns: expected an array");
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const std::string p = path + "/columns/" + std::to_string(j);
    const auto& c = columns[j];
    ScalerColumn column;
    const auto& name = detail::field(c, p, "name");
    if (!name.is_string()) fail(ErrorCode::SchemaError, p + "/name: expected a string");
    column.name = name.get<std::string>();
    column.is_ph = detail::boolean(detail::field(c, p, "is_ph"), p + "/is_ph");
    column.mean = detail::number(detail::field(c, p, "mean"), p + "/mean");
    column.std = detail::number(detail::field(c, p, "std"), p + "/std");
    column.log_applied = c.contains("log_applied") ? detail::boolean(c["log_applied"], p + "/log_applied") : true;
    if (!(column.std > 0.0)) fail(ErrorCode::SchemaError, p + "/std: must be positive");
    scaler.columns.push_back(std::move(column));
  }
  return scaler;
}

inline void save_scaler(const Scaler& scaler, const std::string& path) {
  json doc = scaler_to_json(scaler);
  doc["format_version"] = kFormatVersion;
  detail::write_text(doc.dump(2), path);
}

inline Scaler load_scaler(const std::string& path) {
  const json doc = detail::read_json(path);
  detail::check_version(doc, path);
  return scaler_from_json(doc, "");
}

// ---------------------------------------------------------------------------
// Codebook JSON

inline json codebook_to_json(const Codebook& cb) {
  json centroids = json::array();
  for (std::size_t j = 0; j < cb.num_subspaces(); ++j) {
    json block = json::array();
    for (std::size_t k = 0; k < cb.num_centroids(); ++k) {
      const auto c = cb.centroid(j, k);
      block.push_back(json(std::vector<double>(c.begin(), c.end())));
    }
    centroids.push_back(std::move(block));
  }
  const auto sse = cb.subspace_sse();
  json doc = {{"format_version", kFormatVersion},
              {"D", cb.dim()},
              {"M", cb.num_subspaces()},
              {"K", cb.num_centroids()},
              {"sub_dim", cb.sub_dim()},
              {"seed", cb.seed()},
              {"subspace_sse", std::vector<double>(sse.begin(), sse.end())},
              {"centroids", std::move(centroids)}};
  if (cb.scaler()) doc["scaler"] = scaler_to_json(*cb.scaler());
  return doc;
}

/// Unknown fields are ignored.
inline Codebook codebook_from_json(const json& doc, const std::string& source) {
  using detail::count;
  using detail::field;
  if (!doc.is_object()) fail(ErrorCode::SchemaError, "'" + source + "': top level must be an object");
  detail::check_version(doc, source);
  const std::size_t dim = count(field(doc, "", "D"), "/D");
  const std::size_t subspaces = count(field(doc, "", "M"), "/M");
  const std::size_t centroids = count(field(doc, "", "K"), "/K");
  if (subspaces == 0 || dim == 0 || dim % subspaces != 0) {
    fail(ErrorCode::SchemaError, "/M: D=" + std::to_string(dim) + " is not divisible by M=" +
                                     std::to_string(subspaces));
  }
  if (centroids == 0 || centroids > kMaxCentroids) fail(ErrorCode::SchemaError, "/K: must be in [1, 65536]");
  const std::size_t sub_dim = dim / subspaces;
  if (doc.contains("sub_dim") && count(doc["sub_dim"], "/sub_dim") != sub_dim) {
    fail(ErrorCode::SchemaError, "/sub_dim: expected D/M = " + std::to_string(sub_dim));
  }
  const std::uint64_t seed = doc.contains("seed") ? count(doc["seed"], "/seed") : 0;

  std::vector<double> values;
  values.reserve(subspaces * centroids * sub_dim);
  const auto& blocks = detail::array(field(doc, "", "centroids"), "/centroids", subspaces);
  for (std::size_t j = 0; j < subspaces; ++j) {
    const std::string pj = "/centroids/" + std::to_string(j);
    const auto& block = detail::array(blocks[j], pj, centroids);
    for (std::size_t k = 0; k < centroids; ++k) {
      const std::string pk = pj + "/" + std::to_string(k);
      const auto& c = detail::array(block[k], pk, sub_dim);
      for (std::size_t t = 0; t < sub_dim; ++t) values.push_back(detail::number(c[t], pk + "/" + std::to_string(t)));
    }
  }
  std::vector<double> sse;
  if (doc.contains("subspace_sse")) {
    const auto& s = detail::array(doc["subspace_sse"], "/subspace_sse", subspaces);
    for (std::size_t j = 0; j < subspaces; ++j) sse.push_back(detail::number(s[j], "/subspace_sse/" + std::to_string(j)));
  }
  std::optional<Scaler> scaler;
  if (doc.contains("scaler") && !doc["scaler"].is_null()) scaler = scaler_from_json(doc["scaler"], "/scaler");
  return Codebook(dim, subspaces, centroids, std::move(values), std::move(sse), seed, std::move(scaler));
}

inline void save_codebook(const Codebook& cb, const std::string& path) {
  detail::write_text(codebook_to_json(cb).dump(2), path);
}

inline Codebook load_codebook(const std::string& path) {
  return codebook_from_json(detail::read_json(path), path);
}

// ---------------------------------------------------------------------------
// Codes: "PQC1", u32 N, u16 M, u16 K (0 encodes 65536), then N*M u16 entries.
// All integers little-endian.

inline std::vector<std::uint8_t> codes_to_bytes(const CodeMatrix& codes) {
  if (codes.rows > UINT32_MAX) fail(ErrorCode::InvalidParams, "codes file holds at most 2^32 - 1 rows");
  if (codes.subspaces < 1 || codes.subspaces > UINT16_MAX) fail(ErrorCode::InvalidParams, "M must be in [1, 65535]");
  if (codes.centroids < 1 || codes.centroids > kMaxCentroids) fail(ErrorCode::InvalidParams, "K must be in [1, 65536]");
  if (codes.entries.size() != codes.rows * codes.subspaces) {
    fail(ErrorCode::SchemaError, "code matrix size does not match its shape");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(kCodesHeaderBytes + 2 * codes.entries.size());
  auto put = [&](std::uint64_t v, int width) {
    for (int b = 0; b < width; ++b) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  };
  bytes.insert(bytes.end(), kCodesMagic.begin(), kCodesMagic.end());
  put(codes.rows, 4);
  put(codes.subspaces, 2);
  put(codes.centroids == kMaxCentroids ? 0 : codes.centroids, 2);
  for (std::size_t t = 0; t < codes.entries.size(); ++t) {
    if (codes.entries[t] >= codes.centroids) {
      fail(ErrorCode::CodeOutOfRange, "row " + std::to_string(t / codes.subspaces) + ": entry " +
                                          std::to_string(codes.entries[t]) + " is not below K");
    }
    put(codes.entries[t], 2);
  }
  return bytes;
}

/// Validates magic, declared size and entry range before trusting anything.
inline CodeMatrix codes_from_bytes(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>") {
  auto get = [&](std::size_t offset, int width) {
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) v |= static_cast<std::uint64_t>(bytes[offset + b]) << (8 * b);
    return v;
  };
  if (bytes.size() < kCodesHeaderBytes) {
    fail(ErrorCode::CorruptFile, "'" + source + "': " + std::to_string(bytes.size()) +
                                     " bytes is shorter than the 12-byte header");
  }
  if (!std::equal(kCodesMagic.begin(), kCodesMagic.end(), bytes.begin())) {
    fail(ErrorCode::CorruptFile, "'" + source + "': bad magic, expected PQC1");
  }
  CodeMatrix codes;
  codes.rows = get(4, 4);
  codes.subspaces = get(8, 2);
  codes.centroids = get(10, 2);
  if (codes.centroids == 0) codes.centroids = kMaxCentroids;
  if (codes.subspaces == 0) fail(ErrorCode::CorruptFile, "'" + source + "': M is zero");
  const std::uint64_t expected = kCodesHeaderBytes + 2ull * codes.rows * codes.subspaces;
  if (bytes.size() != expected) {
    fail(ErrorCode::CorruptFile, "'" + source + "': size " + std::to_string(bytes.size()) + " bytes, header declares " +
                                     std::to_string(expected));
  }
  codes.entries.resize(codes.rows * codes.subspaces);
  for (std::size_t t = 0; t < codes.entries.size(); ++t) {
    const auto v = get(kCodesHeaderBytes + 2 * t, 2);
    if (v >= codes.centroids) {
      fail(ErrorCode::CodeOutOfRange, "'" + source + "' row " + std::to_string(t / codes.subspaces) +
                                          " subspace " + std::to_string(t % codes.subspaces) + ": entry " +
                                          std::to_string(v) + " is not below K=" + std::to_string(codes.centroids));
    }
    codes.entries[t] = static_cast<CodeEntry>(v);
  }
  return codes;
}

inline void save_codes(const CodeMatrix& codes, const std::string& path) {
  const auto bytes = codes_to_bytes(codes);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) fail(ErrorCode::IoError, "write to '" + path + "' failed");
}

inline CodeMatrix load_codes(const std::string& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) fail(ErrorCode::IoError, "cannot stat '" + path + "': " + ec.message());
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> header(std::min<std::uintmax_t>(size, kCodesHeaderBytes));
  in.read(reinterpret_cast<char*>(header.data()), static_cast<std::streamsize>(header.size()));
  if (header.size() == kCodesHeaderBytes && std::equal(kCodesMagic.begin(), kCodesMagic.end(), header.begin())) {
    const std::uint64_t rows = header[4] | header[5] << 8 | header[6] << 16 | static_cast<std::uint64_t>(header[7]) << 24;
    const std::uint64_t m = header[8] | header[9] << 8;
    if (size != kCodesHeaderBytes + 2 * rows * m) {
      fail(ErrorCode::CorruptFile, "'" + path + "': size " + std::to_string(size) + " bytes, header declares " +
                                       std::to_string(kCodesHeaderBytes + 2 * rows * m));
    }
  } else {
    return codes_from_bytes(header, path);
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  std::copy(header.begin(), header.end(), bytes.begin());
  in.read(reinterpret_cast<char*>(bytes.data() + kCodesHeaderBytes),
          static_cast<std::streamsize>(bytes.size() - kCodesHeaderBytes));
  if (!in) fail(ErrorCode::IoError, "read from '" + path + "' failed");
  return codes_from_bytes(bytes, path);
}

// ---------------------------------------------------------------------------
// Assignments CSV: row_id,lon,lat,class_id

struct AssignmentRow {
  std::size_t row_id = 0;
  Coord coord;
  std::uint64_t class_id = 0;
  friend bool operator==(const AssignmentRow&, const AssignmentRow&) = default;
};

inline void save_assignments(const CodeMatrix& codes, std::span<const Coord> coords, const Codebook& cb,
                             const std::string& path) {
  check_codes_match(codes, cb);
  if (coords.empty() && codes.rows > 0) fail(ErrorCode::MissingCoords, "no coordinates supplied for " + path);
  if (coords.size() != codes.rows) {
    fail(ErrorCode::DimensionMismatch, std::to_string(coords.size()) + " coordinates for " +
                                           std::to_string(codes.rows) + " encoded rows");
  }
  auto out = csv::open_for_write(path);
  out << "row_id,lon,lat,class_id\n";
  for (std::size_t i = 0; i < codes.rows; ++i) {
    out << i << ',' << csv::format_double(coords[i].lon) << ',' << csv::format_double(coords[i].lat) << ','
        << class_id(codes.code(i), codes.centroids) << '\n';
  }
  csv::finish_write(out, path);
}

inline std::vector<AssignmentRow> load_assignments(const std::string& path) {
  const auto doc = csv::read_document(path);
  if (doc.header != std::vector<std::string>{"row_id", "lon", "lat", "class_id"}) {
    fail(ErrorCode::SchemaError, "'" + path + "': header must be row_id,lon,lat,class_id");
  }
  std::vector<AssignmentRow> rows;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& f = doc.rows[r];
    const auto id = csv::parse_integer<std::size_t>(f[0]);
    const auto lon = csv::parse_double(f[1]);
    const auto lat = csv::parse_double(f[2]);
    const auto cls = csv::parse_integer<std::uint64_t>(f[3]);
    if (!id || !lon || !lat || !cls) fail(ErrorCode::SchemaError, "'" + path + "' row " + std::to_string(r) + ": malformed");
    rows.push_back({*id, {*lon, *lat}, *cls});
  }
  return rows;
}

}  // namespace soilpq::io
