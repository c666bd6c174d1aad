#pragma once

#include <cstdio>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "soilpq/csv.hpp"
#include "soilpq/error.hpp"
#include "soilpq/parallel.hpp"
#include "soilpq/persistence.hpp"
#include "soilpq/pq.hpp"
#include "soilpq/preprocess.hpp"
#include "soilpq/search.hpp"
#include "soilpq/sweep.hpp"

namespace soilpq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Raised for flag combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<Coord> read_coords(const std::string& path) {
  const auto doc = csv::read_document(path);
  std::size_t lon = doc.header.size();
  std::size_t lat = doc.header.size();
  for (std::size_t c = 0; c < doc.header.size(); ++c) {
    if (doc.header[c] == "lon") lon = c;
    if (doc.header[c] == "lat") lat = c;
  }
  if (lon == doc.header.size() || lat == doc.header.size()) {
    fail(ErrorCode::MissingCoords, "'" + path + "' has no lon/lat columns");
  }
  std::vector<Coord> coords;
  coords.reserve(doc.rows.size());
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto x = csv::parse_double(doc.rows[r][lon]);
    const auto y = csv::parse_double(doc.rows[r][lat]);
    if (!x || !y) fail(ErrorCode::MissingCoords, "'" + path + "' row " + std::to_string(r) + ": unreadable lon/lat");
    coords.push_back({*x, *y});
  }
  return coords;
}

inline std::string format_distance(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", d);
  return buf;
}

inline unsigned parse_threads(const std::string& value) {
  if (value == "auto") return 0;
  const auto n = csv::parse_integer<unsigned>(value);
  if (!n || *n == 0) throw UsageError("--threads must be 'auto' or a positive integer");
  return *n;
}

struct GenSyntheticArgs {
  std::size_t rows = 0;
  std::size_t dims = 48;
  std::size_t clusters = 8;
  std::uint64_t seed = 0;
  std::string out;
  std::string labels_out;
};

struct PreprocessArgs {
  std::string input;
  std::vector<std::string> ph_cols;
  std::string out;
  std::string scaler_out;
};

struct TrainArgs {
  std::string input;
  std::size_t subspaces = 0;
  std::size_t centroids = 0;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-4;
  std::size_t restarts = 10;
  std::string scaler;
  std::string out;
};

struct EncodeArgs {
  std::string input;
  std::string codebook;
  std::string out;
};

struct ReconstructArgs {
  std::string input;
  std::string codebook;
  std::string codes;
};

struct QueryArgs {
  std::string codebook;
  std::string codes;
  std::vector<double> vector;
  std::optional<std::size_t> row;
  std::string input;
  std::size_t k = 10;
  std::string mode = "adc";
  bool analogs = false;
  bool raw = false;
};

struct ClassifyArgs {
  std::string codes;
  std::string codebook;
  std::string coords;
  std::string out;
};

struct SweepArgs {
  std::string input;
  std::vector<std::size_t> subspaces;
  std::vector<std::size_t> centroids;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-4;
  std::size_t restarts = 10;
  std::size_t repeats = 1;
  bool no_timing = false;
  std::string out;
};

struct ParetoArgs {
  std::string in;
  std::string out;
};

inline void gen_synthetic_cmd(const GenSyntheticArgs& a) {
  const auto synth = gen_synthetic(a.rows, a.dims, a.clusters, a.seed);
  write_table(synth.table, a.out);
  if (!a.labels_out.empty()) {
    auto out = csv::open_for_write(a.labels_out);
    out << "row_id,cluster\n";
    for (std::size_t i = 0; i < synth.labels.size(); ++i) out << i << ',' << synth.labels[i] << '\n';
    csv::finish_write(out, a.labels_out);
  }
}

inline void preprocess_cmd(const PreprocessArgs& a, std::ostream& err) {
  const auto raw = read_raw_table(a.input);
  const auto cleaned = clean(raw);
  err << "clean: kept " << cleaned.kept_rows.size() << " of " << raw.rows() << " rows (missing "
      << cleaned.summary.missing << ", negative " << cleaned.summary.negative << ", duplicate coords "
      << cleaned.summary.duplicate << ")\n";
  std::set<std::string> ph;
  for (const auto& name : a.ph_cols) {
    const auto trimmed = csv::trim(name);
    if (!trimmed.empty()) ph.insert(trimmed);
  }
  const auto fitted = fit_transform(cleaned.data, ph);
  write_dataset(fitted.data, a.out);
  io::save_scaler(fitted.scaler, a.scaler_out);
}

inline void train_cmd(const TrainArgs& a, std::ostream& err) {
  const auto data = read_dataset(a.input);
  TrainOptions options{a.seed, a.max_iters, a.tol, a.restarts, [&err](const std::string& m) { err << "warning: " << m << '\n'; }};
  auto cb = train(data, a.subspaces, a.centroids, options);
  if (!a.scaler.empty()) {
    auto scaler = io::load_scaler(a.scaler);
    for (std::size_t j = 0; j < scaler.columns.size() && j < data.feature_names.size(); ++j) {
      if (scaler.columns[j].name != data.feature_names[j]) {
        fail(ErrorCode::SchemaError, "scaler column " + std::to_string(j) + " is '" + scaler.columns[j].name +
                                         "' but '" + a.input + "' has '" + data.feature_names[j] + "'");
      }
    }
    cb = cb.with_scaler(std::move(scaler));
  }
  io::save_codebook(cb, a.out);
  err << "trained M=" << cb.num_subspaces() << " K=" << cb.num_centroids() << " (" << cb.num_classes()
      << " classes), total SSE " << csv::format_double(cb.total_sse()) << '\n';
}

inline void encode_cmd(const EncodeArgs& a) {
  const auto cb = io::load_codebook(a.codebook);
  const auto data = read_dataset(a.input);
  io::save_codes(encode(data, cb), a.out);
}

inline void reconstruct_cmd(const ReconstructArgs& a, std::ostream& out) {
  const auto cb = io::load_codebook(a.codebook);
  const auto data = read_dataset(a.input);
  const auto codes = io::load_codes(a.codes);
  const auto err = reconstruction_error(data.features.view(), codes, cb);
  out << "mse=" << csv::format_double(err.mse) << " rmse=" << csv::format_double(err.rmse) << '\n';
}

inline void query_cmd(const QueryArgs& a, std::ostream& out) {
  if (a.vector.empty() == !a.row.has_value()) throw UsageError("query needs exactly one of --vector or --row");
  if (a.mode != "adc" && a.mode != "sdc") throw UsageError("--mode must be adc or sdc");
  if (a.k < 1) throw UsageError("--k must be at least 1");
  const auto cb = io::load_codebook(a.codebook);
  const auto codes = io::load_codes(a.codes);
  check_codes_match(codes, cb);

  std::vector<double> query;
  if (a.row) {
    if (*a.row >= codes.rows) {
      fail(ErrorCode::InvalidParams, "--row " + std::to_string(*a.row) + " is out of range (" +
                                         std::to_string(codes.rows) + " rows in '" + a.codes + "')");
    }
    if (!a.input.empty()) {
      const auto data = read_dataset(a.input);
      if (*a.row >= data.rows()) fail(ErrorCode::InvalidParams, "--row is out of range for '" + a.input + "'");
      const auto r = data.features.row(*a.row);
      query.assign(r.begin(), r.end());
    } else {
      query = decode(codes.code(*a.row), cb);
    }
  } else if (a.raw) {
    if (!cb.scaler()) fail(ErrorCode::SchemaError, "--raw needs a codebook with an embedded scaler");
    query = apply_scaler(a.vector, *cb.scaler());
  } else {
    query = a.vector;
  }
  if (query.size() != cb.dim()) {
    fail(ErrorCode::DimensionMismatch, "query has " + std::to_string(query.size()) + " values, codebook expects " +
                                           std::to_string(cb.dim()));
  }

  if (a.analogs) {
    const auto index = build_inverted_index(codes, cb);
    for (std::size_t id : analog_lookup(query, index, cb)) out << id << '\n';
    return;
  }
  const auto neighbors =
      a.mode == "adc" ? knn(query, codes, cb, a.k) : knn_symmetric(encode(query, cb), codes, cb, a.k);
  for (std::size_t r = 0; r < neighbors.size(); ++r) {
    out << (r + 1) << ',' << neighbors[r].row_id << ',' << format_distance(neighbors[r].distance) << '\n';
  }
}

inline void classify_cmd(const ClassifyArgs& a) {
  const auto cb = io::load_codebook(a.codebook);
  const auto codes = io::load_codes(a.codes);
  const auto coords = read_coords(a.coords);
  io::save_assignments(codes, coords, cb, a.out);
}

inline void sweep_cmd(const SweepArgs& a, std::ostream& err) {
  const auto data = read_dataset(a.input);
  SweepOptions options{a.seed, a.max_iters, a.tol, a.restarts, a.repeats, !a.no_timing};
  const auto records = run_sweep(data, a.subspaces, a.centroids, options);
  for (const auto& r : records) {
    if (r.skipped) err << "skipped M=" << r.subspaces << " K=" << r.centroids << ": " << r.reason << '\n';
  }
  write_sweep_csv(records, a.out);
}

inline void pareto_cmd(const ParetoArgs& a, std::ostream& err) {
  auto records = read_sweep_csv(a.in);
  std::vector<SweepRecord> measured;
  for (auto& r : records) {
    if (r.skipped) {
      err << "pareto: ignoring skipped cell M=" << r.subspaces << " K=" << r.centroids << '\n';
    } else {
      measured.push_back(std::move(r));
    }
  }
  write_pareto_csv(pareto_front(measured), a.out);
}

}  // namespace detail

/// Parses argv and runs one subcommand. Exit codes: 0 success, 1 data or
/// runtime error, 2 usage error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Product-quantization classes and analog search over tabular data", "soilpq"};
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();
  std::string threads = "auto";
  app.add_option("--threads", threads, "Worker threads ('auto' = hardware concurrency)")->capture_default_str();

  GenSyntheticArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a seeded synthetic lon,lat,features CSV");
  gen_cmd->add_option("--rows", gen.rows, "Number of rows")->required();
  gen_cmd->add_option("--dims", gen.dims, "Feature columns");
  gen_cmd->add_option("--clusters", gen.clusters, "Gaussian clusters");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--out", gen.out, "Output CSV")->required();
  gen_cmd->add_option("--labels-out", gen.labels_out, "Optional CSV of generating cluster per row");

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Clean, log-transform and standardize a CSV");
  pre_cmd->add_option("--input", pre.input, "Raw CSV (lon,lat,features...)")->required();
  pre_cmd->add_option("--ph-cols", pre.ph_cols, "Comma-separated pH columns (may be empty)")->delimiter(',');
  pre_cmd->add_option("--out", pre.out, "Standardized CSV")->required();
  pre_cmd->add_option("--scaler-out", pre.scaler_out, "Scaler JSON")->required();

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train a product-quantizer codebook");
  train_sub->add_option("--input", tr.input, "Standardized CSV")->required();
  train_sub->add_option("--subspaces", tr.subspaces, "Subspace count M (must divide D)")->required();
  train_sub->add_option("--centroids", tr.centroids, "Centroids per subspace K")->required();
  train_sub->add_option("--seed", tr.seed, "Random seed");
  train_sub->add_option("--max-iters", tr.max_iters, "k-means iteration cap");
  train_sub->add_option("--tol", tr.tol, "Relative SSE improvement threshold");
  train_sub->add_option("--restarts", tr.restarts, "k-means++ starts per subspace; lowest SSE kept");
  train_sub->add_option("--scaler", tr.scaler, "Scaler JSON to embed in the codebook");
  train_sub->add_option("--out", tr.out, "Codebook JSON")->required();

  EncodeArgs enc;
  auto* enc_cmd = app.add_subcommand("encode", "Encode rows into a binary codes file");
  enc_cmd->add_option("--input", enc.input, "Standardized CSV")->required();
  enc_cmd->add_option("--codebook", enc.codebook, "Codebook JSON")->required();
  enc_cmd->add_option("--out", enc.out, "Codes file")->required();

  ReconstructArgs rec;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Print round-trip error as mse=<v> rmse=<v>");
  rec_cmd->add_option("--input", rec.input, "Standardized CSV")->required();
  rec_cmd->add_option("--codebook", rec.codebook, "Codebook JSON")->required();
  rec_cmd->add_option("--codes", rec.codes, "Codes file")->required();

  QueryArgs q;
  std::size_t query_row = 0;
  auto* query_sub = app.add_subcommand("query", "Nearest neighbors (rank,row_id,distance) or analogs");
  query_sub->add_option("--codebook", q.codebook, "Codebook JSON")->required();
  query_sub->add_option("--codes", q.codes, "Codes file")->required();
  auto* vec_opt = query_sub->add_option("--vector", q.vector, "Comma-separated standardized query")->delimiter(',');
  auto* row_opt = query_sub->add_option("--row", query_row, "Use this encoded row as the query");
  vec_opt->excludes(row_opt);
  query_sub->add_option("--input", q.input, "With --row: take the row from this CSV instead of its decoded code");
  query_sub->add_option("--k", q.k, "Neighbors to return");
  query_sub->add_option("--mode", q.mode, "adc or sdc")->check(CLI::IsMember({"adc", "sdc"}));
  query_sub->add_flag("--analogs", q.analogs, "Print the row ids sharing the query's class instead");
  query_sub->add_flag("--raw", q.raw, "--vector is raw; apply the codebook's embedded scaler");

  ClassifyArgs cls;
  auto* cls_cmd = app.add_subcommand("classify", "Write row_id,lon,lat,class_id");
  cls_cmd->add_option("--codes", cls.codes, "Codes file")->required();
  cls_cmd->add_option("--codebook", cls.codebook, "Codebook JSON")->required();
  cls_cmd->add_option("--coords", cls.coords, "CSV with lon,lat columns, one row per code")->required();
  cls_cmd->add_option("--out", cls.out, "Assignments CSV")->required();

  SweepArgs sw;
  auto* sweep_sub = app.add_subcommand("sweep", "Grid over (M, K) measuring time and reconstruction error");
  sweep_sub->add_option("--input", sw.input, "Standardized CSV")->required();
  sweep_sub->add_option("--subspaces", sw.subspaces, "Comma-separated M values")->delimiter(',')->required();
  sweep_sub->add_option("--centroids", sw.centroids, "Comma-separated K values")->delimiter(',')->required();
  sweep_sub->add_option("--seed", sw.seed, "Random seed");
  sweep_sub->add_option("--max-iters", sw.max_iters, "k-means iteration cap");
  sweep_sub->add_option("--tol", sw.tol, "Relative SSE improvement threshold");
  sweep_sub->add_option("--restarts", sw.restarts, "k-means++ starts per subspace; lowest SSE kept");
  sweep_sub->add_option("--repeats", sw.repeats, "Repetitions per cell; times are the median");
  sweep_sub->add_flag("--no-timing", sw.no_timing, "Report zero seconds (byte-reproducible output)");
  sweep_sub->add_option("--out", sw.out, "Sweep CSV")->required();

  ParetoArgs par;
  auto* pareto_sub = app.add_subcommand("pareto", "Flag dominated sweep cells (mse, train_seconds)");
  pareto_sub->add_option("--in", par.in, "Sweep CSV")->required();
  pareto_sub->add_option("--out", par.out, "Pareto CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    set_num_threads(parse_threads(threads));
    if (*gen_cmd) {
      gen_synthetic_cmd(gen);
    } else if (*pre_cmd) {
      preprocess_cmd(pre, err);
    } else if (*train_sub) {
      train_cmd(tr, err);
    } else if (*enc_cmd) {
      encode_cmd(enc);
    } else if (*rec_cmd) {
      reconstruct_cmd(rec, out);
    } else if (*query_sub) {
      if (row_opt->count() > 0) q.row = query_row;
      query_cmd(q, out);
    } else if (*cls_cmd) {
      classify_cmd(cls);
    } else if (*sweep_sub) {
      sweep_cmd(sw, err);
    } else if (*pareto_sub) {
      pareto_cmd(par, err);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace soilpq::cli
