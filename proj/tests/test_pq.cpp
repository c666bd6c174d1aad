#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "soilpq/pq.hpp"

namespace {

using soilpq::Codebook;
using soilpq::ErrorCode;
using soilpq::PQCode;
using testing_util::random_codebook;
using testing_util::to_matrix;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const soilpq::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected soilpq::Error";
  return ErrorCode::IoError;
}

oracle::Rows codebook_block(const Codebook& cb, std::size_t j) {
  oracle::Rows out;
  for (std::size_t k = 0; k < cb.num_centroids(); ++k) {
    const auto c = cb.centroid(j, k);
    out.emplace_back(c.begin(), c.end());
  }
  return out;
}

soilpq::Dataset standardized_synthetic(std::size_t n, std::size_t d, std::size_t g, std::uint64_t seed) {
  const auto synth = soilpq::gen_synthetic(n, d, g, seed);
  return soilpq::fit_transform(soilpq::clean(synth.table).data, {}).data;
}

TEST(NumClasses, CountsFromClassMaps) {
  EXPECT_EQ(soilpq::num_classes(1, 32), 32u);
  EXPECT_EQ(soilpq::num_classes(2, 16), 256u);
  EXPECT_EQ(soilpq::num_classes(7, 1), 1u);
  EXPECT_EQ(soilpq::num_classes(3, 65536), 281474976710656u);
}

TEST(NumClasses, OverflowPastSignedRange) {
  EXPECT_EQ(soilpq::num_classes(62, 2), 1ull << 62);
  EXPECT_EQ(code_of([] { soilpq::num_classes(63, 2); }), ErrorCode::Overflow);
  EXPECT_EQ(code_of([] { soilpq::num_classes(4, 65536); }), ErrorCode::Overflow);
}

TEST(ClassId, MixedRadixExamples) {
  EXPECT_EQ(soilpq::class_id(PQCode{0, 0, 0}, 4), 0u);
  EXPECT_EQ(soilpq::class_id(PQCode{1, 0}, 16), 16u);
  EXPECT_EQ(soilpq::class_id(PQCode{15, 15}, 16), 255u);
  EXPECT_EQ(code_of([] { soilpq::class_id(PQCode{4}, 4); }), ErrorCode::CodeOutOfRange);
}

TEST(ClassId, BijectionOverAllCodes) {
  std::set<std::uint64_t> ids;
  for (std::uint16_t a = 0; a < 4; ++a) {
    for (std::uint16_t b = 0; b < 4; ++b) {
      for (std::uint16_t c = 0; c < 4; ++c) {
        const PQCode code{a, b, c};
        const auto id = soilpq::class_id(code, 4);
        ids.insert(id);
        EXPECT_EQ(soilpq::code_from_class_id(id, 3, 4), code);
      }
    }
  }
  EXPECT_EQ(ids.size(), 64u);
  EXPECT_EQ(*ids.begin(), 0u);
  EXPECT_EQ(*ids.rbegin(), 63u);
}

TEST(ClassId, InverseIsIdentityOnRange) {
  for (std::uint64_t id = 0; id < 4096; id += 7) {
    EXPECT_EQ(soilpq::class_id(soilpq::code_from_class_id(id, 3, 16), 16), id);
  }
  EXPECT_EQ(code_of([] { soilpq::code_from_class_id(256, 2, 16); }), ErrorCode::CodeOutOfRange);
}

TEST(Train, FlatThirtyTwoClassSystem) {
  const auto data = standardized_synthetic(3000, 48, 8, 5);
  const auto cb = soilpq::train(data, 1, 32, {.seed = 1, .restarts = 2});
  EXPECT_EQ(cb.num_subspaces(), 1u);
  EXPECT_EQ(cb.sub_dim(), 48u);
  EXPECT_EQ(cb.num_classes(), 32u);
}

TEST(Train, IndivisibleDimsListsValidSubspaceCounts) {
  const auto data = standardized_synthetic(100, 48, 2, 5);
  try {
    soilpq::train(data, 5, 4);
    FAIL();
  } catch (const soilpq::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndivisibleDims);
    EXPECT_NE(std::string(e.what()).find("1, 2, 3, 4, 6, 8, 12, 16, 24, 48"), std::string::npos);
  }
}

TEST(Train, TooFewPoints) {
  const auto data = to_matrix(oracle::random_rows(3, 4, 1));
  EXPECT_EQ(code_of([&] { soilpq::train(data, 2, 4, {.warn = [](const std::string&) {}}); }),
            ErrorCode::TooFewPoints);
}

TEST(Train, WarnsOnUnstandardizedInput) {
  const auto data = to_matrix(oracle::random_rows(50, 4, 1, 0.0, 100.0));
  std::vector<std::string> warnings;
  soilpq::train(data, 2, 2, {.warn = [&](const std::string& m) { warnings.push_back(m); }});
  EXPECT_EQ(warnings.size(), 1u);
  warnings.clear();
  soilpq::train(standardized_synthetic(200, 4, 2, 3), 2, 2, {.warn = [&](const std::string& m) { warnings.push_back(m); }});
  EXPECT_TRUE(warnings.empty());
}

TEST(Train, ExactQuantizationWhenSubspacesHaveKDistinctValues) {
  // Each 2-d subspace only ever takes one of K=3 values.
  const oracle::Rows palette = {{-1, 0.5}, {2, 2}, {0, -3}};
  oracle::Rows rows;
  for (std::size_t i = 0; i < 60; ++i) {
    const auto& a = palette[i % 3];
    const auto& b = palette[(i / 3) % 3];
    rows.push_back({a[0], a[1], b[0], b[1]});
  }
  const auto cb = soilpq::train(to_matrix(rows), 2, 3, {.warn = [](const std::string&) {}});
  const auto err = soilpq::reconstruction_error(to_matrix(rows), cb);
  EXPECT_EQ(err.mse, 0.0);
  EXPECT_EQ(cb.total_sse(), 0.0);
}

TEST(Train, TotalSseDecomposesOverSubspaces) {
  const auto data = standardized_synthetic(2000, 12, 4, 8);
  for (std::size_t m : {1, 2, 4}) {
    for (std::size_t k : {4, 16}) {
      const auto cb = soilpq::train(data, m, k, {.seed = 3});
      const auto err = soilpq::reconstruction_error(data, cb);
      const double total = err.mse * static_cast<double>(data.rows());
      double sum = 0.0;
      for (double s : cb.subspace_sse()) sum += s;
      EXPECT_TRUE(oracle::rel_close(total, sum, 1e-9)) << "M=" << m << " K=" << k;
    }
  }
}

TEST(Train, SubspaceUsesShiftedSeed) {
  const auto data = standardized_synthetic(500, 4, 3, 2);
  const auto cb = soilpq::train(data, 2, 3, {.seed = 10});
  const soilpq::Matrix block1 = [&] {
    soilpq::Matrix m(data.rows(), 2);
    for (std::size_t i = 0; i < data.rows(); ++i) {
      m(i, 0) = data.features(i, 2);
      m(i, 1) = data.features(i, 3);
    }
    return m;
  }();
  const auto model = soilpq::kmeans::fit(block1, 3, {.seed = 11});
  EXPECT_EQ(model.centroids.data(), std::vector<double>(cb.values().begin() + 6, cb.values().end()));
}

TEST(Encode, ConcatenatedCentroidEncodesToItsIndex) {
  const auto cb = random_codebook(4, 8, 3, 5);
  std::vector<double> v;
  for (std::size_t j = 0; j < 4; ++j) {
    const auto c = cb.centroid(j, 3);
    v.insert(v.end(), c.begin(), c.end());
  }
  EXPECT_EQ(soilpq::encode(v, cb), (PQCode{3, 3, 3, 3}));
}

TEST(Encode, SingleCentroidGivesZeroCodes) {
  const auto cb = random_codebook(3, 1, 2, 6);
  const auto data = to_matrix(oracle::random_rows(20, 6, 7));
  const auto codes = soilpq::encode(data, cb);
  EXPECT_TRUE(std::all_of(codes.entries.begin(), codes.entries.end(), [](auto e) { return e == 0; }));
}

TEST(Encode, MatchesPerSubspaceExhaustiveScan) {
  const auto cb = random_codebook(4, 16, 3, 8);
  const auto rows = oracle::random_rows(1000, 12, 9);
  const auto codes = soilpq::encode(to_matrix(rows), cb);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const std::vector<double> part(rows[i].begin() + 3 * j, rows[i].begin() + 3 * (j + 1));
      ASSERT_EQ(codes.code(i)[j], oracle::nearest(part, codebook_block(cb, j)));
    }
    ASSERT_EQ(soilpq::encode(rows[i], cb), PQCode(codes.code(i).begin(), codes.code(i).end()));
  }
}

TEST(Encode, DimensionMismatch) {
  const auto cb = random_codebook(2, 4, 2, 1);
  const std::vector<double> v(3, 0.0);
  EXPECT_EQ(code_of([&] { soilpq::encode(v, cb); }), ErrorCode::DimensionMismatch);
}

TEST(Decode, RoundTripOnCodewords) {
  const auto cb = random_codebook(3, 5, 2, 10);
  for (std::uint16_t a = 0; a < 5; ++a) {
    const PQCode code{a, static_cast<std::uint16_t>((a + 1) % 5), static_cast<std::uint16_t>((a + 3) % 5)};
    const auto v = soilpq::decode(code, cb);
    EXPECT_EQ(soilpq::encode(v, cb), code);
    EXPECT_EQ(soilpq::decode(soilpq::encode(v, cb), cb), v);
  }
  const auto zero = soilpq::decode(PQCode{0, 0, 0}, cb);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(zero[2 * j], cb.centroid(j, 0)[0]);
    EXPECT_EQ(zero[2 * j + 1], cb.centroid(j, 0)[1]);
  }
  EXPECT_EQ(code_of([&] { soilpq::decode(PQCode{0, 5, 0}, cb); }), ErrorCode::CodeOutOfRange);
  EXPECT_EQ(code_of([&] { soilpq::decode(PQCode{0, 0}, cb); }), ErrorCode::CodeOutOfRange);
}

TEST(Decode, EncodeIsNearestOverAllCodes) {
  const auto cb = random_codebook(2, 4, 3, 11);
  for (const auto& v : oracle::random_rows(300, 6, 12)) {
    const auto chosen = soilpq::decode(soilpq::encode(v, cb), cb);
    const double chosen_d = oracle::dist_sq(v, chosen);
    for (std::uint16_t a = 0; a < 4; ++a) {
      for (std::uint16_t b = 0; b < 4; ++b) {
        ASSERT_LE(chosen_d, oracle::dist_sq(v, soilpq::decode(PQCode{a, b}, cb)));
      }
    }
  }
}

TEST(Decode, ReconstructionIsAFixpointOfEncode) {
  const auto cb = random_codebook(4, 8, 2, 13);
  for (const auto& v : oracle::random_rows(200, 8, 14)) {
    const auto code = soilpq::encode(v, cb);
    EXPECT_EQ(soilpq::encode(soilpq::decode(code, cb), cb), code);
  }
}

TEST(ReconstructionError, ExactCodewordsHaveZeroError) {
  const auto cb = random_codebook(2, 3, 2, 15);
  soilpq::Matrix data;
  for (std::uint16_t a = 0; a < 3; ++a) data.append_row(soilpq::decode(PQCode{a, static_cast<std::uint16_t>(2 - a)}, cb));
  const auto err = soilpq::reconstruction_error(data, cb);
  EXPECT_EQ(err.mse, 0.0);
  EXPECT_EQ(err.rmse, 0.0);
}

TEST(ReconstructionError, SinglePointAtDistanceThree) {
  const Codebook cb(2, 1, 1, {0.0, 0.0}, {}, 0);
  const auto err = soilpq::reconstruction_error(to_matrix({{3.0, 0.0}}), cb);
  EXPECT_EQ(err.mse, 9.0);
  EXPECT_EQ(err.rmse, 3.0);
}

TEST(ReconstructionError, MatchesNaivePerRowRecomputation) {
  const auto cb = random_codebook(3, 6, 4, 16);
  const auto rows = oracle::random_rows(800, 12, 17);
  double naive = 0.0;
  for (const auto& r : rows) {
    std::vector<double> recon;
    for (std::size_t j = 0; j < 3; ++j) {
      const std::vector<double> part(r.begin() + 4 * j, r.begin() + 4 * (j + 1));
      const auto c = cb.centroid(j, oracle::nearest(part, codebook_block(cb, j)));
      recon.insert(recon.end(), c.begin(), c.end());
    }
    naive += oracle::dist_sq(r, recon);
  }
  naive /= static_cast<double>(rows.size());
  const auto err = soilpq::reconstruction_error(to_matrix(rows), cb);
  EXPECT_TRUE(oracle::rel_close(err.mse, naive, 1e-12));
  EXPECT_TRUE(oracle::rel_close(err.rmse, std::sqrt(naive), 1e-12));
  const auto codes = soilpq::encode(to_matrix(rows), cb);
  EXPECT_EQ(soilpq::reconstruction_error(to_matrix(rows), codes, cb).mse, err.mse);
}

TEST(Codebook, RejectsInconsistentShapes) {
  EXPECT_EQ(code_of([] { Codebook(5, 2, 1, {0, 0, 0, 0, 0}, {}, 0); }), ErrorCode::IndivisibleDims);
  EXPECT_EQ(code_of([] { Codebook(2, 1, 2, {0, 0}, {}, 0); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { Codebook(2, 1, 0, {}, {}, 0); }), ErrorCode::InvalidParams);
}

TEST(Encode, StableAcrossThreadCounts) {
  const auto cb = random_codebook(4, 16, 2, 18);
  const auto data = to_matrix(oracle::random_rows(20000, 8, 19));
  soilpq::set_num_threads(1);
  const auto a = soilpq::encode(data, cb);
  const auto ea = soilpq::reconstruction_error(data, cb);
  soilpq::set_num_threads(8);
  const auto b = soilpq::encode(data, cb);
  const auto eb = soilpq::reconstruction_error(data, cb);
  soilpq::set_num_threads(0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(ea.mse, eb.mse);
}

}  // namespace
