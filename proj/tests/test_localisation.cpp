#include <random>

#include <gtest/gtest.h>

#include "expsel/localisation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace expsel;

namespace {

FeatureSet embeddings_only(const std::string& id, std::uint32_t d, std::vector<float> emb) {
  const std::size_t n = emb.size() / d;
  return testutil::make_set(id, 1, 1, d, std::vector<float>(n, 0.f), std::move(emb));
}

DifferenceMatrix matrix(const std::vector<std::vector<double>>& v, const std::string& q = "q",
                        const std::string& r = "r") {
  DifferenceMatrix dm;
  for (std::size_t i = 0; i < v.size(); ++i) dm.query_ids.push_back({q, i});
  for (std::size_t j = 0; j < v[0].size(); ++j) dm.reference_ids.push_back({r, j});
  for (const auto& row : v) dm.values.insert(dm.values.end(), row.begin(), row.end());
  return dm;
}

PoseTable index_poses(const DifferenceMatrix& dm) {
  PoseTable t;
  for (const auto& id : dm.query_ids) t[id] = FrameIndex{id.frame_index};
  for (const auto& id : dm.reference_ids) t[id] = FrameIndex{id.frame_index};
  return t;
}

}  // namespace

TEST(DifferenceMatrix, PythagoreanExample) {
  const auto dm = difference_matrix(embeddings_only("q", 2, {0.f, 0.f}), embeddings_only("r", 2, {3.f, 4.f}));
  ASSERT_EQ(dm.rows(), 1u);
  ASSERT_EQ(dm.cols(), 1u);
  EXPECT_EQ(dm.at(0, 0), 5.0);
}

TEST(DifferenceMatrix, SelfHasZeroDiagonal) {
  const auto fs = testutil::random_set("s", 9, 1, 1, 6, 2);
  const auto dm = difference_matrix(fs, fs);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(dm.at(i, i), 0.0);
}

TEST(DifferenceMatrix, MatchesDoubleLoop) {
  const auto q = testutil::random_set("q", 5, 1, 1, 4, 3);
  const auto r = testutil::random_set("r", 7, 1, 1, 4, 4);
  const auto dm = difference_matrix(q, r);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        const double d = static_cast<double>(q.embeddings[i * 4 + k]) - r.embeddings[j * 4 + k];
        sq += d * d;
      }
      EXPECT_NEAR(dm.at(i, j), std::sqrt(sq), 1e-12);
    }
  }
}

TEST(DifferenceMatrix, ColumnsFollowReferenceOrder) {
  const auto q = testutil::random_set("q", 2, 1, 1, 3, 5);
  const auto a = testutil::random_set("a", 3, 1, 1, 3, 6);
  const auto b = testutil::random_set("b", 4, 1, 1, 3, 7);
  const FeatureSet* refs[] = {&a, &b};
  const auto dm = difference_matrix(q, std::span<const FeatureSet* const>(refs));
  ASSERT_EQ(dm.cols(), 7u);
  EXPECT_EQ(dm.reference_ids[2], (FrameRef{"a", 2}));
  EXPECT_EQ(dm.reference_ids[3], (FrameRef{"b", 0}));
  EXPECT_EQ(dm.at(1, 5), difference_matrix(q, b).at(1, 2));
}

TEST(DifferenceMatrix, DimMismatch) {
  try {
    difference_matrix(testutil::random_set("q", 2, 1, 1, 3, 1), testutil::random_set("r", 2, 1, 1, 4, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimMismatch);
  }
}

TEST(DifferenceMatrix, ThreadCountDoesNotChangeValues) {
  const auto q = testutil::random_set("q", 40, 1, 1, 16, 8);
  const auto r = testutil::random_set("r", 30, 1, 1, 16, 9);
  EXPECT_EQ(difference_matrix(q, r, 1).values, difference_matrix(q, r, 4).values);
}

TEST(IsMatch, FrameTolerance) {
  const GroundTruthMatcher m = FrameTolerance{5};
  EXPECT_TRUE(is_match(m, FrameIndex{100}, FrameIndex{105}));
  EXPECT_TRUE(is_match(m, FrameIndex{105}, FrameIndex{100}));
  EXPECT_FALSE(is_match(m, FrameIndex{100}, FrameIndex{106}));
  EXPECT_TRUE(is_match(FrameTolerance{0}, FrameIndex{7}, FrameIndex{7}));
  EXPECT_FALSE(is_match(FrameTolerance{0}, FrameIndex{7}, FrameIndex{8}));
}

TEST(IsMatch, MetricTolerance) {
  const GroundTruthMatcher m = MetricTolerance{5.0, {60.0, 10.0}};
  // About 5.009 m north: just outside.
  EXPECT_FALSE(is_match(m, Gps{60.0, 10.0}, Gps{60.000045, 10.0}));
  EXPECT_TRUE(is_match(m, Gps{60.0, 10.0}, Gps{60.00004, 10.0}));
  EXPECT_TRUE(is_match(m, Gps{60.0, 10.0}, Gps{60.0, 10.0}));
}

TEST(IsMatch, VariantMismatch) {
  for (const auto& [m, q, r] : std::vector<std::tuple<GroundTruthMatcher, GroundTruthPose, GroundTruthPose>>{
           {FrameTolerance{5}, Gps{1, 1}, Gps{1, 1}},
           {MetricTolerance{5, {0, 0}}, FrameIndex{1}, FrameIndex{1}},
           {FrameTolerance{5}, FrameIndex{1}, Gps{1, 1}}}) {
    try {
      is_match(m, q, r);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::PoseVariantMismatch);
    }
  }
}

TEST(RecallAt1, WorkedExample) {
  auto dm = matrix({{0.1, 0.9, 0.8}, {0.7, 0.2, 0.9}, {0.8, 0.6, 0.3}});
  const auto poses = index_poses(dm);
  const auto res = recall_at_1(dm, FrameTolerance{0}, poses);
  EXPECT_EQ(res.recall_at_1, 100.0);
  ASSERT_EQ(res.matches.size(), 3u);
  EXPECT_EQ(res.matches[2].matched_id, (FrameRef{"r", 2}));
  EXPECT_EQ(res.matches[2].distance, 0.3);

  dm.values[2 * 3 + 0] = 0.1;  // third query now prefers reference 0
  const auto worse = recall_at_1(dm, FrameTolerance{0}, poses);
  EXPECT_NEAR(worse.recall_at_1, 200.0 / 3.0, 1e-12);
  EXPECT_FALSE(worse.matches[2].correct);
}

TEST(RecallAt1, TiesGoToLowestColumn) {
  const auto dm = matrix({{0.5, 0.5, 0.5}});
  EXPECT_EQ(recall_at_1(dm, FrameTolerance{0}, index_poses(dm)).matches[0].matched_id.frame_index, 0u);
}

TEST(RecallAt1, Errors) {
  const auto dm = matrix({{0.1, 0.2}});
  try {
    recall_at_1(dm, FrameTolerance{5}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingPose);
  }
  EXPECT_THROW(recall_at_1(DifferenceMatrix{}, FrameTolerance{5}, {}), Error);
}

TEST(RecallAt1, MatchesBruteForce) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> size(1, 20);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t q = size(rng), r = size(rng);
    std::vector<std::vector<double>> v(q, std::vector<double>(r));
    // Coarse values make ties common.
    for (auto& row : v)
      for (auto& x : row) x = std::round(u(rng) * 8.0) / 8.0;
    const auto dm = matrix(v);
    const std::uint64_t tol = trial % 4;
    const double got = recall_at_1(dm, FrameTolerance{tol}, index_poses(dm)).recall_at_1;
    const double want = oracle::recall_at_1(v, [&](std::size_t i, std::size_t j) {
      return (i > j ? i - j : j - i) <= tol;
    });
    EXPECT_EQ(got, want);
  }
}

TEST(RecallAt1, DuplicatedColumnsDoNotChangeRecall) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> v(10, std::vector<double>(10));
    for (auto& row : v)
      for (auto& x : row) x = u(rng);
    const auto dm = matrix(v);
    auto poses = index_poses(dm);
    const double base = recall_at_1(dm, FrameTolerance{1}, poses).recall_at_1;

    // Append copies of every column under a second experience with the same poses.
    DifferenceMatrix dup = dm;
    dup.values.clear();
    for (std::size_t j = 0; j < 10; ++j) dup.reference_ids.push_back({"copy", j});
    for (const auto& row : v) {
      dup.values.insert(dup.values.end(), row.begin(), row.end());
      dup.values.insert(dup.values.end(), row.begin(), row.end());
    }
    for (std::size_t j = 0; j < 10; ++j) poses[{"copy", j}] = FrameIndex{j};
    EXPECT_EQ(recall_at_1(dup, FrameTolerance{1}, poses).recall_at_1, base);
  }
}

TEST(RecallAt1, CompositeBeatsOrMatchesSomeSingleReference) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const auto q = testutil::random_set("q", 12, 1, 1, 4, rng());
    const auto a = testutil::random_set("a", 12, 1, 1, 4, rng());
    const auto b = testutil::random_set("b", 12, 1, 1, 4, rng());
    const FeatureSet* all[] = {&q, &a, &b};
    const auto poses = pose_table(all);
    const FeatureSet* refs[] = {&a, &b};
    const double composite =
        recall_at_1(difference_matrix(q, std::span<const FeatureSet* const>(refs)), FrameTolerance{3}, poses)
            .recall_at_1;
    const double ra = recall_at_1(difference_matrix(q, a), FrameTolerance{3}, poses).recall_at_1;
    const double rb = recall_at_1(difference_matrix(q, b), FrameTolerance{3}, poses).recall_at_1;
    // Each composite hit is a hit for whichever experience supplied the argmin.
    EXPECT_LE(composite, ra + rb + 1e-9);
    EXPECT_GE(composite, 0.0);
    EXPECT_LE(composite, 100.0);
  }
}

TEST(MatrixFile, RoundTrip) {
  const auto q = testutil::random_set("query", 6, 1, 1, 3, 30);
  const auto r = testutil::random_set("ref", 4, 1, 1, 3, 31);
  const auto dm = difference_matrix(q, r);
  const std::string bytes = encode_difference_matrix(dm);
  const auto back = decode_difference_matrix(bytes);
  EXPECT_EQ(back.query_ids, dm.query_ids);
  EXPECT_EQ(back.reference_ids, dm.reference_ids);
  ASSERT_EQ(back.values.size(), dm.values.size());
  for (std::size_t i = 0; i < dm.values.size(); ++i) EXPECT_EQ(back.values[i], static_cast<float>(dm.values[i]));
  EXPECT_EQ(encode_difference_matrix(back), bytes);

  EXPECT_THROW(decode_difference_matrix(bytes.substr(0, bytes.size() - 1)), Error);
  EXPECT_THROW(decode_difference_matrix(bytes + "x"), Error);
  EXPECT_THROW(decode_difference_matrix("DMX2"), Error);
}
