#include <gtest/gtest.h>

#include "expsel/evaluation.hpp"
#include "expsel/synthetic.hpp"
#include "test_util.hpp"

using namespace expsel;

namespace {

std::string fixture(const std::string& name) { return io::read_file(std::filesystem::path(EXPSEL_FIXTURE_DIR) / name); }

EvaluationReport nordland() {
  return evaluate_fixture(fixture("nordland_recalls.csv"), fixture("nordland_distances.csv"));
}

const PredictedRanking& prediction(const QueryEvaluation& q, std::string_view method) {
  for (const auto& p : q.predictions) {
    if (p.method == method) return p;
  }
  throw std::runtime_error("no prediction for " + std::string(method));
}

const QueryEvaluation& query(const EvaluationReport& r, std::string_view id) {
  for (const auto& q : r.queries) {
    if (q.query == id) return q;
  }
  throw std::runtime_error("no query " + std::string(id));
}

EvaluationGroup synthetic_group(std::uint64_t seed) {
  const auto route = SyntheticRoute::make(SyntheticConfig{}, seed);
  EvaluationGroup g{"synthetic", {}};
  for (int i = 0; i < 3; ++i) g.experiences.push_back(make_synthetic_experience(route, "s" + std::to_string(i), i, seed + i + 1));
  return g;
}

}  // namespace

TEST(Fixture, SeasonRankings) {
  const auto report = nordland();
  ASSERT_EQ(report.queries.size(), 4u);
  EXPECT_EQ(report.queries[0].query, "Fall");

  const auto& winter = query(report, "Winter");
  EXPECT_EQ(winter.ground_truth.order(), (std::vector<std::string>{"Spring", "Summer", "Fall"}));
  EXPECT_EQ(*winter.composite_recall, 61.22);
  EXPECT_EQ(prediction(winter, "vdna").error.mean_penalty, 0.0);
  const auto& fd = prediction(winter, "fd").error;
  EXPECT_EQ(fd.penalties[0], 0.0);
  EXPECT_NEAR(fd.penalties[1], 8.16, 1e-9);
  EXPECT_NEAR(fd.penalties[2], 8.16, 1e-9);
  EXPECT_NEAR(fd.mean_penalty, 5.44, 1e-9);

  const auto& spring_pixel = prediction(query(report, "Spring"), "pixel");
  EXPECT_EQ(spring_pixel.ranking.entries.front().experience_id, "Winter");
  EXPECT_NEAR(spring_pixel.error.penalties[0], 31.12, 1e-9);
}

TEST(Fixture, SeasonAggregates) {
  const auto agg = aggregate_errors(nordland().cells());
  EXPECT_EQ(agg.at("vdna").mean_penalty, 0.0);
  EXPECT_NEAR(agg.at("fd").mean_penalty, 16.32 / 12.0, 1e-9);
  EXPECT_NEAR(agg.at("pixel").mean_penalty, (16.32 + 62.24) / 12.0, 1e-9);
  EXPECT_GT(agg.at("random").mean_penalty, agg.at("pixel").mean_penalty);
  EXPECT_EQ(agg.at("vdna").slots, 12u);
}

TEST(Fixture, ReportsAreDeterministic) {
  const auto a = report_csv(nordland());
  const auto b = report_csv(nordland());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.substr(0, kReportCsvHeader.size()), kReportCsvHeader);
  // 4 queries x 4 methods x 3 slots plus the header.
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 49);
  EXPECT_NE(a.find("cosplace_resnet101_128,test:2,Winter,fd,2,Summer,Fall,48.470000,0.566000,8.160000\n"),
            std::string::npos);
  EXPECT_EQ(report_summary(nordland()).dump(), report_summary(nordland()).dump());
}

TEST(Fixture, Errors) {
  const std::string recalls = fixture("nordland_recalls.csv");
  EXPECT_THROW(evaluate_fixture(recalls, "wrong,header\n"), Error);
  EXPECT_THROW(evaluate_fixture(recalls,
                                "backbone,split,query,method,experience,distance\n"
                                "cosplace_resnet101_128,test:2,Fall,vdna,Summer,abc\n"),
               Error);
  try {
    evaluate_fixture(recalls,
                     "backbone,split,query,method,experience,distance\n"
                     "cosplace_resnet101_128,test:2,Fall,vdna,Autumn,1.0\n"
                     "cosplace_resnet101_128,test:2,Fall,vdna,Summer,2.0\n"
                     "cosplace_resnet101_128,test:2,Fall,vdna,Spring,3.0\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SetMismatch);
  }
}

TEST(Evaluate, LeaveOneOutShape) {
  EvaluationOptions opts;
  opts.warmup = FirstKFrames{10};
  opts.matcher.threshold = 1;
  const auto report = evaluate({synthetic_group(3)}, opts);
  ASSERT_EQ(report.queries.size(), 3u);
  for (const auto& q : report.queries) {
    EXPECT_EQ(q.ground_truth.entries.size(), 2u);
    EXPECT_TRUE(q.composite_recall.has_value());
    EXPECT_FALSE(q.warmup_shorter_than_policy);
    ASSERT_EQ(q.predictions.size(), 4u);
    for (const auto& p : q.predictions) {
      EXPECT_EQ(p.error.penalties.size(), 2u);
      if (p.method != kRandomMethod) {
        auto a = p.ranking.order(), b = q.ground_truth.order();
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        EXPECT_EQ(a, b);
        EXPECT_EQ(std::find(a.begin(), a.end(), q.query), a.end());
      }
    }
  }
  EXPECT_EQ(report_csv(report), report_csv(evaluate({synthetic_group(3)}, opts)));
}

TEST(Evaluate, ThreadsDoNotChangeResults) {
  EvaluationOptions opts;
  opts.warmup = FirstKFrames{10};
  const auto one = report_csv(evaluate({synthetic_group(4)}, opts));
  opts.threads = 4;
  EXPECT_EQ(report_csv(evaluate({synthetic_group(4)}, opts)), one);
}

TEST(Evaluate, NeedsThreeExperiences) {
  auto g = synthetic_group(5);
  g.experiences.pop_back();
  try {
    evaluate({g}, EvaluationOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewExperiences);
  }
  EXPECT_THROW(evaluate({}, EvaluationOptions{}), Error);
}

TEST(Evaluate, MetricMatcherNeedsGps) {
  EvaluationOptions opts;
  opts.matcher.kind = MatcherSpec::Kind::Metres;
  try {
    evaluate({synthetic_group(6)}, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PoseVariantMismatch);
  }
}

TEST(Render, TwoByTwo) {
  DifferenceMatrix dm;
  dm.query_ids = {{"q", 0}, {"q", 1}};
  dm.reference_ids = {{"r", 0}, {"r", 1}};
  dm.values = {0.0, 1.0, 1.0, 0.0};
  const std::string pgm = render_pgm(dm);
  const std::string header = "P5\n2 2\n255\n";
  ASSERT_EQ(pgm.substr(0, header.size()), header);
  EXPECT_EQ(pgm.substr(header.size()), std::string("\x00\xff\xff\x00", 4));

  dm.values = {3.0, 3.0, 3.0, 3.0};
  EXPECT_EQ(render_pgm(dm).substr(header.size()), std::string(4, '\0'));
}

TEST(Render, SelfMatrixHasDarkDiagonal) {
  const auto fs = testutil::random_set("s", 6, 1, 1, 5, 40);
  const auto dm = difference_matrix(fs, fs);
  const std::string pgm = render_pgm(dm);
  const std::size_t start = pgm.size() - 36;
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(pgm[start + i * 6 + i], '\0');
}
