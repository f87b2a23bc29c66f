#pragma once

// Leave-one-out evaluation of experience selection: every experience in turn
// is the live query, the rest form the map. Ground truth is the Recall@1 the
// query actually achieves against each candidate; predictions come from the
// selection methods. Also hosts the fixture mode (precomputed tables) and the
// report writers.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "expsel/baselines.hpp"
#include "expsel/error.hpp"
#include "expsel/feature_store.hpp"
#include "expsel/localisation.hpp"
#include "expsel/map_store.hpp"
#include "expsel/ranking.hpp"

namespace expsel {

inline constexpr std::string_view kRandomMethod = "random";

/// Matcher settings independent of any particular query; the metric origin
/// is taken from the query's first frame.
struct MatcherSpec {
  enum class Kind { Frames, Metres } kind = Kind::Frames;
  double threshold = 5.0;

  GroundTruthMatcher for_query(const FeatureSet& query) const {
    if (!(threshold >= 0.0) || !std::isfinite(threshold)) fail(ErrorCode::InvalidArgument, "matcher threshold must be >= 0");
    if (kind == Kind::Frames) {
      if (threshold != std::floor(threshold)) fail(ErrorCode::InvalidArgument, "frame tolerance must be an integer");
      return FrameTolerance{static_cast<std::uint64_t>(threshold)};
    }
    const auto* origin = query.frames.empty() ? nullptr : std::get_if<Gps>(&query.frames.front().pose);
    if (!origin) fail(ErrorCode::PoseVariantMismatch, "metric matcher needs GPS poses on query '" + query.experience_id + "'");
    return MetricTolerance{threshold, *origin};
  }
};

struct EvaluationOptions {
  WarmupPolicy warmup = FirstKFrames{100};
  MatcherSpec matcher;
  HistogramConfig histogram;
  std::vector<SelectionMethod> methods{SelectionMethod::Vdna, SelectionMethod::Fd, SelectionMethod::Pixel};
  bool include_random = true;
  std::size_t threads = 1;
};

/// All experiences recorded on one route segment with one backbone.
struct EvaluationGroup {
  std::string split;
  std::vector<FeatureSet> experiences;
};

struct PredictedRanking {
  std::string method;
  ExperienceRanking ranking;  // empty entries for the random baseline
  RankingError error;
};

struct QueryEvaluation {
  std::string backbone;
  std::string split;
  std::string query;
  ExperienceRanking ground_truth;
  std::optional<double> composite_recall;
  bool warmup_shorter_than_policy = false;
  std::vector<PredictedRanking> predictions;
};

struct EvaluationReport {
  std::vector<QueryEvaluation> queries;

  std::vector<ErrorCell> cells() const {
    std::vector<ErrorCell> out;
    for (const auto& q : queries) {
      for (const auto& p : q.predictions) out.push_back({q.backbone, q.split, q.query, p.method, p.error});
    }
    return out;
  }
};

namespace detail {

inline PredictedRanking random_prediction(const ScoreMap& recalls) {
  PredictedRanking p;
  p.method = std::string(kRandomMethod);
  p.error.penalties = random_slot_penalties(recalls);
  double sum = 0.0;
  for (double v : p.error.penalties) sum += v;
  p.error.mean_penalty = sum / static_cast<double>(p.error.penalties.size());
  return p;
}

}  // namespace detail

inline std::vector<QueryEvaluation> evaluate_group(const EvaluationGroup& group, const EvaluationOptions& opts) {
  const auto& exps = group.experiences;
  if (exps.size() < 3) {
    fail(ErrorCode::TooFewExperiences, "split '" + group.split + "' has " + std::to_string(exps.size()) +
                                           " experiences; leave-one-out needs at least 3");
  }
  for (const auto& e : exps) {
    if (e.backbone_id != exps.front().backbone_id) {
      fail(ErrorCode::InvalidArgument, "split '" + group.split + "' mixes backbones");
    }
  }

  std::vector<QueryEvaluation> out;
  for (std::size_t qi = 0; qi < exps.size(); ++qi) {
    const FeatureSet& query = exps[qi];
    std::vector<const FeatureSet*> refs;
    for (std::size_t j = 0; j < exps.size(); ++j) {
      if (j != qi) refs.push_back(&exps[j]);
    }
    const GroundTruthMatcher matcher = opts.matcher.for_query(query);
    std::vector<const FeatureSet*> all = refs;
    all.push_back(&query);
    const PoseTable poses = pose_table(all);

    QueryEvaluation qe;
    qe.backbone = query.backbone_id;
    qe.split = group.split;
    qe.query = query.experience_id;

    ScoreMap recalls;
    for (const FeatureSet* r : refs) {
      recalls[r->experience_id] = recall_at_1(difference_matrix(query, *r, opts.threads), matcher, poses).recall_at_1;
    }
    qe.ground_truth = gt_ranking(recalls, query.experience_id);
    qe.composite_recall =
        recall_at_1(difference_matrix(query, std::span<const FeatureSet* const>(refs), opts.threads), matcher, poses)
            .recall_at_1;

    const WarmupSelection warmup = select_warmup(query, opts.warmup);
    qe.warmup_shorter_than_policy = warmup.shorter_than_policy;
    const ExperienceMap map = build_map(std::span<const FeatureSet* const>(refs), opts.histogram, opts.threads);
    for (SelectionMethod m : opts.methods) {
      PredictedRanking p;
      p.method = std::string(to_string(m));
      p.ranking = select_experience(warmup.set, map, m, opts.threads);
      p.error = ranking_error(qe.ground_truth, p.ranking);
      qe.predictions.push_back(std::move(p));
    }
    if (opts.include_random) qe.predictions.push_back(detail::random_prediction(recalls));
    out.push_back(std::move(qe));
  }
  return out;
}

inline EvaluationReport evaluate(const std::vector<EvaluationGroup>& groups, const EvaluationOptions& opts) {
  if (groups.empty()) fail(ErrorCode::EmptyInput, "nothing to evaluate");
  EvaluationReport report;
  for (const auto& g : groups) {
    auto qs = evaluate_group(g, opts);
    report.queries.insert(report.queries.end(), std::make_move_iterator(qs.begin()), std::make_move_iterator(qs.end()));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Fixture mode: recall and distance tables instead of raw features.
//
//   recalls.csv:   backbone,split,query,experience,recall
//                  (experience "*" gives the composite-map recall)
//   distances.csv: backbone,split,query,method,experience,distance

using CsvRow = std::vector<std::string>;

inline std::vector<CsvRow> parse_csv(std::string_view text, const std::vector<std::string>& expected_header) {
  std::vector<CsvRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    CsvRow row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      row.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (header) {
      if (row != expected_header) fail(ErrorCode::InvalidArgument, "unexpected CSV header on line " + std::to_string(line_no));
      header = false;
      continue;
    }
    if (row.size() != expected_header.size()) {
      fail(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + " has " + std::to_string(row.size()) + " fields");
    }
    rows.push_back(std::move(row));
  }
  if (header) fail(ErrorCode::InvalidArgument, "CSV has no header");
  return rows;
}

inline double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) fail(ErrorCode::InvalidArgument, "'" + s + "' is not a number");
  if (!std::isfinite(v)) fail(ErrorCode::NonFiniteValue, "'" + s + "' is not finite");
  return v;
}

inline EvaluationReport evaluate_fixture(std::string_view recalls_csv, std::string_view distances_csv,
                                         bool include_random = true) {
  using Key = std::tuple<std::string, std::string, std::string>;  // backbone, split, query
  std::map<Key, ScoreMap> recalls;
  std::map<Key, double> composite;
  std::vector<Key> order;
  for (const auto& row : parse_csv(recalls_csv, {"backbone", "split", "query", "experience", "recall"})) {
    Key key{row[0], row[1], row[2]};
    if (!recalls.contains(key)) order.push_back(key);
    auto& m = recalls[key];
    const double value = parse_number(row[4]);
    if (row[3] == "*") {
      composite[key] = value;
    } else if (!m.emplace(row[3], value).second) {
      fail(ErrorCode::InvalidArgument, "duplicate recall for query '" + row[2] + "', experience '" + row[3] + "'");
    }
  }

  std::map<Key, std::map<std::string, ScoreMap>> distances;
  std::vector<std::string> methods;
  for (const auto& row : parse_csv(distances_csv, {"backbone", "split", "query", "method", "experience", "distance"})) {
    Key key{row[0], row[1], row[2]};
    if (!recalls.contains(key)) fail(ErrorCode::SetMismatch, "distances for unknown query '" + row[2] + "'");
    if (std::find(methods.begin(), methods.end(), row[3]) == methods.end()) methods.push_back(row[3]);
    if (!distances[key][row[3]].emplace(row[4], parse_number(row[5])).second) {
      fail(ErrorCode::InvalidArgument, "duplicate distance for query '" + row[2] + "', experience '" + row[4] + "'");
    }
  }

  EvaluationReport report;
  for (const Key& key : order) {
    QueryEvaluation qe;
    std::tie(qe.backbone, qe.split, qe.query) = key;
    qe.ground_truth = gt_ranking(recalls[key], qe.query);
    if (composite.contains(key)) qe.composite_recall = composite[key];
    for (const auto& method : methods) {
      const auto it = distances[key].find(method);
      if (it == distances[key].end()) {
        fail(ErrorCode::SetMismatch, "method '" + method + "' has no distances for query '" + qe.query + "'");
      }
      PredictedRanking p;
      p.method = method;
      p.ranking = predicted_ranking(it->second, qe.query);
      p.error = ranking_error(qe.ground_truth, p.ranking);
      qe.predictions.push_back(std::move(p));
    }
    if (include_random) qe.predictions.push_back(detail::random_prediction(recalls[key]));
    report.queries.push_back(std::move(qe));
  }
  if (report.queries.empty()) fail(ErrorCode::EmptyInput, "fixture has no queries");
  return report;
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr std::string_view kReportCsvHeader =
    "backbone,split,query,method,position,gt_experience,pred_experience,gt_recall,pred_score,penalty";

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// One row per rank slot of every (query, method) cell. Random-baseline rows
/// carry the expected slot penalty and no predicted experience.
inline std::string report_csv(const EvaluationReport& report) {
  std::string out(kReportCsvHeader);
  out += '\n';
  for (const auto& q : report.queries) {
    for (const auto& p : q.predictions) {
      for (std::size_t k = 0; k < q.ground_truth.entries.size(); ++k) {
        const auto& gt = q.ground_truth.entries[k];
        const bool has_pred = k < p.ranking.entries.size();
        out += q.backbone + ',' + q.split + ',' + q.query + ',' + p.method + ',' + std::to_string(k + 1) + ',' +
               gt.experience_id + ',' + (has_pred ? p.ranking.entries[k].experience_id : std::string("*")) + ',' +
               format_number(gt.score) + ',' + (has_pred ? format_number(p.ranking.entries[k].score) : std::string()) +
               ',' + format_number(p.error.penalties[k]) + '\n';
      }
    }
  }
  return out;
}

inline nlohmann::json report_summary(const EvaluationReport& report) {
  const auto cells = report.cells();
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& [method, avg] : aggregate_errors(cells)) {
    methods[method] = {{"mean_penalty", avg.mean_penalty}, {"slots", avg.slots}};
  }
  nlohmann::json per_backbone = nlohmann::json::array();
  for (const auto& [key, avg] : aggregate_errors_by_backbone(cells)) {
    per_backbone.push_back(
        {{"backbone", key.first}, {"method", key.second}, {"mean_penalty", avg.mean_penalty}, {"slots", avg.slots}});
  }
  nlohmann::json queries = nlohmann::json::array();
  for (const auto& q : report.queries) {
    nlohmann::json gt = nlohmann::json::array();
    for (const auto& e : q.ground_truth.entries) gt.push_back({{"experience", e.experience_id}, {"recall", e.score}});
    nlohmann::json selected = nlohmann::json::object();
    for (const auto& p : q.predictions) {
      if (!p.ranking.entries.empty()) selected[p.method] = p.ranking.entries.front().experience_id;
    }
    queries.push_back({{"backbone", q.backbone},
                       {"split", q.split},
                       {"query", q.query},
                       {"ground_truth", gt},
                       {"composite_recall", q.composite_recall ? nlohmann::json(*q.composite_recall) : nlohmann::json()},
                       {"warmup_shorter_than_policy", q.warmup_shorter_than_policy},
                       {"selected", selected}});
  }
  return {{"methods", methods}, {"per_backbone", per_backbone}, {"queries", queries}};
}

// ---------------------------------------------------------------------------
// Difference-matrix rendering

/// Binary PGM (P5), one pixel per entry, rows = queries. Min-max normalised;
/// distant pairs are bright, close pairs dark. A constant matrix is black.
inline std::string render_pgm(const DifferenceMatrix& dm) {
  if (dm.rows() == 0 || dm.cols() == 0) fail(ErrorCode::EmptyInput, "cannot render an empty matrix");
  const auto [mn, mx] = std::ranges::minmax(dm.values);
  std::string out = "P5\n" + std::to_string(dm.cols()) + " " + std::to_string(dm.rows()) + "\n255\n";
  out.reserve(out.size() + dm.values.size());
  for (double v : dm.values) {
    const double scaled = mx > mn ? 255.0 * (v - mn) / (mx - mn) : 0.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
  }
  return out;
}

}  // namespace expsel
