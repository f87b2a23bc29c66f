#pragma once

// Ground-truth and predicted experience orderings and the recall-weighted
// positional ranking error between them.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "expsel/error.hpp"

namespace expsel {

/// Experience id -> score (Recall@1 in percent, or a dissimilarity).
using ScoreMap = std::map<std::string, double>;

enum class ScoreKind {
  Recall,    // higher is better, sorted descending
  Distance,  // lower is better, sorted ascending
};

struct RankingEntry {
  std::string experience_id;
  double score = 0.0;
  bool operator==(const RankingEntry&) const = default;
};

struct ExperienceRanking {
  std::string query_id;
  ScoreKind kind = ScoreKind::Recall;
  std::vector<RankingEntry> entries;

  std::vector<std::string> order() const {
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.experience_id);
    return ids;
  }
};

struct RankingError {
  std::vector<double> penalties;  // one per rank slot, in percentage points
  double mean_penalty = 0.0;
};

namespace detail {

inline ExperienceRanking sorted_ranking(const ScoreMap& scores, ScoreKind kind, const std::string& query_id) {
  ExperienceRanking r{query_id, kind, {}};
  for (const auto& [id, score] : scores) {
    if (!std::isfinite(score)) fail(ErrorCode::NonFiniteValue, "score for '" + id + "' is not finite");
    r.entries.push_back({id, score});
  }
  // ScoreMap iterates in id order, so a stable sort leaves ties lexicographic.
  std::stable_sort(r.entries.begin(), r.entries.end(), [kind](const RankingEntry& a, const RankingEntry& b) {
    return kind == ScoreKind::Recall ? a.score > b.score : a.score < b.score;
  });
  return r;
}

}  // namespace detail

inline ExperienceRanking gt_ranking(const ScoreMap& recalls, const std::string& query_id = {}) {
  if (recalls.size() < 2) fail(ErrorCode::TooFewExperiences, "ground-truth ranking needs at least 2 experiences");
  for (const auto& [id, recall] : recalls) {
    if (recall < 0.0 || recall > 100.0) fail(ErrorCode::ValueOutOfRange, "recall of '" + id + "' outside [0, 100]");
    if (!query_id.empty() && id == query_id) {
      fail(ErrorCode::InvalidArgument, "query '" + query_id + "' cannot be its own reference");
    }
  }
  return detail::sorted_ranking(recalls, ScoreKind::Recall, query_id);
}

/// Sorts by distance without the two-candidate minimum; used for online
/// selection where a single-experience map is legitimate.
inline ExperienceRanking rank_by_distance(const ScoreMap& distances, const std::string& query_id = {}) {
  if (distances.empty()) fail(ErrorCode::EmptyInput, "no candidates to rank");
  return detail::sorted_ranking(distances, ScoreKind::Distance, query_id);
}

inline ExperienceRanking predicted_ranking(const ScoreMap& distances, const std::string& query_id = {}) {
  if (distances.size() < 2) fail(ErrorCode::TooFewExperiences, "predicted ranking needs at least 2 experiences");
  return rank_by_distance(distances, query_id);
}

/// Slot k costs |R(gt[k]) - R(pred[k])|, where R is the ground-truth recall of
/// an experience. A swap of two experiences is charged once per slot.
inline RankingError ranking_error(const ExperienceRanking& gt, const ExperienceRanking& pred) {
  if (gt.kind != ScoreKind::Recall) fail(ErrorCode::InvalidArgument, "ground truth must be ranked by recall");
  if (gt.entries.size() != pred.entries.size()) fail(ErrorCode::SetMismatch, "rankings have different lengths");
  std::map<std::string, double> recall_of;
  for (const auto& e : gt.entries) recall_of.emplace(e.experience_id, e.score);

  RankingError err;
  err.penalties.reserve(gt.entries.size());
  for (std::size_t k = 0; k < gt.entries.size(); ++k) {
    const auto it = recall_of.find(pred.entries[k].experience_id);
    if (it == recall_of.end()) {
      fail(ErrorCode::SetMismatch, "'" + pred.entries[k].experience_id + "' is not in the ground-truth ranking");
    }
    err.penalties.push_back(std::abs(gt.entries[k].score - it->second));
  }
  double sum = 0.0;
  for (double p : err.penalties) sum += p;
  err.mean_penalty = err.penalties.empty() ? 0.0 : sum / static_cast<double>(err.penalties.size());
  // Each pred id was found and the lengths match, so only duplicates remain.
  std::vector<std::string> ids = pred.order();
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    fail(ErrorCode::SetMismatch, "predicted ranking repeats an experience");
  }
  return err;
}

struct ErrorCell {
  std::string backbone;
  std::string split;
  std::string query;
  std::string method;
  RankingError error;
};

struct MethodAverage {
  double mean_penalty = 0.0;
  std::size_t slots = 0;
};

namespace detail {

template <typename KeyFn>
auto aggregate_by(std::span<const ErrorCell> cells, KeyFn key) {
  if (cells.empty()) fail(ErrorCode::EmptyInput, "no ranking errors to aggregate");
  using Key = decltype(key(cells.front()));
  std::map<Key, double> sums;
  std::map<Key, MethodAverage> out;
  for (const auto& cell : cells) {
    auto& avg = out[key(cell)];
    for (double p : cell.error.penalties) sums[key(cell)] += p;
    avg.slots += cell.error.penalties.size();
  }
  for (auto& [k, avg] : out) avg.mean_penalty = avg.slots ? sums[k] / static_cast<double>(avg.slots) : 0.0;
  return out;
}

}  // namespace detail

/// Per-method mean over every rank slot of every cell.
inline std::map<std::string, MethodAverage> aggregate_errors(std::span<const ErrorCell> cells) {
  return detail::aggregate_by(cells, [](const ErrorCell& c) { return c.method; });
}

/// Same average split by backbone, keyed (backbone, method).
inline std::map<std::pair<std::string, std::string>, MethodAverage> aggregate_errors_by_backbone(
    std::span<const ErrorCell> cells) {
  return detail::aggregate_by(cells, [](const ErrorCell& c) { return std::pair{c.backbone, c.method}; });
}

}  // namespace expsel
