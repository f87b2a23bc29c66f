#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "expsel/error.hpp"
#include "expsel/feature_store.hpp"
#include "expsel/ranking.hpp"

namespace expsel {

struct PixelSummary {
  double mean_intensity = 0.0;
  std::size_t image_count = 0;
  bool operator==(const PixelSummary&) const = default;
};

inline PixelSummary pixel_summary(const FeatureSet& fs) {
  if (fs.image_count() == 0) fail(ErrorCode::EmptySet, "no images for a pixel summary");
  double sum = 0.0;
  for (float m : fs.pixel_means) sum += m;
  return {sum / static_cast<double>(fs.image_count()), fs.image_count()};
}

inline double pixel_distance(const PixelSummary& a, const PixelSummary& b) {
  return std::abs(a.mean_intensity - b.mean_intensity);
}

inline constexpr std::size_t kMaxRandomCandidates = 8;

namespace detail {

inline std::vector<double> gt_recalls_in_order(const ScoreMap& recalls) {
  if (recalls.size() > kMaxRandomCandidates) {
    fail(ErrorCode::TooManyCandidates, std::to_string(recalls.size()) + " candidates; exact enumeration supports at most " +
                                           std::to_string(kMaxRandomCandidates));
  }
  std::vector<double> r;
  for (const auto& e : gt_ranking(recalls).entries) r.push_back(e.score);
  return r;
}

/// Calls fn(perm) for every permutation of 0..n-1 in lexicographic order.
template <typename Fn>
void for_each_permutation(std::size_t n, Fn&& fn) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    fn(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

}  // namespace detail

/// Expected mean positional penalty of a uniformly random ordering of the
/// candidates, computed by enumerating all n! orderings.
inline double random_expected_error(const ScoreMap& recalls) {
  const std::vector<double> r = detail::gt_recalls_in_order(recalls);
  const std::size_t n = r.size();
  double total = 0.0;
  std::size_t count = 0;
  detail::for_each_permutation(n, [&](const std::vector<std::size_t>& perm) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += std::abs(r[k] - r[perm[k]]);
    total += sum / static_cast<double>(n);
    ++count;
  });
  return total / static_cast<double>(count);
}

/// Expected penalty of each rank slot under a uniformly random ordering.
inline std::vector<double> random_slot_penalties(const ScoreMap& recalls) {
  const std::vector<double> r = detail::gt_recalls_in_order(recalls);
  const std::size_t n = r.size();
  std::vector<double> slots(n, 0.0);
  std::size_t count = 0;
  detail::for_each_permutation(n, [&](const std::vector<std::size_t>& perm) {
    for (std::size_t k = 0; k < n; ++k) slots[k] += std::abs(r[k] - r[perm[k]]);
    ++count;
  });
  for (double& s : slots) s /= static_cast<double>(count);
  return slots;
}

}  // namespace expsel
