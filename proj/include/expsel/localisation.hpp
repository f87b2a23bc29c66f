#pragma once

// Single-frame topological localisation: Euclidean nearest neighbour in
// embedding space, judged against frame-index or GPS ground truth.

#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "expsel/binary_io.hpp"
#include "expsel/error.hpp"
#include "expsel/feature_store.hpp"
#include "expsel/parallel.hpp"

namespace expsel {

/// A frame addressed by its experience and its position within it.
struct FrameRef {
  std::string experience_id;
  std::uint64_t frame_index = 0;
  auto operator<=>(const FrameRef&) const = default;
};

struct DifferenceMatrix {
  std::vector<FrameRef> query_ids;
  std::vector<FrameRef> reference_ids;
  std::vector<double> values;  // row-major, rows = queries

  std::size_t rows() const { return query_ids.size(); }
  std::size_t cols() const { return reference_ids.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }
  std::span<const double> row(std::size_t i) const { return std::span<const double>(values).subspan(i * cols(), cols()); }
};

struct FrameTolerance {
  std::uint64_t max_frames = 5;
};

struct MetricTolerance {
  double max_metres = 5.0;
  Gps origin;
};

using GroundTruthMatcher = std::variant<FrameTolerance, MetricTolerance>;

struct MatchRecord {
  FrameRef query_id;
  FrameRef matched_id;
  double distance = 0.0;
  bool correct = false;
};

struct LocalisationResult {
  double recall_at_1 = 0.0;  // percent
  std::vector<MatchRecord> matches;
};

using PoseTable = std::map<FrameRef, GroundTruthPose>;

inline PoseTable pose_table(std::span<const FeatureSet* const> sets) {
  PoseTable table;
  for (const FeatureSet* fs : sets) {
    for (std::size_t i = 0; i < fs->frames.size(); ++i) table.emplace(FrameRef{fs->experience_id, i}, fs->frames[i].pose);
  }
  return table;
}

/// Euclidean distances from every query embedding to every reference
/// embedding. Reference columns follow `refs` order, then frame order.
inline DifferenceMatrix difference_matrix(const FeatureSet& query, std::span<const FeatureSet* const> refs,
                                          std::size_t threads = 1) {
  DifferenceMatrix dm;
  std::vector<std::span<const float>> ref_embeddings;
  for (const FeatureSet* r : refs) {
    if (r->embedding_dim != query.embedding_dim) {
      fail(ErrorCode::DimMismatch, "reference '" + r->experience_id + "' has D=" + std::to_string(r->embedding_dim) +
                                       ", query has D=" + std::to_string(query.embedding_dim));
    }
    for (std::size_t j = 0; j < r->image_count(); ++j) {
      dm.reference_ids.push_back({r->experience_id, j});
      ref_embeddings.push_back(r->embedding(j));
    }
  }
  for (std::size_t i = 0; i < query.image_count(); ++i) dm.query_ids.push_back({query.experience_id, i});

  const std::size_t cols = dm.cols();
  dm.values.resize(dm.rows() * cols);
  parallel_for(dm.rows(), threads, [&](std::size_t i) {
    const auto q = query.embedding(i);
    for (std::size_t j = 0; j < cols; ++j) {
      const auto r = ref_embeddings[j];
      double sq = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) {
        const double d = static_cast<double>(q[k]) - static_cast<double>(r[k]);
        sq += d * d;
      }
      dm.values[i * cols + j] = std::sqrt(sq);
    }
  });
  return dm;
}

inline DifferenceMatrix difference_matrix(const FeatureSet& query, const FeatureSet& ref, std::size_t threads = 1) {
  const FeatureSet* refs[] = {&ref};
  return difference_matrix(query, std::span<const FeatureSet* const>(refs), threads);
}

inline bool is_match(const GroundTruthMatcher& matcher, const GroundTruthPose& q, const GroundTruthPose& r) {
  if (const auto* ft = std::get_if<FrameTolerance>(&matcher)) {
    const auto* qi = std::get_if<FrameIndex>(&q);
    const auto* ri = std::get_if<FrameIndex>(&r);
    if (!qi || !ri) fail(ErrorCode::PoseVariantMismatch, "frame tolerance needs frame-index poses");
    const std::uint64_t gap = qi->index > ri->index ? qi->index - ri->index : ri->index - qi->index;
    return gap <= ft->max_frames;
  }
  const auto& mt = std::get<MetricTolerance>(matcher);
  const auto* qg = std::get_if<Gps>(&q);
  const auto* rg = std::get_if<Gps>(&r);
  if (!qg || !rg) fail(ErrorCode::PoseVariantMismatch, "metric tolerance needs GPS poses");
  const LocalPosition a = gps_to_local(mt.origin, *qg);
  const LocalPosition b = gps_to_local(mt.origin, *rg);
  return std::hypot(a.x_m - b.x_m, a.y_m - b.y_m) <= mt.max_metres;
}

/// Takes the row-wise argmin (lowest column on ties) and scores it against
/// ground truth.
inline LocalisationResult recall_at_1(const DifferenceMatrix& dm, const GroundTruthMatcher& matcher,
                                      const PoseTable& poses) {
  if (dm.rows() == 0 || dm.cols() == 0) fail(ErrorCode::EmptyInput, "difference matrix is empty");
  auto pose_of = [&](const FrameRef& id) -> const GroundTruthPose& {
    const auto it = poses.find(id);
    if (it == poses.end()) {
      fail(ErrorCode::MissingPose, "no pose for " + id.experience_id + "#" + std::to_string(id.frame_index));
    }
    return it->second;
  };

  LocalisationResult result;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dm.rows(); ++i) {
    const auto row = dm.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] < row[best]) best = j;
    }
    const bool ok = is_match(matcher, pose_of(dm.query_ids[i]), pose_of(dm.reference_ids[best]));
    correct += ok ? 1 : 0;
    result.matches.push_back({dm.query_ids[i], dm.reference_ids[best], row[best], ok});
  }
  result.recall_at_1 = 100.0 * static_cast<double>(correct) / static_cast<double>(dm.rows());
  return result;
}

// ---------------------------------------------------------------------------
// Matrix file: "DMX1" | u32 version | u32 Q | u32 R | Q+R ids | Q x R f32.
// Each id is u32 length + experience id bytes + u64 frame index.

inline constexpr std::string_view kMatrixMagic = "DMX1";

inline std::string encode_difference_matrix(const DifferenceMatrix& dm) {
  io::ByteWriter w;
  w.put_bytes(kMatrixMagic);
  w.put(std::uint32_t{1});
  w.put(static_cast<std::uint32_t>(dm.rows()));
  w.put(static_cast<std::uint32_t>(dm.cols()));
  for (const auto* ids : {&dm.query_ids, &dm.reference_ids}) {
    for (const FrameRef& id : *ids) {
      w.put_string(id.experience_id);
      w.put(id.frame_index);
    }
  }
  for (double v : dm.values) w.put(static_cast<float>(v));
  return std::move(w).take();
}

inline DifferenceMatrix decode_difference_matrix(std::string_view bytes) {
  if (bytes.substr(0, kMatrixMagic.size()) != kMatrixMagic) fail(ErrorCode::BadMagic, "not a DMX1 matrix file");
  io::ByteReader r(bytes);
  r.get_bytes(kMatrixMagic.size());
  if (const auto version = r.get<std::uint32_t>(); version != 1) {
    fail(ErrorCode::VersionUnsupported, "matrix version " + std::to_string(version));
  }
  DifferenceMatrix dm;
  const std::size_t q = r.get<std::uint32_t>();
  const std::size_t c = r.get<std::uint32_t>();
  if (q == 0 || c == 0) fail(ErrorCode::InvalidHeader, "matrix has no rows or columns");
  for (auto* ids : {&dm.query_ids, &dm.reference_ids}) {
    const std::size_t n = ids == &dm.query_ids ? q : c;
    for (std::size_t i = 0; i < n; ++i) {
      FrameRef id;
      id.experience_id = r.get_string();
      id.frame_index = r.get<std::uint64_t>();
      ids->push_back(std::move(id));
    }
  }
  if (r.remaining() / sizeof(float) < q * c) fail(ErrorCode::TruncatedPayload, "matrix payload shorter than Q x R");
  dm.values.resize(q * c);
  for (double& v : dm.values) {
    v = r.get<float>();
    if (!std::isfinite(v) || v < 0.0) fail(ErrorCode::ValueOutOfRange, "matrix entries must be finite and non-negative");
  }
  if (r.remaining() != 0) fail(ErrorCode::TrailingBytes, "matrix payload longer than Q x R");
  return dm;
}

}  // namespace expsel
