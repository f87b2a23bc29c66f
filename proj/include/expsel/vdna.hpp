#pragma once

// Visual DNA: one normalised activation histogram per neuron, all neurons
// sharing a fixed per-neuron binning so that two image sets can be compared
// bin by bin with the 1-D Earth-Mover's Distance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "expsel/binary_io.hpp"
#include "expsel/error.hpp"
#include "expsel/feature_store.hpp"
#include "expsel/parallel.hpp"

namespace expsel {

struct HistogramConfig {
  std::size_t bin_count = 128;
  double margin_fraction = 0.05;

  void check() const {
    if (bin_count < 2) fail(ErrorCode::InvalidArgument, "bin_count must be at least 2");
    if (!(margin_fraction >= 0.0) || !std::isfinite(margin_fraction)) {
      fail(ErrorCode::InvalidArgument, "margin_fraction must be a non-negative number");
    }
  }
};

/// Uniform bin edges for every neuron, stored as C rows of B+1 values.
class HistogramEdges {
 public:
  HistogramEdges() = default;

  HistogramEdges(std::size_t neuron_count, std::size_t bin_count, std::vector<double> edges)
      : neuron_count_(neuron_count), bin_count_(bin_count), edges_(std::move(edges)) {
    if (bin_count_ < 2) fail(ErrorCode::InvalidArgument, "bin_count must be at least 2");
    if (edges_.size() != neuron_count_ * (bin_count_ + 1)) {
      fail(ErrorCode::EdgeMismatch, "edge array size does not match C x (B+1)");
    }
    for (std::size_t c = 0; c < neuron_count_; ++c) {
      auto row = neuron(c);
      for (std::size_t i = 0; i + 1 < row.size(); ++i) {
        if (!std::isfinite(row[i]) || !(row[i] < row[i + 1])) {
          fail(ErrorCode::EdgeMismatch, "edges of neuron " + std::to_string(c) + " are not strictly increasing");
        }
      }
    }
  }

  /// Builds B uniform bins spanning [lo, hi] for each neuron.
  static HistogramEdges uniform(std::span<const double> lo, std::span<const double> hi, std::size_t bin_count) {
    std::vector<double> edges;
    edges.reserve(lo.size() * (bin_count + 1));
    for (std::size_t c = 0; c < lo.size(); ++c) {
      const double width = (hi[c] - lo[c]) / static_cast<double>(bin_count);
      for (std::size_t i = 0; i < bin_count; ++i) edges.push_back(lo[c] + static_cast<double>(i) * width);
      edges.push_back(hi[c]);
    }
    return HistogramEdges(lo.size(), bin_count, std::move(edges));
  }

  std::size_t neuron_count() const { return neuron_count_; }
  std::size_t bin_count() const { return bin_count_; }
  std::span<const double> values() const { return edges_; }

  std::span<const double> neuron(std::size_t c) const {
    return std::span<const double>(edges_).subspan(c * (bin_count_ + 1), bin_count_ + 1);
  }

  double lower(std::size_t c) const { return edges_[c * (bin_count_ + 1)]; }
  double upper(std::size_t c) const { return edges_[c * (bin_count_ + 1) + bin_count_]; }
  double bin_width(std::size_t c) const { return (upper(c) - lower(c)) / static_cast<double>(bin_count_); }

  /// Bin index of `x` for neuron `c`; values outside the span are clamped into
  /// the first or last bin.
  std::size_t bin_of(std::size_t c, double x) const {
    const double pos = (x - lower(c)) / bin_width(c);
    if (!(pos >= 0.0)) return 0;
    if (pos >= static_cast<double>(bin_count_)) return bin_count_ - 1;
    return static_cast<std::size_t>(pos);
  }

  bool operator==(const HistogramEdges&) const = default;

 private:
  std::size_t neuron_count_ = 0;
  std::size_t bin_count_ = 0;
  std::vector<double> edges_;
};

struct Vdna {
  std::size_t image_count = 0;
  HistogramEdges edges;
  std::vector<double> mass;  // C x B, each row sums to 1

  std::size_t neuron_count() const { return edges.neuron_count(); }
  std::size_t bin_count() const { return edges.bin_count(); }

  std::span<const double> neuron_mass(std::size_t c) const {
    return std::span<const double>(mass).subspan(c * bin_count(), bin_count());
  }

  bool operator==(const Vdna&) const = default;
};

struct VdnaDistance {
  std::vector<double> per_neuron;
  double aggregate = 0.0;
};

/// Shared per-neuron edges spanning every activation in `sets`, widened by
/// `margin_fraction` of the observed range on each side.
inline HistogramEdges compute_edges(std::span<const FeatureSet* const> sets, const HistogramConfig& cfg) {
  cfg.check();
  if (sets.empty()) fail(ErrorCode::EmptyInput, "no feature sets to compute edges from");
  const std::size_t c_count = sets.front()->neuron_count;
  for (const FeatureSet* fs : sets) {
    if (fs->neuron_count != c_count) {
      fail(ErrorCode::NeuronCountMismatch, "experience '" + fs->experience_id + "' has " +
                                               std::to_string(fs->neuron_count) + " neurons, expected " +
                                               std::to_string(c_count));
    }
  }

  std::vector<double> lo(c_count, std::numeric_limits<double>::infinity());
  std::vector<double> hi(c_count, -std::numeric_limits<double>::infinity());
  for (const FeatureSet* fs : sets) {
    for (std::size_t img = 0; img < fs->image_count(); ++img) {
      for (std::size_t c = 0; c < c_count; ++c) {
        const auto [mn, mx] = std::ranges::minmax(fs->neuron_samples(img, c));
        lo[c] = std::min(lo[c], static_cast<double>(mn));
        hi[c] = std::max(hi[c], static_cast<double>(mx));
      }
    }
  }

  for (std::size_t c = 0; c < c_count; ++c) {
    if (!std::isfinite(lo[c])) fail(ErrorCode::EmptySet, "neuron " + std::to_string(c) + " has no samples");
    if (lo[c] == hi[c]) {
      const double v = lo[c];
      lo[c] = v - 0.5;
      hi[c] = v + 0.5;
    } else {
      const double margin = cfg.margin_fraction * (hi[c] - lo[c]);
      lo[c] -= margin;
      hi[c] += margin;
    }
  }
  return HistogramEdges::uniform(lo, hi, cfg.bin_count);
}

inline HistogramEdges compute_edges(std::span<const FeatureSet> sets, const HistogramConfig& cfg) {
  std::vector<const FeatureSet*> ptrs;
  for (const auto& fs : sets) ptrs.push_back(&fs);
  return compute_edges(std::span<const FeatureSet* const>(ptrs), cfg);
}

/// Histograms every activation sample of `fs` against `edges`.
inline Vdna build_vdna(const FeatureSet& fs, const HistogramEdges& edges, std::size_t threads = 1) {
  const std::size_t n = fs.image_count();
  if (n == 0) fail(ErrorCode::EmptySet, "cannot build a vdna from zero images");
  if (fs.neuron_count != edges.neuron_count()) {
    fail(ErrorCode::NeuronCountMismatch, "feature set has " + std::to_string(fs.neuron_count) +
                                             " neurons, edges have " + std::to_string(edges.neuron_count()));
  }
  const std::size_t bins = edges.bin_count();
  Vdna v;
  v.image_count = n;
  v.edges = edges;
  v.mass.assign(edges.neuron_count() * bins, 0.0);

  const double total = static_cast<double>(n) * static_cast<double>(fs.samples_per_image);
  parallel_for(edges.neuron_count(), threads, [&](std::size_t c) {
    std::vector<std::uint64_t> counts(bins, 0);
    for (std::size_t img = 0; img < n; ++img) {
      for (float x : fs.neuron_samples(img, c)) ++counts[edges.bin_of(c, x)];
    }
    double* row = v.mass.data() + c * bins;
    for (std::size_t b = 0; b < bins; ++b) row[b] = static_cast<double>(counts[b]) / total;
  });
  return v;
}

/// Wasserstein-1 distance between two histograms on the same uniform grid:
/// bin_width times the L1 distance between their cumulative sums.
inline double emd_1d(std::span<const double> p, std::span<const double> q, double bin_width) {
  if (p.size() != q.size() || p.empty()) fail(ErrorCode::EdgeMismatch, "histograms have different bin counts");
  double cp = 0.0;
  double cq = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cp += p[i];
    cq += q[i];
    sum += std::abs(cp - cq);
  }
  return bin_width * sum;
}

inline VdnaDistance vdna_distance(const Vdna& a, const Vdna& b, std::size_t threads = 1) {
  if (a.neuron_count() != b.neuron_count()) {
    fail(ErrorCode::NeuronCountMismatch, std::to_string(a.neuron_count()) + " vs " +
                                             std::to_string(b.neuron_count()) + " neurons");
  }
  if (a.edges != b.edges) fail(ErrorCode::EdgeMismatch, "vdnas were built on different histogram edges");

  VdnaDistance d;
  d.per_neuron.resize(a.neuron_count());
  parallel_for(a.neuron_count(), threads, [&](std::size_t c) {
    d.per_neuron[c] = emd_1d(a.neuron_mass(c), b.neuron_mass(c), a.edges.bin_width(c));
  });
  d.aggregate = d.per_neuron.empty() ? 0.0 : compensated_sum(d.per_neuron) / static_cast<double>(d.per_neuron.size());
  return d;
}

// ---------------------------------------------------------------------------
// Serialisation: <name>.json metadata + <name>.bin little-endian f64 payload.

inline std::string encode_edges(const HistogramEdges& edges) {
  io::ByteWriter w;
  w.put_all(edges.values());
  return std::move(w).take();
}

inline HistogramEdges decode_edges(std::string_view bytes, std::size_t neuron_count, std::size_t bin_count) {
  io::ByteReader r(bytes);
  std::vector<double> values(neuron_count * (bin_count + 1));
  r.get_all(std::span<double>(values));
  if (r.remaining() != 0) fail(ErrorCode::TrailingBytes, "edges payload longer than C x (B+1) values");
  return HistogramEdges(neuron_count, bin_count, std::move(values));
}

inline constexpr std::string_view kSharedEdgesPolicy = "shared-map-edges";

inline nlohmann::json vdna_json(const Vdna& v, std::string_view edges_policy = kSharedEdgesPolicy) {
  return {{"bin_count", v.bin_count()},
          {"neuron_count", v.neuron_count()},
          {"image_count", v.image_count},
          {"edges_policy", edges_policy}};
}

/// C x (B+1) edges followed by C x B masses. Its length depends on (C, B)
/// only, never on the number of images summarised.
inline std::string encode_vdna_payload(const Vdna& v) {
  io::ByteWriter w;
  w.put_all(v.edges.values());
  w.put_all(std::span<const double>(v.mass));
  return std::move(w).take();
}

inline Vdna decode_vdna(std::string_view payload, const nlohmann::json& meta) {
  std::size_t c_count = 0, bins = 0, images = 0;
  try {
    c_count = meta.at("neuron_count").get<std::size_t>();
    bins = meta.at("bin_count").get<std::size_t>();
    images = meta.at("image_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ManifestInvalid, std::string("vdna metadata: ") + e.what());
  }
  const std::size_t edge_bytes = c_count * (bins + 1) * sizeof(double);
  if (payload.size() < edge_bytes) fail(ErrorCode::TruncatedPayload, "vdna payload shorter than its edges");
  Vdna v;
  v.image_count = images;
  v.edges = decode_edges(payload.substr(0, edge_bytes), c_count, bins);
  io::ByteReader r(payload.substr(edge_bytes));
  v.mass.resize(c_count * bins);
  r.get_all(std::span<double>(v.mass));
  if (r.remaining() != 0) fail(ErrorCode::TrailingBytes, "vdna payload longer than declared");
  for (std::size_t c = 0; c < c_count; ++c) {
    double s = 0.0;
    for (double m : v.neuron_mass(c)) {
      if (!(m >= 0.0)) fail(ErrorCode::ValueOutOfRange, "negative vdna mass");
      s += m;
    }
    if (std::abs(s - 1.0) > 1e-9) fail(ErrorCode::ValueOutOfRange, "vdna mass of neuron " + std::to_string(c) + " does not sum to 1");
  }
  return v;
}

}  // namespace expsel
