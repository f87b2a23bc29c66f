#pragma once

// Per-experience feature container and the FEX1 wire format.
//
// A feature file is
//   "FEX1" | u32 version | u32 N | u32 C | u32 S | u32 D | N records
// where each record is
//   f32 pixel_mean | D x f32 embedding | (C*S) x f32 activations (neuron-major)
// and everything is little-endian. Irregular metadata (ids, frames, poses)
// lives in a JSON sidecar next to the binary file.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "expsel/binary_io.hpp"
#include "expsel/error.hpp"

namespace expsel {

inline constexpr std::string_view kFeatureMagic = "FEX1";
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 4 + 5 * sizeof(std::uint32_t);

struct FrameIndex {
  std::uint64_t index = 0;
  bool operator==(const FrameIndex&) const = default;
};

struct Gps {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  bool operator==(const Gps&) const = default;
};

using GroundTruthPose = std::variant<FrameIndex, Gps>;

struct Frame {
  std::string frame_id;
  double timestamp_s = 0.0;
  GroundTruthPose pose;
  bool operator==(const Frame&) const = default;
};

/// Metres east (x) and north (y) of a local origin.
struct LocalPosition {
  double x_m = 0.0;
  double y_m = 0.0;
  bool operator==(const LocalPosition&) const = default;
};

/// All per-image features of one experience. Immutable once validated; the
/// per-image arrays are stored contiguously, image-major.
struct FeatureSet {
  std::string experience_id;
  std::string backbone_id;
  std::string layer_id;
  std::uint32_t neuron_count = 0;       // C
  std::uint32_t samples_per_image = 0;  // S
  std::uint32_t embedding_dim = 0;      // D
  std::vector<float> pixel_means;       // N
  std::vector<float> embeddings;        // N x D
  std::vector<float> activations;       // N x C x S
  std::vector<Frame> frames;            // N

  std::size_t image_count() const { return pixel_means.size(); }

  std::span<const float> embedding(std::size_t image) const {
    return std::span<const float>(embeddings).subspan(image * embedding_dim, embedding_dim);
  }

  std::span<const float> image_activations(std::size_t image) const {
    const std::size_t per_image = std::size_t{neuron_count} * samples_per_image;
    return std::span<const float>(activations).subspan(image * per_image, per_image);
  }

  /// The S samples of one neuron for one image.
  std::span<const float> neuron_samples(std::size_t image, std::size_t neuron) const {
    return image_activations(image).subspan(neuron * samples_per_image, samples_per_image);
  }

  bool operator==(const FeatureSet&) const = default;
};

namespace detail {

inline void check_finite(std::span<const float> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorCode::NonFiniteValue, std::string(what) + "[" + std::to_string(i) + "] is not finite");
    }
  }
}

inline bool same_pose_kind(const GroundTruthPose& a, const GroundTruthPose& b) {
  return a.index() == b.index();
}

}  // namespace detail

/// Checks every FeatureSet invariant; throws on the first violation.
inline void validate(const FeatureSet& fs) {
  const std::size_t n = fs.image_count();
  if (fs.neuron_count == 0 || fs.samples_per_image == 0 || fs.embedding_dim == 0) {
    fail(ErrorCode::InvalidHeader, "C, S and D must be positive");
  }
  if (n == 0) fail(ErrorCode::EmptyExperience, "experience '" + fs.experience_id + "' has no images");
  if (fs.embeddings.size() != n * fs.embedding_dim) {
    fail(ErrorCode::ManifestMismatch, "embedding count does not match N x D");
  }
  if (fs.activations.size() != n * fs.neuron_count * fs.samples_per_image) {
    fail(ErrorCode::ManifestMismatch, "activation count does not match N x C x S");
  }
  if (fs.frames.size() != n) {
    fail(ErrorCode::ManifestMismatch, "manifest lists " + std::to_string(fs.frames.size()) +
                                          " frames but the feature file holds " + std::to_string(n));
  }
  detail::check_finite(fs.pixel_means, "pixel_mean");
  detail::check_finite(fs.embeddings, "embedding");
  detail::check_finite(fs.activations, "activation");
  for (std::size_t i = 0; i < n; ++i) {
    if (fs.pixel_means[i] < 0.0f || fs.pixel_means[i] > 255.0f) {
      fail(ErrorCode::ValueOutOfRange,
           "pixel_mean of image " + std::to_string(i) + " is " + std::to_string(fs.pixel_means[i]));
    }
  }

  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const Frame& f = fs.frames[i];
    if (!ids.insert(f.frame_id).second) fail(ErrorCode::ManifestInvalid, "duplicate frame_id '" + f.frame_id + "'");
    if (!std::isfinite(f.timestamp_s) || f.timestamp_s < 0.0) {
      fail(ErrorCode::ManifestInvalid, "frame '" + f.frame_id + "' has an invalid timestamp");
    }
    if (i > 0 && f.timestamp_s < fs.frames[i - 1].timestamp_s) {
      fail(ErrorCode::ManifestInvalid, "timestamps decrease at frame '" + f.frame_id + "'");
    }
    if (!detail::same_pose_kind(f.pose, fs.frames.front().pose)) {
      fail(ErrorCode::ManifestInvalid, "frames mix frame-index and GPS poses");
    }
    if (const auto* g = std::get_if<Gps>(&f.pose)) {
      if (!(g->lat_deg >= -90.0 && g->lat_deg <= 90.0 && g->lon_deg >= -180.0 && g->lon_deg <= 180.0)) {
        fail(ErrorCode::ManifestInvalid, "frame '" + f.frame_id + "' has GPS outside valid range");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::json pose_to_json(const GroundTruthPose& pose) {
  if (const auto* fi = std::get_if<FrameIndex>(&pose)) {
    return {{"type", "frame_index"}, {"index", fi->index}};
  }
  const auto& g = std::get<Gps>(pose);
  return {{"type", "gps"}, {"lat_deg", g.lat_deg}, {"lon_deg", g.lon_deg}};
}

inline GroundTruthPose pose_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "frame_index") {
    const auto& idx = j.at("index");
    if (!idx.is_number_unsigned() && !(idx.is_number_integer() && idx.get<std::int64_t>() >= 0)) {
      fail(ErrorCode::ManifestInvalid, "frame index must be a non-negative integer");
    }
    return FrameIndex{idx.get<std::uint64_t>()};
  }
  if (type == "gps") return Gps{j.at("lat_deg").get<double>(), j.at("lon_deg").get<double>()};
  fail(ErrorCode::ManifestInvalid, "unknown pose type '" + type + "'");
}

inline nlohmann::json manifest_json(const FeatureSet& fs) {
  nlohmann::json frames = nlohmann::json::array();
  for (const Frame& f : fs.frames) {
    frames.push_back({{"frame_id", f.frame_id}, {"timestamp_s", f.timestamp_s}, {"pose", pose_to_json(f.pose)}});
  }
  return {{"experience_id", fs.experience_id},
          {"backbone_id", fs.backbone_id},
          {"layer_id", fs.layer_id},
          {"frames", std::move(frames)}};
}

/// Fills the metadata fields of `fs` from a manifest document.
inline void apply_manifest(FeatureSet& fs, const nlohmann::json& manifest) {
  try {
    fs.experience_id = manifest.at("experience_id").get<std::string>();
    fs.backbone_id = manifest.at("backbone_id").get<std::string>();
    fs.layer_id = manifest.at("layer_id").get<std::string>();
    fs.frames.clear();
    for (const auto& jf : manifest.at("frames")) {
      fs.frames.push_back(Frame{jf.at("frame_id").get<std::string>(), jf.at("timestamp_s").get<double>(),
                                pose_from_json(jf.at("pose"))});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ManifestInvalid, e.what());
  }
}

/// Sidecar manifest location for a feature file: the same path with ".json"
/// appended.
inline std::filesystem::path manifest_path_for(const std::filesystem::path& feature_path) {
  auto p = feature_path;
  p += ".json";
  return p;
}

// ---------------------------------------------------------------------------
// Binary payload

inline std::string encode_feature_payload(const FeatureSet& fs) {
  io::ByteWriter w;
  w.put_bytes(kFeatureMagic);
  w.put(kFeatureVersion);
  w.put(static_cast<std::uint32_t>(fs.image_count()));
  w.put(fs.neuron_count);
  w.put(fs.samples_per_image);
  w.put(fs.embedding_dim);
  for (std::size_t i = 0; i < fs.image_count(); ++i) {
    w.put(fs.pixel_means[i]);
    w.put_all(fs.embedding(i));
    w.put_all(fs.image_activations(i));
  }
  return std::move(w).take();
}

/// Decodes the binary payload only. Metadata and frames are left empty.
inline FeatureSet decode_feature_payload(std::string_view bytes) {
  if (bytes.size() < kFeatureMagic.size() || bytes.substr(0, kFeatureMagic.size()) != kFeatureMagic) {
    fail(ErrorCode::BadMagic, "feature file does not start with FEX1");
  }
  io::ByteReader r(bytes);
  r.get_bytes(kFeatureMagic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kFeatureVersion) fail(ErrorCode::VersionUnsupported, "version " + std::to_string(version));

  FeatureSet fs;
  const std::uint64_t n = r.get<std::uint32_t>();
  fs.neuron_count = r.get<std::uint32_t>();
  fs.samples_per_image = r.get<std::uint32_t>();
  fs.embedding_dim = r.get<std::uint32_t>();
  if (n == 0 || fs.neuron_count == 0 || fs.samples_per_image == 0 || fs.embedding_dim == 0) {
    fail(ErrorCode::InvalidHeader, "N, C, S and D must be positive");
  }

  // All factors are < 2^32, so the products below fit in 64 bits except the
  // final multiply by N, which is checked against the available bytes first.
  const std::uint64_t floats_per_record =
      1 + std::uint64_t{fs.embedding_dim} + std::uint64_t{fs.neuron_count} * fs.samples_per_image;
  const std::uint64_t record_bytes = floats_per_record * sizeof(float);
  const std::uint64_t available = r.remaining();
  if (available / record_bytes < n) {
    fail(ErrorCode::TruncatedPayload, "header declares " + std::to_string(n) + " records of " +
                                          std::to_string(record_bytes) + " bytes, only " +
                                          std::to_string(available) + " bytes present");
  }
  if (available != n * record_bytes) {
    fail(ErrorCode::TrailingBytes, std::to_string(available - n * record_bytes) + " bytes after last record");
  }

  const std::size_t per_image = std::size_t{fs.neuron_count} * fs.samples_per_image;
  fs.pixel_means.resize(n);
  fs.embeddings.resize(n * fs.embedding_dim);
  fs.activations.resize(n * per_image);
  for (std::size_t i = 0; i < n; ++i) {
    fs.pixel_means[i] = r.get<float>();
    r.get_all(std::span<float>(fs.embeddings).subspan(i * fs.embedding_dim, fs.embedding_dim));
    r.get_all(std::span<float>(fs.activations).subspan(i * per_image, per_image));
  }
  return fs;
}

/// Decodes and fully validates a feature set from its payload and manifest.
inline FeatureSet parse_feature_set(std::string_view payload, const nlohmann::json& manifest) {
  FeatureSet fs = decode_feature_payload(payload);
  apply_manifest(fs, manifest);
  validate(fs);
  return fs;
}

inline FeatureSet ingest_feature_set(const std::filesystem::path& path,
                                     std::optional<std::filesystem::path> manifest_path = std::nullopt) {
  const std::string payload = io::read_file(path);
  const auto mpath = manifest_path.value_or(manifest_path_for(path));
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(mpath));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ManifestInvalid, mpath.string() + ": " + e.what());
  }
  return parse_feature_set(payload, manifest);
}

/// Writes the binary payload to `path` and the manifest to its sidecar.
inline void write_feature_set(const FeatureSet& fs, const std::filesystem::path& path) {
  validate(fs);
  io::write_file(path, encode_feature_payload(fs));
  io::write_file(manifest_path_for(path), manifest_json(fs).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Warmup selection

struct FirstKFrames {
  std::size_t k = 0;
};

struct FirstSeconds {
  double seconds = 0.0;
};

using WarmupPolicy = std::variant<FirstKFrames, FirstSeconds>;

struct WarmupSelection {
  FeatureSet set;
  /// The experience was shorter than the policy window, so every frame was kept.
  bool shorter_than_policy = false;
};

/// Copy of the first `count` images of `fs`, in order.
inline FeatureSet take_prefix(const FeatureSet& fs, std::size_t count) {
  FeatureSet out;
  out.experience_id = fs.experience_id;
  out.backbone_id = fs.backbone_id;
  out.layer_id = fs.layer_id;
  out.neuron_count = fs.neuron_count;
  out.samples_per_image = fs.samples_per_image;
  out.embedding_dim = fs.embedding_dim;
  const std::size_t per_image = std::size_t{fs.neuron_count} * fs.samples_per_image;
  out.pixel_means.assign(fs.pixel_means.begin(), fs.pixel_means.begin() + count);
  out.embeddings.assign(fs.embeddings.begin(), fs.embeddings.begin() + count * fs.embedding_dim);
  out.activations.assign(fs.activations.begin(), fs.activations.begin() + count * per_image);
  out.frames.assign(fs.frames.begin(), fs.frames.begin() + count);
  return out;
}

inline WarmupSelection select_warmup(const FeatureSet& fs, const WarmupPolicy& policy) {
  const std::size_t n = fs.image_count();
  if (n == 0 || fs.frames.size() != n) fail(ErrorCode::EmptyExperience, "no frames to select warmup from");

  std::size_t keep = 0;
  bool shorter = false;
  if (const auto* first_k = std::get_if<FirstKFrames>(&policy)) {
    if (first_k->k == 0) fail(ErrorCode::InvalidArgument, "warmup frame count must be at least 1");
    keep = std::min(first_k->k, n);
    shorter = n < first_k->k;
  } else {
    const double window = std::get<FirstSeconds>(policy).seconds;
    if (!(window > 0.0) || !std::isfinite(window)) fail(ErrorCode::InvalidArgument, "warmup window must be positive");
    const double t0 = fs.frames.front().timestamp_s;
    while (keep < n && fs.frames[keep].timestamp_s - t0 < window) ++keep;
    shorter = keep == n;
  }
  return {take_prefix(fs, keep), shorter};
}

// ---------------------------------------------------------------------------
// GPS

inline constexpr double kEarthRadiusM = 6378137.0;

/// Equirectangular projection around `origin`. Accurate to well under a
/// millimetre over sub-kilometre extents away from the poles.
inline LocalPosition gps_to_local(const Gps& origin, const Gps& p) {
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  const double lat0 = origin.lat_deg * kDegToRad;
  const double dlat = (p.lat_deg - origin.lat_deg) * kDegToRad;
  const double dlon = (p.lon_deg - origin.lon_deg) * kDegToRad;
  return {kEarthRadiusM * std::cos(lat0) * dlon, kEarthRadiusM * dlat};
}

}  // namespace expsel
