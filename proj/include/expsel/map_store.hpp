#pragma once

// Map-side experience artifacts and online experience selection.
//
// On disk a map is a directory:
//   map.json            format version, histogram config, experience order
//   edges.bin           shared per-neuron histogram edges (C x (B+1) f64)
//   <experience_id>/    manifest.json, vdna.{json,bin}, gaussian.{json,bin},
//                       stats.json, embeddings.bin (N x D f32)

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "expsel/baselines.hpp"
#include "expsel/binary_io.hpp"
#include "expsel/error.hpp"
#include "expsel/feature_store.hpp"
#include "expsel/gaussian_fd.hpp"
#include "expsel/ranking.hpp"
#include "expsel/vdna.hpp"

namespace expsel {

inline constexpr int kMapFormatVersion = 1;

struct MapArtifact {
  std::string experience_id;
  std::string backbone_id;
  std::string layer_id;
  Vdna vdna;
  GaussianSummary gaussian;
  PixelSummary pixel;
  std::uint32_t embedding_dim = 0;
  std::vector<float> embeddings;  // N x D
  std::vector<Frame> frames;
  std::vector<std::string> edges_provenance;
};

struct ExperienceMap {
  HistogramConfig config;
  HistogramEdges edges;
  std::vector<std::string> edges_provenance;
  std::vector<MapArtifact> experiences;

  const MapArtifact* find(std::string_view id) const {
    for (const auto& a : experiences) {
      if (a.experience_id == id) return &a;
    }
    return nullptr;
  }
};

enum class SelectionMethod { Vdna, Fd, Pixel };

inline std::string_view to_string(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::Vdna: return "vdna";
    case SelectionMethod::Fd: return "fd";
    case SelectionMethod::Pixel: return "pixel";
  }
  return "?";
}

inline SelectionMethod parse_selection_method(std::string_view s) {
  if (s == "vdna") return SelectionMethod::Vdna;
  if (s == "fd") return SelectionMethod::Fd;
  if (s == "pixel") return SelectionMethod::Pixel;
  fail(ErrorCode::InvalidArgument, "unknown selection method '" + std::string(s) + "'");
}

namespace detail {

inline void check_experience_id(const std::string& id) {
  if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos) {
    fail(ErrorCode::InvalidArgument, "experience id '" + id + "' cannot name a map directory");
  }
}

}  // namespace detail

/// Builds one artifact per experience, all sharing edges computed from every
/// provided experience.
inline ExperienceMap build_map(std::span<const FeatureSet* const> sets, const HistogramConfig& cfg,
                               std::size_t threads = 1) {
  if (sets.empty()) fail(ErrorCode::EmptyInput, "a map needs at least one experience");
  std::set<std::string> seen;
  for (const FeatureSet* fs : sets) {
    detail::check_experience_id(fs->experience_id);
    if (!seen.insert(fs->experience_id).second) {
      fail(ErrorCode::InvalidArgument, "experience '" + fs->experience_id + "' appears twice");
    }
    if (fs->embedding_dim != sets.front()->embedding_dim) {
      fail(ErrorCode::DimMismatch, "experience '" + fs->experience_id + "' has a different embedding size");
    }
  }

  ExperienceMap map;
  map.config = cfg;
  map.edges = compute_edges(sets, cfg);
  for (const FeatureSet* fs : sets) map.edges_provenance.push_back(fs->experience_id);

  for (const FeatureSet* fs : sets) {
    MapArtifact a;
    a.experience_id = fs->experience_id;
    a.backbone_id = fs->backbone_id;
    a.layer_id = fs->layer_id;
    a.vdna = build_vdna(*fs, map.edges, threads);
    a.gaussian = fit_gaussian(*fs);
    a.pixel = pixel_summary(*fs);
    a.embedding_dim = fs->embedding_dim;
    a.embeddings = fs->embeddings;
    a.frames = fs->frames;
    a.edges_provenance = map.edges_provenance;
    map.experiences.push_back(std::move(a));
  }
  return map;
}

inline ExperienceMap build_map(std::span<const FeatureSet> sets, const HistogramConfig& cfg, std::size_t threads = 1) {
  std::vector<const FeatureSet*> ptrs;
  for (const auto& fs : sets) ptrs.push_back(&fs);
  return build_map(std::span<const FeatureSet* const>(ptrs), cfg, threads);
}

/// Ranks the map's experiences by dissimilarity to `warmup`; the first entry
/// is the selected experience.
inline ExperienceRanking select_experience(const FeatureSet& warmup, const ExperienceMap& map, SelectionMethod method,
                                           std::size_t threads = 1) {
  if (map.experiences.empty()) fail(ErrorCode::EmptyInput, "map has no experiences");
  for (const auto& a : map.experiences) {
    if (a.backbone_id != warmup.backbone_id || a.layer_id != warmup.layer_id) {
      fail(ErrorCode::IncompatibleFeatureSet, "warmup features come from " + warmup.backbone_id + "/" +
                                                  warmup.layer_id + ", map experience '" + a.experience_id +
                                                  "' from " + a.backbone_id + "/" + a.layer_id);
    }
  }

  ScoreMap scores;
  switch (method) {
    case SelectionMethod::Vdna: {
      if (warmup.neuron_count != map.edges.neuron_count()) {
        fail(ErrorCode::IncompatibleFeatureSet, "warmup has " + std::to_string(warmup.neuron_count) +
                                                    " neurons, map has " + std::to_string(map.edges.neuron_count()));
      }
      const Vdna live = build_vdna(warmup, map.edges, threads);
      for (const auto& a : map.experiences) scores[a.experience_id] = vdna_distance(live, a.vdna, threads).aggregate;
      break;
    }
    case SelectionMethod::Fd: {
      const GaussianSummary live = fit_gaussian(warmup);
      for (const auto& a : map.experiences) {
        if (a.gaussian.dim() != live.dim()) {
          fail(ErrorCode::IncompatibleFeatureSet, "warmup embeddings have D=" + std::to_string(live.dim()) +
                                                      ", map has D=" + std::to_string(a.gaussian.dim()));
        }
        scores[a.experience_id] = frechet_distance(live, a.gaussian);
      }
      break;
    }
    case SelectionMethod::Pixel: {
      const PixelSummary live = pixel_summary(warmup);
      for (const auto& a : map.experiences) scores[a.experience_id] = pixel_distance(live, a.pixel);
      break;
    }
  }
  return rank_by_distance(scores, warmup.experience_id);
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) { io::write_file(p, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const std::filesystem::path& p) {
  try {
    return nlohmann::json::parse(io::read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ManifestInvalid, p.string() + ": " + e.what());
  }
}

}  // namespace detail

inline void save_map(const ExperienceMap& map, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + root.string() + ": " + ec.message());

  nlohmann::json ids = nlohmann::json::array();
  for (const auto& a : map.experiences) ids.push_back(a.experience_id);
  detail::write_json(root / "map.json", {{"format_version", kMapFormatVersion},
                                         {"bin_count", map.config.bin_count},
                                         {"margin_fraction", map.config.margin_fraction},
                                         {"neuron_count", map.edges.neuron_count()},
                                         {"edges_provenance", map.edges_provenance},
                                         {"experiences", ids}});
  io::write_file(root / "edges.bin", encode_edges(map.edges));

  for (const auto& a : map.experiences) {
    const fs::path dir = root / a.experience_id;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

    FeatureSet meta;
    meta.experience_id = a.experience_id;
    meta.backbone_id = a.backbone_id;
    meta.layer_id = a.layer_id;
    meta.frames = a.frames;
    nlohmann::json manifest = manifest_json(meta);
    manifest["image_count"] = a.frames.size();
    manifest["embedding_dim"] = a.embedding_dim;
    manifest["edges_provenance"] = a.edges_provenance;
    detail::write_json(dir / "manifest.json", manifest);

    detail::write_json(dir / "vdna.json", vdna_json(a.vdna));
    io::write_file(dir / "vdna.bin", encode_vdna_payload(a.vdna));
    detail::write_json(dir / "gaussian.json", gaussian_json(a.gaussian));
    io::write_file(dir / "gaussian.bin", encode_gaussian_payload(a.gaussian));
    detail::write_json(dir / "stats.json",
                       {{"pixel", {{"mean_intensity", a.pixel.mean_intensity}, {"image_count", a.pixel.image_count}}}});
    io::ByteWriter w;
    w.put_all(std::span<const float>(a.embeddings));
    io::write_file(dir / "embeddings.bin", w.bytes());
  }
}

inline ExperienceMap load_map(const std::filesystem::path& root) {
  const nlohmann::json top = detail::read_json(root / "map.json");
  ExperienceMap map;
  std::vector<std::string> ids;
  try {
    if (top.at("format_version").get<int>() != kMapFormatVersion) {
      fail(ErrorCode::VersionUnsupported, "map format " + top.at("format_version").dump());
    }
    map.config.bin_count = top.at("bin_count").get<std::size_t>();
    map.config.margin_fraction = top.at("margin_fraction").get<double>();
    map.edges_provenance = top.at("edges_provenance").get<std::vector<std::string>>();
    ids = top.at("experiences").get<std::vector<std::string>>();
    map.edges = decode_edges(io::read_file(root / "edges.bin"), top.at("neuron_count").get<std::size_t>(),
                             map.config.bin_count);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ManifestInvalid, "map.json: " + std::string(e.what()));
  }

  for (const auto& id : ids) {
    detail::check_experience_id(id);
    const auto dir = root / id;
    MapArtifact a;
    FeatureSet meta;
    const nlohmann::json manifest = detail::read_json(dir / "manifest.json");
    apply_manifest(meta, manifest);
    a.experience_id = meta.experience_id;
    a.backbone_id = meta.backbone_id;
    a.layer_id = meta.layer_id;
    a.frames = std::move(meta.frames);
    try {
      a.embedding_dim = manifest.at("embedding_dim").get<std::uint32_t>();
      a.edges_provenance = manifest.at("edges_provenance").get<std::vector<std::string>>();
      const nlohmann::json stats = detail::read_json(dir / "stats.json");
      a.pixel.mean_intensity = stats.at("pixel").at("mean_intensity").get<double>();
      a.pixel.image_count = stats.at("pixel").at("image_count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ManifestInvalid, (dir / "manifest.json").string() + ": " + e.what());
    }
    if (a.experience_id != id) fail(ErrorCode::ManifestMismatch, "directory '" + id + "' holds '" + a.experience_id + "'");

    a.vdna = decode_vdna(io::read_file(dir / "vdna.bin"), detail::read_json(dir / "vdna.json"));
    a.gaussian = decode_gaussian(io::read_file(dir / "gaussian.bin"), detail::read_json(dir / "gaussian.json"));

    const std::string emb = io::read_file(dir / "embeddings.bin");
    const std::size_t n = a.frames.size();
    if (emb.size() != n * a.embedding_dim * sizeof(float)) {
      fail(ErrorCode::TruncatedPayload, (dir / "embeddings.bin").string() + " does not hold N x D floats");
    }
    a.embeddings.resize(n * a.embedding_dim);
    io::ByteReader r(emb);
    r.get_all(std::span<float>(a.embeddings));

    if (a.vdna.image_count != n || a.pixel.image_count != n || a.gaussian.count != n) {
      fail(ErrorCode::ManifestMismatch, "artifact counts of '" + id + "' disagree with its frame list");
    }
    if (a.vdna.edges != map.edges) fail(ErrorCode::EdgeMismatch, "'" + id + "' was built on different edges");
    if (a.gaussian.dim() != a.embedding_dim) fail(ErrorCode::DimMismatch, "'" + id + "' gaussian size mismatch");
    map.experiences.push_back(std::move(a));
  }
  return map;
}

/// Rebuilds a FeatureSet view of a stored artifact carrying only what the map
/// keeps (embeddings, pixel summary, frames); activations are not stored.
inline FeatureSet artifact_embeddings(const MapArtifact& a) {
  FeatureSet fs;
  fs.experience_id = a.experience_id;
  fs.backbone_id = a.backbone_id;
  fs.layer_id = a.layer_id;
  fs.embedding_dim = a.embedding_dim;
  fs.embeddings = a.embeddings;
  fs.frames = a.frames;
  fs.pixel_means.assign(a.frames.size(), static_cast<float>(a.pixel.mean_intensity));
  return fs;
}

}  // namespace expsel
