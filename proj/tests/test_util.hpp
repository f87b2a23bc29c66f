#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "expsel/feature_store.hpp"

namespace testutil {

/// FeatureSet with frame-index poses at 1 s spacing. `activations` is N x C x S,
/// `embeddings` N x D.
inline expsel::FeatureSet make_set(const std::string& id, std::uint32_t c, std::uint32_t s, std::uint32_t d,
                                   std::vector<float> activations, std::vector<float> embeddings,
                                   std::vector<float> pixel_means = {}) {
  expsel::FeatureSet fs;
  fs.experience_id = id;
  fs.backbone_id = "test-backbone";
  fs.layer_id = "last";
  fs.neuron_count = c;
  fs.samples_per_image = s;
  fs.embedding_dim = d;
  const std::size_t n = embeddings.size() / d;
  fs.activations = std::move(activations);
  fs.embeddings = std::move(embeddings);
  fs.pixel_means = pixel_means.empty() ? std::vector<float>(n, 100.0f) : std::move(pixel_means);
  for (std::size_t i = 0; i < n; ++i) {
    fs.frames.push_back({id + "_" + std::to_string(i), static_cast<double>(i), expsel::FrameIndex{i}});
  }
  return fs;
}

inline expsel::FeatureSet random_set(const std::string& id, std::size_t n, std::uint32_t c, std::uint32_t s,
                                     std::uint32_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::uniform_real_distribution<float> px(0.0f, 255.0f);
  std::vector<float> act(n * c * s), emb(n * d), pix(n);
  for (auto& v : act) v = g(rng);
  for (auto& v : emb) v = g(rng);
  for (auto& v : pix) v = px(rng);
  return make_set(id, c, s, d, std::move(act), std::move(emb), std::move(pix));
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("expsel_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
