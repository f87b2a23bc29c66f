#pragma once

// Seeded generator of synthetic experiences along one route. Every
// experience samples the same places; a scalar `shift` applies a gain and
// bias to activations, embeddings and pixel intensity so that larger shifts
// mean a larger domain gap from the unshifted condition.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "expsel/feature_store.hpp"

namespace expsel {

inline constexpr std::uint64_t kDefaultSeed = 20240501;

struct SyntheticConfig {
  std::size_t images = 24;
  std::uint32_t neurons = 16;
  std::uint32_t samples_per_image = 32;
  std::uint32_t embedding_dim = 8;
  double gain_per_shift = 0.08;
  double bias_per_shift = 0.25;
  double embedding_noise = 0.15;  // grows with shift
  double frame_period_s = 0.5;
  std::string backbone_id = "synthetic";
  std::string layer_id = "last";
};

/// The condition-independent part of a route: per-neuron activation
/// statistics and one embedding per place.
struct SyntheticRoute {
  SyntheticConfig config;
  std::vector<double> neuron_mean;
  std::vector<double> neuron_std;
  std::vector<double> places;  // images x embedding_dim

  static SyntheticRoute make(const SyntheticConfig& cfg, std::uint64_t seed) {
    SyntheticRoute r{cfg, {}, {}, {}};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mean_dist(-1.0, 1.0);
    std::uniform_real_distribution<double> std_dist(0.5, 1.5);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::uint32_t c = 0; c < cfg.neurons; ++c) {
      r.neuron_mean.push_back(mean_dist(rng));
      r.neuron_std.push_back(std_dist(rng));
    }
    r.places.resize(cfg.images * cfg.embedding_dim);
    for (double& p : r.places) p = unit(rng);
    return r;
  }
};

inline FeatureSet make_synthetic_experience(const SyntheticRoute& route, const std::string& experience_id, double shift,
                                            std::uint64_t seed) {
  const SyntheticConfig& cfg = route.config;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double gain = 1.0 + cfg.gain_per_shift * shift;
  const double bias = cfg.bias_per_shift * shift;

  FeatureSet fs;
  fs.experience_id = experience_id;
  fs.backbone_id = cfg.backbone_id;
  fs.layer_id = cfg.layer_id;
  fs.neuron_count = cfg.neurons;
  fs.samples_per_image = cfg.samples_per_image;
  fs.embedding_dim = cfg.embedding_dim;
  for (std::size_t i = 0; i < cfg.images; ++i) {
    const double intensity = 110.0 + 25.0 * shift + 5.0 * unit(rng);
    fs.pixel_means.push_back(static_cast<float>(std::clamp(intensity, 0.0, 255.0)));
    for (std::uint32_t d = 0; d < cfg.embedding_dim; ++d) {
      const double place = route.places[i * cfg.embedding_dim + d];
      const double noisy = place + cfg.embedding_noise * (1.0 + shift) * unit(rng);
      fs.embeddings.push_back(static_cast<float>(gain * noisy + bias));
    }
    for (std::uint32_t c = 0; c < cfg.neurons; ++c) {
      for (std::uint32_t s = 0; s < cfg.samples_per_image; ++s) {
        const double x = route.neuron_mean[c] + route.neuron_std[c] * unit(rng);
        fs.activations.push_back(static_cast<float>(gain * x + bias));
      }
    }
    fs.frames.push_back(Frame{experience_id + "_" + std::to_string(i), cfg.frame_period_s * static_cast<double>(i),
                              FrameIndex{i}});
  }
  return fs;
}

}  // namespace expsel
