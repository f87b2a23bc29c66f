#pragma once

// Frechet distance between Gaussians fitted to per-image embeddings.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <json.hpp>

#include "expsel/binary_io.hpp"
#include "expsel/error.hpp"
#include "expsel/feature_store.hpp"

namespace expsel {

struct GaussianSummary {
  std::size_t count = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// Jitter added to covariance diagonals before taking matrix square roots.
inline constexpr double kCovarianceJitter = 1e-10;

/// Sample mean and unbiased (N-1) covariance of the embeddings of `fs`.
inline GaussianSummary fit_gaussian(const FeatureSet& fs) {
  const std::size_t n = fs.image_count();
  if (n < 2) fail(ErrorCode::TooFewImages, "need at least 2 images to fit a Gaussian, got " + std::to_string(n));
  const Eigen::Index d = fs.embedding_dim;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = fs.embedding(i);
    for (Eigen::Index j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = e[static_cast<std::size_t>(j)];
  }
  GaussianSummary g;
  g.count = n;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  g.covariance = 0.5 * (cov + cov.transpose());
  return g;
}

namespace detail {

inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen_psd(const Eigen::MatrixXd& a) {
  if (!a.allFinite()) fail(ErrorCode::EigenFailure, "matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) fail(ErrorCode::EigenFailure, "symmetric eigendecomposition did not converge");
  return solver;
}

}  // namespace detail

/// Principal square root of a symmetric PSD matrix. Negative eigenvalues
/// (rounding noise) are clipped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  const auto solver = detail::eigen_psd(a);
  const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

/// sqrt(|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)), clamped at 0.
inline double frechet_distance(const GaussianSummary& g1, const GaussianSummary& g2) {
  if (g1.dim() != g2.dim()) {
    fail(ErrorCode::DimMismatch, std::to_string(g1.dim()) + " vs " + std::to_string(g2.dim()) + " dimensions");
  }
  const Eigen::Index d = static_cast<Eigen::Index>(g1.dim());
  const Eigen::MatrixXd jitter = kCovarianceJitter * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd s1 = 0.5 * (g1.covariance + g1.covariance.transpose()) + jitter;
  const Eigen::MatrixXd s2 = 0.5 * (g2.covariance + g2.covariance.transpose()) + jitter;

  const Eigen::MatrixXd root1 = psd_sqrt(s1);
  Eigen::MatrixXd product = root1 * s2 * root1;
  product = 0.5 * (product + product.transpose());
  // Only the trace of the second root is needed.
  const double trace_cross = detail::eigen_psd(product).eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double mean_term = (g1.mean - g2.mean).squaredNorm();
  const double trace_term = g1.covariance.trace() + g2.covariance.trace() - 2.0 * trace_cross;
  const double fd2 = mean_term + trace_term;
  if (!std::isfinite(fd2)) fail(ErrorCode::EigenFailure, "Frechet distance is not finite");
  return std::sqrt(std::max(0.0, fd2));
}

// ---------------------------------------------------------------------------
// gaussian.json {dim, count} + gaussian.bin (D f64 mean, D x D f64 covariance
// row-major).

inline nlohmann::json gaussian_json(const GaussianSummary& g) { return {{"dim", g.dim()}, {"count", g.count}}; }

inline std::string encode_gaussian_payload(const GaussianSummary& g) {
  io::ByteWriter w;
  for (Eigen::Index i = 0; i < g.mean.size(); ++i) w.put(g.mean(i));
  for (Eigen::Index r = 0; r < g.covariance.rows(); ++r) {
    for (Eigen::Index c = 0; c < g.covariance.cols(); ++c) w.put(g.covariance(r, c));
  }
  return std::move(w).take();
}

inline GaussianSummary decode_gaussian(std::string_view payload, const nlohmann::json& meta) {
  GaussianSummary g;
  Eigen::Index d = 0;
  try {
    d = meta.at("dim").get<Eigen::Index>();
    g.count = meta.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ManifestInvalid, std::string("gaussian metadata: ") + e.what());
  }
  io::ByteReader r(payload);
  g.mean.resize(d);
  g.covariance.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) g.mean(i) = r.get<double>();
  for (Eigen::Index row = 0; row < d; ++row) {
    for (Eigen::Index c = 0; c < d; ++c) g.covariance(row, c) = r.get<double>();
  }
  if (r.remaining() != 0) fail(ErrorCode::TrailingBytes, "gaussian payload longer than declared");
  return g;
}

}  // namespace expsel
