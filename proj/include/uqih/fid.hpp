#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "uqih/image.hpp"

namespace uqih::fid {

/// n x d feature matrix; rows are images.
struct EmbeddingSet {
  Eigen::MatrixXd matrix;
  std::string provider_id;

  Eigen::Index n() const { return matrix.rows(); }
  Eigen::Index d() const { return matrix.cols(); }

  /// Throws InvalidArgument unless n >= 2, d >= 1 and all values finite.
  void validate() const;
};

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline constexpr char kEmbeddingMagic[16] = {'U', 'Q', 'I', 'H', '-', 'E', 'M', 'B',
                                             'E', 'D', '\0', '\0', '\0', '\0', '\0', '\0'};

/// Produces embeddings for a list of images.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual EmbeddingSet embed(std::span<const Image> images) const = 0;
};

/// Desk-scale stand-in for a neural feature extractor: area-average each
/// image to 8x8, flatten to 64 values, and optionally project onto a seeded
/// random orthonormal basis of `target_dim` columns.
class ToyEmbedder final : public EmbeddingProvider {
 public:
  static constexpr int kGrid = 8;
  static constexpr int kBaseDim = kGrid * kGrid;

  /// target_dim 0 or 64 disables projection.
  explicit ToyEmbedder(int target_dim = 0, std::uint64_t seed = 0);

  std::string id() const override;
  EmbeddingSet embed(std::span<const Image> images) const override;

  int dim() const { return projection_.size() == 0 ? kBaseDim : static_cast<int>(projection_.cols()); }

 private:
  int target_dim_;
  std::uint64_t seed_;
  Eigen::MatrixXd projection_;  // 64 x target_dim, orthonormal columns
};

/// Exact box-filter downsample of a single-channel image to rows x cols.
Eigen::MatrixXd area_downsample(const Image& img, int rows, int cols);

EmbeddingSet embed_toy(std::span<const Image> images, int target_dim = 0, std::uint64_t seed = 0);

/// Embedding-file I/O: magic, u32 LE header length, JSON header
/// {"d","dtype":"f32le","n","provider_id"}, n*d f32 LE values row-major.
EmbeddingSet load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

/// Column means and unbiased covariance, symmetrised as (C + C^T) / 2.
GaussianStats fit_gaussian(const EmbeddingSet& set);

/// Principal square root of a symmetric PSD matrix by eigendecomposition,
/// negative eigenvalues clamped to zero.
///
/// Rejects inputs that are asymmetric beyond 1e-10 relative Frobenius error
/// or whose smallest eigenvalue is below -1e-8 times the spectral radius.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m);

/// Squared Frechet distance between Gaussians,
///   |mu_a - mu_b|^2 + tr(S_a) + tr(S_b) - 2 tr((S_a^1/2 S_b S_a^1/2)^1/2).
///
/// Results in [-1e-6, 0) or below 1e-12 of the total scale are roundoff and
/// clamp to 0; anything more negative throws NumericalError.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Either raw images (embedded by the provider) or precomputed embeddings.
using FidInput = std::variant<std::vector<Image>, EmbeddingSet>;

/// FID between two sets. Embedding sets must carry the same provider_id
/// as each other and, when images are involved, as the provider.
double fid(const FidInput& real, const FidInput& generated, const EmbeddingProvider* provider);

}  // namespace uqih::fid
