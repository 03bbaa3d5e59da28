#include "uqih/fid.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "uqih/io.hpp"
#include "uqih/parallel.hpp"
#include "uqih/rng.hpp"

namespace uqih::fid {

using nlohmann::json;

void EmbeddingSet::validate() const {
  if (matrix.rows() < 2) {
    throw InvalidArgument("embedding set needs at least 2 samples, got " +
                          std::to_string(matrix.rows()));
  }
  if (matrix.cols() < 1) throw InvalidArgument("embedding dimension must be positive");
  if (!matrix.allFinite()) throw InvalidArgument("embedding set contains non-finite values");
}

Eigen::MatrixXd area_downsample(const Image& img, int rows, int cols) {
  if (img.channels() != 1) throw InvalidArgument("area_downsample expects one channel");
  // Overlap weights of source cells [i, i+1) with target cells scaled to source units.
  auto weights = [](int src, int dst) {
    Eigen::MatrixXd wts = Eigen::MatrixXd::Zero(dst, src);
    const double step = static_cast<double>(src) / dst;
    for (int t = 0; t < dst; ++t) {
      const double a = t * step;
      const double b = (t + 1) * step;
      for (int s = static_cast<int>(std::floor(a)); s < src && s < b; ++s) {
        const double overlap = std::min<double>(b, s + 1) - std::max<double>(a, s);
        if (overlap > 0) wts(t, s) = overlap / step;
      }
    }
    return wts;
  };
  const Eigen::MatrixXd wr = weights(img.height(), rows);
  const Eigen::MatrixXd wc = weights(img.width(), cols);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> src(
      img.data().data(), img.height(), img.width());
  return wr * src * wc.transpose();
}

ToyEmbedder::ToyEmbedder(int target_dim, std::uint64_t seed)
    : target_dim_(target_dim), seed_(seed) {
  if (target_dim < 0 || target_dim > kBaseDim) {
    throw InvalidArgument("toy embedder target_dim must be in [0, 64]");
  }
  if (target_dim == 0 || target_dim == kBaseDim) return;
  RngStream rng(seed);
  Eigen::MatrixXd g(kBaseDim, target_dim);
  for (int c = 0; c < target_dim; ++c) {
    for (int r = 0; r < kBaseDim; ++r) g(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  projection_ = qr.householderQ() * Eigen::MatrixXd::Identity(kBaseDim, target_dim);
}

std::string ToyEmbedder::id() const {
  if (projection_.size() == 0) return "toy-8x8";
  return "toy-8x8-proj" + std::to_string(target_dim_) + "-seed" + std::to_string(seed_);
}

EmbeddingSet ToyEmbedder::embed(std::span<const Image> images) const {
  if (images.empty()) throw InvalidArgument("cannot embed an empty image list");
  for (const auto& img : images) {
    if (img.channels() != 1) throw InvalidArgument("toy embedder expects single-channel images");
    if (img.width() != images.front().width() || img.height() != images.front().height()) {
      throw InvalidArgument("toy embedder expects images of identical dimensions");
    }
  }
  Eigen::MatrixXd flat(static_cast<Eigen::Index>(images.size()), kBaseDim);
  parallel_for(images.size(), [&](std::size_t i) {
    const Eigen::MatrixXd cells = area_downsample(images[i], kGrid, kGrid);
    for (int r = 0; r < kGrid; ++r) {
      for (int c = 0; c < kGrid; ++c) flat(static_cast<Eigen::Index>(i), r * kGrid + c) = cells(r, c);
    }
  });
  EmbeddingSet out;
  out.matrix = projection_.size() == 0 ? flat : Eigen::MatrixXd(flat * projection_);
  out.provider_id = id();
  return out;
}

EmbeddingSet embed_toy(std::span<const Image> images, int target_dim, std::uint64_t seed) {
  return ToyEmbedder(target_dim, seed).embed(images);
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kEmbeddingMagic, 16) != 0) {
    throw IoError(path.string() + ": not an embedding file");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  auto u32 = [](const unsigned char* q) {
    return static_cast<std::uint32_t>(q[0]) | (static_cast<std::uint32_t>(q[1]) << 8) |
           (static_cast<std::uint32_t>(q[2]) << 16) | (static_cast<std::uint32_t>(q[3]) << 24);
  };
  const std::uint32_t header_len = u32(p + 16);
  if (bytes.size() < 20 + static_cast<std::size_t>(header_len)) {
    throw IoError(path.string() + ": truncated embedding header");
  }
  std::int64_t n = 0, d = 0;
  EmbeddingSet set;
  try {
    const json header = json::parse(bytes.substr(20, header_len));
    n = header.at("n").get<std::int64_t>();
    d = header.at("d").get<std::int64_t>();
    set.provider_id = header.at("provider_id").get<std::string>();
    if (header.at("dtype").get<std::string>() != "f32le") throw IoError("unsupported dtype");
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed embedding header: " + e.what());
  }
  if (n < 2) throw IoError(path.string() + ": embedding file needs n >= 2, got " + std::to_string(n));
  if (d < 1 || d > (1 << 20) || n > (1 << 26)) throw IoError(path.string() + ": bad dimensions");
  const std::size_t offset = 20 + header_len;
  const auto count = static_cast<std::size_t>(n * d);
  if (bytes.size() != offset + 4 * count) {
    throw IoError(path.string() + ": payload size does not match header");
  }
  set.matrix.resize(n, d);
  for (std::int64_t r = 0; r < n; ++r) {
    for (std::int64_t c = 0; c < d; ++c) {
      const float v = std::bit_cast<float>(u32(p + offset + 4 * static_cast<std::size_t>(r * d + c)));
      if (!std::isfinite(v)) throw IoError(path.string() + ": non-finite embedding value");
      set.matrix(r, c) = v;
    }
  }
  return set;
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  set.validate();
  const json header = {{"n", set.n()}, {"d", set.d()}, {"provider_id", set.provider_id},
                       {"dtype", "f32le"}};
  const std::string text = header.dump();
  std::string out(kEmbeddingMagic, 16);
  auto put_u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_u32(static_cast<std::uint32_t>(text.size()));
  out += text;
  for (Eigen::Index r = 0; r < set.n(); ++r) {
    for (Eigen::Index c = 0; c < set.d(); ++c) {
      put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(set.matrix(r, c))));
    }
  }
  write_file(path, out);
}

GaussianStats fit_gaussian(const EmbeddingSet& set) {
  set.validate();
  GaussianStats stats;
  stats.mean = set.matrix.colwise().mean().transpose();
  const Eigen::MatrixXd centered = set.matrix.rowwise() - stats.mean.transpose();
  const Eigen::MatrixXd c = centered.transpose() * centered / static_cast<double>(set.n() - 1);
  stats.cov = 0.5 * (c + c.transpose());
  return stats;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw InvalidArgument("sqrtm_psd expects a square matrix");
  if (m.size() == 0) return m;
  const double norm = m.norm();
  if ((m - m.transpose()).norm() > 1e-10 * std::max(norm, 1e-300)) {
    throw InvalidArgument("sqrtm_psd input is not symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double radius = lambda.cwiseAbs().maxCoeff();
  if (lambda.minCoeff() < -1e-8 * radius) {
    throw NumericalError("sqrtm_psd input has a substantially negative eigenvalue");
  }
  const Eigen::VectorXd root = lambda.cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd& v = eig.eigenvectors();
  const Eigen::MatrixXd s = v * root.asDiagonal() * v.transpose();
  return 0.5 * (s + s.transpose());
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows() ||
      a.cov.rows() != a.mean.size() || b.cov.cols() != b.cov.rows()) {
    throw InvalidArgument("frechet_distance: dimension mismatch");
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd root_a = sqrtm_psd(a.cov);
  Eigen::MatrixXd inner = root_a * b.cov * root_a;
  inner = 0.5 * (inner + inner.transpose());
  const double cross = sqrtm_psd(inner).trace();
  const double trace_sum = a.cov.trace() + b.cov.trace();
  const double d2 = mean_term + trace_sum - 2.0 * cross;
  const double scale = mean_term + trace_sum;
  if (d2 < -1e-6) {
    throw NumericalError("frechet_distance is substantially negative (" + std::to_string(d2) + ")");
  }
  if (d2 <= 1e-12 * scale) return 0.0;
  return d2;
}

namespace {

EmbeddingSet resolve(const FidInput& input, const EmbeddingProvider* provider) {
  if (const auto* set = std::get_if<EmbeddingSet>(&input)) return *set;
  if (provider == nullptr) throw InvalidArgument("image input requires an embedding provider");
  return provider->embed(std::get<std::vector<Image>>(input));
}

}  // namespace

double fid(const FidInput& real, const FidInput& generated, const EmbeddingProvider* provider) {
  const EmbeddingSet a = resolve(real, provider);
  const EmbeddingSet b = resolve(generated, provider);
  if (a.provider_id != b.provider_id) {
    throw InvalidArgument("embedding provider mismatch: '" + a.provider_id + "' vs '" +
                          b.provider_id + "'");
  }
  if (a.d() != b.d()) throw InvalidArgument("embedding dimension mismatch");
  return frechet_distance(fit_gaussian(a), fit_gaussian(b));
}

}  // namespace uqih::fid
