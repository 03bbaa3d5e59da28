#include "uqih/cwssim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fft.hpp"
#include "uqih/log.hpp"
#include "uqih/parallel.hpp"

namespace uqih::cwssim {

using detail::cplx;
using detail::Grid;
using detail::signed_freq;

void PyramidConfig::validate() const {
  if (levels < 1) throw InvalidArgument("pyramid needs at least one level");
  if (orientations < 2) throw InvalidArgument("pyramid needs at least two orientations");
  if (window < 3 || window % 2 == 0) throw InvalidArgument("window must be odd and >= 3");
  if (!(stability_k > 0.0)) throw InvalidArgument("stability constant must be positive");
}

double ComplexSubband::energy() const {
  double e = 0.0;
  for (const auto& z : coefficients) e += std::norm(z);
  return e;
}

double RealBand::energy() const {
  double e = 0.0;
  for (double v : values) e += v * v;
  return e;
}

double Pyramid::total_energy() const {
  double e = highpass.energy() + lowpass.energy();
  for (const auto& b : bands) e += b.energy();
  return e;
}

Image quantize_u8(const Image& img) {
  if (img.channels() != 1) throw InvalidArgument("quantize_u8 expects a single-channel image");
  Image out = normalize_minmax(img).value;
  for (double& v : out.mutable_data()) v = std::floor(v * 255.0 + 0.5);
  out.set_range_hint(AmplitudeRange::byte());
  return out;
}

namespace {

// Raised-cosine octave transition on [a, 2a]: 0 below, 1 above.
double hi_mask(double r, double a) {
  if (r <= a) return 0.0;
  if (r >= 2 * a) return 1.0;
  return std::cos(std::numbers::pi / 2 * (1.0 - std::log2(r / a)));
}

double lo_mask(double r, double a) {
  if (r <= a) return 1.0;
  if (r >= 2 * a) return 0.0;
  return std::cos(std::numbers::pi / 2 * std::log2(r / a));
}

struct Polar {
  double r;
  double theta;
};

// Frequency coordinates of bin (ky, kx) with the local Nyquist at radius 1.
Polar polar(int ky, int kx, int rows, int cols) {
  const double uy = 2.0 * signed_freq(ky, rows) / rows;
  const double ux = 2.0 * signed_freq(kx, cols) / cols;
  return {std::hypot(ux, uy), std::atan2(uy, ux)};
}

double angular_window(double theta, double center, int orientations) {
  double d = std::remainder(theta - center, 2 * std::numbers::pi);
  const double half = std::numbers::pi / orientations;
  if (std::abs(d) >= half) return 0.0;
  return std::cos(orientations / 2.0 * d);
}

Grid crop_spectrum(const Grid& g) {
  const int rows = (g.rows + 1) / 2;
  const int cols = (g.cols + 1) / 2;
  Grid out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const int sr = signed_freq(r, rows);
    const int src_r = (sr % g.rows + g.rows) % g.rows;
    for (int c = 0; c < cols; ++c) {
      const int sc = signed_freq(c, cols);
      const int src_c = (sc % g.cols + g.cols) % g.cols;
      out(r, c) = g(src_r, src_c);
    }
  }
  return out;
}

RealBand real_band(const Grid& spectrum, double scale) {
  const Grid spatial = detail::ifft2(spectrum);
  RealBand out{spatial.rows, spatial.cols, std::vector<double>(spatial.v.size())};
  for (std::size_t i = 0; i < spatial.v.size(); ++i) out.values[i] = spatial.v[i].real() * scale;
  return out;
}

}  // namespace

Pyramid steerable_pyramid(const Image& img, const PyramidConfig& cfg) {
  cfg.validate();
  if (img.channels() != 1) throw InvalidArgument("steerable_pyramid expects one channel");
  const long min_side = static_cast<long>(cfg.window) << cfg.levels;
  if (std::min(img.width(), img.height()) < min_side) {
    throw InvalidArgument("image " + std::to_string(img.width()) + "x" +
                          std::to_string(img.height()) + " too small for " +
                          std::to_string(cfg.levels) + " levels with window " +
                          std::to_string(cfg.window) + " (need side >= " +
                          std::to_string(min_side) + ")");
  }
  const int rows0 = img.height();
  const int cols0 = img.width();
  const double area0 = static_cast<double>(rows0) * cols0;

  Grid spatial(rows0, cols0);
  auto in = img.data();
  for (std::size_t i = 0; i < in.size(); ++i) spatial.v[i] = in[i];
  const Grid spectrum = detail::fft2(spatial);

  Pyramid pyr;
  Grid hi0(rows0, cols0);
  Grid lo(rows0, cols0);
  for (int r = 0; r < rows0; ++r) {
    for (int c = 0; c < cols0; ++c) {
      const double rad = polar(r, c, rows0, cols0).r;
      hi0(r, c) = spectrum(r, c) * hi_mask(rad, 0.5);
      lo(r, c) = spectrum(r, c) * lo_mask(rad, 0.5);
    }
  }
  pyr.highpass = real_band(hi0, 1.0);

  const double amp = std::sqrt(2.0);
  for (int level = 0; level < cfg.levels; ++level) {
    const int rows = lo.rows;
    const int cols = lo.cols;
    const double scale = std::sqrt(static_cast<double>(rows) * cols / area0);
    std::vector<Polar> coords(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) coords[static_cast<std::size_t>(r) * cols + c] = polar(r, c, rows, cols);
    }
    for (int b = 0; b < cfg.orientations; ++b) {
      const double center = std::numbers::pi * b / cfg.orientations;
      Grid band(rows, cols);
      for (std::size_t i = 0; i < band.v.size(); ++i) {
        const auto& p = coords[i];
        const double mask = hi_mask(p.r, 0.25) * amp * angular_window(p.theta, center, cfg.orientations);
        band.v[i] = mask == 0.0 ? cplx{} : lo.v[i] * mask;
      }
      const Grid coeffs = detail::ifft2(band);
      ComplexSubband sb{level, b, rows, cols, {}};
      sb.coefficients.resize(coeffs.v.size());
      for (std::size_t i = 0; i < coeffs.v.size(); ++i) sb.coefficients[i] = coeffs.v[i] * scale;
      pyr.bands.push_back(std::move(sb));
    }
    for (std::size_t i = 0; i < lo.v.size(); ++i) lo.v[i] *= lo_mask(coords[i].r, 0.25);
    lo = crop_spectrum(lo);
  }
  pyr.lowpass = real_band(lo, std::sqrt(static_cast<double>(lo.rows) * lo.cols / area0));
  return pyr;
}

double local_index(std::span<const std::complex<double>> a,
                   std::span<const std::complex<double>> b, double k) {
  if (a.size() != b.size()) throw InvalidArgument("local_index: length mismatch");
  cplx cross{};
  double ea = 0.0;
  double eb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cross += a[i] * std::conj(b[i]);
    ea += std::norm(a[i]);
    eb += std::norm(b[i]);
  }
  return (2.0 * std::abs(cross) + k) / (ea + eb + k);
}

namespace {

// Box sums of every full window x window patch (valid region only), computed
// separably: rows first, then columns.
template <typename T>
std::vector<T> box_sums(const std::vector<T>& v, int rows, int cols, int window) {
  const int out_c = cols - window + 1;
  const int out_r = rows - window + 1;
  std::vector<T> horiz(static_cast<std::size_t>(rows) * out_c);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < out_c; ++c) {
      T s{};
      for (int j = 0; j < window; ++j) s += v[static_cast<std::size_t>(r) * cols + c + j];
      horiz[static_cast<std::size_t>(r) * out_c + c] = s;
    }
  }
  std::vector<T> out(static_cast<std::size_t>(out_r) * out_c);
  for (int r = 0; r < out_r; ++r) {
    for (int c = 0; c < out_c; ++c) {
      T s{};
      for (int j = 0; j < window; ++j) s += horiz[static_cast<std::size_t>(r + j) * out_c + c];
      out[static_cast<std::size_t>(r) * out_c + c] = s;
    }
  }
  return out;
}

}  // namespace

double subband_similarity(const ComplexSubband& a, const ComplexSubband& b, int window, double k) {
  if (a.rows != b.rows || a.cols != b.cols) throw InvalidArgument("subband shape mismatch");
  if (a.rows < window || a.cols < window) throw InvalidArgument("subband smaller than window");
  const std::size_t n = a.coefficients.size();
  std::vector<cplx> cross(n);
  std::vector<double> ea(n);
  std::vector<double> eb(n);
  for (std::size_t i = 0; i < n; ++i) {
    cross[i] = a.coefficients[i] * std::conj(b.coefficients[i]);
    ea[i] = std::norm(a.coefficients[i]);
    eb[i] = std::norm(b.coefficients[i]);
  }
  const auto sc = box_sums(cross, a.rows, a.cols, window);
  const auto sa = box_sums(ea, a.rows, a.cols, window);
  const auto sb = box_sums(eb, a.rows, a.cols, window);
  double total = 0.0;
  for (std::size_t i = 0; i < sc.size(); ++i) {
    total += (2.0 * std::abs(sc[i]) + k) / (sa[i] + sb[i] + k);
  }
  return total / static_cast<double>(sc.size());
}

double cwssim(const Image& a, const Image& b, const PyramidConfig& cfg) {
  if (a.empty() || b.empty()) throw InvalidArgument("cwssim: empty image");
  if (!a.same_shape(b)) throw InvalidArgument("cwssim: image dimensions differ");
  const Pyramid pa = steerable_pyramid(quantize_u8(a), cfg);
  const Pyramid pb = steerable_pyramid(quantize_u8(b), cfg);
  double total = 0.0;
  for (std::size_t i = 0; i < pa.bands.size(); ++i) {
    total += subband_similarity(pa.bands[i], pb.bands[i], cfg.window, cfg.stability_k);
  }
  return total / static_cast<double>(pa.bands.size());
}

BatchResult cwssim_batch(std::span<const std::pair<Image, Image>> pairs, const PyramidConfig& cfg) {
  if (pairs.empty()) throw InvalidArgument("cwssim_batch: empty pair list");
  cfg.validate();
  BatchResult out;
  out.scores.resize(pairs.size());
  out.errors.resize(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    try {
      out.scores[i] = cwssim(pairs[i].first, pairs[i].second, cfg);
    } catch (const Error& e) {
      out.errors[i] = e.what();
    }
  });
  double sum = 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (out.scores[i]) {
      sum += *out.scores[i];
      ++ok;
    } else {
      ++out.failed;
      log::warn("cwssim pair " + std::to_string(i) + " excluded: " + out.errors[i]);
    }
  }
  if (ok == 0) throw InvalidArgument("cwssim_batch: every pair failed");
  out.mean = sum / static_cast<double>(ok);
  return out;
}

}  // namespace uqih::cwssim
