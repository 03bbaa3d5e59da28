#pragma once

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uqih/image.hpp"

namespace uqih::cwssim {

struct PyramidConfig {
  int levels = 4;
  int orientations = 6;
  int window = 7;
  double stability_k = 0.01;

  void validate() const;
};

struct ComplexSubband {
  int level = 0;
  int orientation = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::complex<double>> coefficients;  // row-major

  const std::complex<double>& at(int r, int c) const {
    return coefficients[static_cast<std::size_t>(r) * cols + c];
  }
  double energy() const;
};

struct RealBand {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  double energy() const;
};

/// Complex oriented subbands plus the high- and low-pass residuals.
///
/// Filtering happens in the frequency domain with periodic boundaries. The
/// radial split uses raised-cosine octave transitions (hi^2 + lo^2 = 1); the
/// angular windows are cos(K/2 * dtheta) on |dtheta| < pi/K around pi*b/K,
/// one-sided, so each subband is analytic. Coefficients are scaled so that
/// for real input the subband and residual energies sum to the input energy.
struct Pyramid {
  std::vector<ComplexSubband> bands;  // level-major, then orientation
  RealBand highpass;
  RealBand lowpass;

  double total_energy() const;
};

/// normalize_minmax, then round-half-up of p * 255.
Image quantize_u8(const Image& img);

/// Image must be single-channel with min(width, height) >= 2^levels * window.
Pyramid steerable_pyramid(const Image& img, const PyramidConfig& cfg = {});

/// (2 |sum a_i conj(b_i)| + k) / (sum |a_i|^2 + sum |b_i|^2 + k).
double local_index(std::span<const std::complex<double>> a,
                   std::span<const std::complex<double>> b, double k);

/// Mean local index over every full window x window patch of two subbands.
double subband_similarity(const ComplexSubband& a, const ComplexSubband& b, int window, double k);

/// Both images are quantised with quantize_u8 first; the score is the mean
/// over all subbands of the window-averaged local index.
double cwssim(const Image& a, const Image& b, const PyramidConfig& cfg = {});

struct BatchResult {
  std::vector<std::optional<double>> scores;  // nullopt where the pair failed
  std::vector<std::string> errors;            // empty string where the pair succeeded
  double mean = 0.0;
  std::size_t failed = 0;
};

/// Scores every pair; failing pairs are recorded and excluded from the mean.
/// Throws if the list is empty or every pair fails.
BatchResult cwssim_batch(std::span<const std::pair<Image, Image>> pairs,
                         const PyramidConfig& cfg = {});

}  // namespace uqih::cwssim
