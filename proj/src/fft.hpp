#pragma once

#include <complex>
#include <vector>

namespace uqih::detail {

using cplx = std::complex<double>;

/// Dense complex 2-D grid, row-major.
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<cplx> v;

  Grid() = default;
  Grid(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c) {}

  cplx& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  const cplx& operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

/// Unnormalised forward 2-D DFT.
Grid fft2(const Grid& in);

/// Inverse 2-D DFT including the 1/(rows*cols) factor.
Grid ifft2(const Grid& in);

/// Signed frequency index of bin k in a length-n DFT: k for k < ceil(n/2),
/// k - n otherwise.
inline int signed_freq(int k, int n) { return k < (n + 1) / 2 ? k : k - n; }

}  // namespace uqih::detail
