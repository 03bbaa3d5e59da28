#include "fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <mutex>

#include "uqih/error.hpp"

namespace uqih::detail {

namespace {

// FFTW's planner is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

Grid transform(const Grid& in, int sign) {
  if (in.rows <= 0 || in.cols <= 0) throw InvalidArgument("fft of an empty grid");
  const std::size_t n = in.v.size();
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (buf == nullptr) throw std::bad_alloc();
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_2d(in.rows, in.cols, buf, buf, sign, FFTW_ESTIMATE);
  }
  std::memcpy(buf, in.v.data(), sizeof(fftw_complex) * n);
  fftw_execute(plan);
  Grid out(in.rows, in.cols);
  std::memcpy(static_cast<void*>(out.v.data()), buf, sizeof(fftw_complex) * n);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return out;
}

}  // namespace

Grid fft2(const Grid& in) { return transform(in, FFTW_FORWARD); }

Grid ifft2(const Grid& in) {
  Grid out = transform(in, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(out.v.size());
  for (auto& z : out.v) z *= scale;
  return out;
}

}  // namespace uqih::detail
