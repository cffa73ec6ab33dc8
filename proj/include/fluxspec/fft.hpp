#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "error.hpp"

namespace fluxspec::fft {

namespace detail {

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

struct PlanDestroy {
  void operator()(fftw_plan p) const noexcept {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(p);
  }
};

using PlanHandle = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDestroy>;

template <class T>
using Buffer = std::unique_ptr<T[], FftwFree>;

template <class T>
Buffer<T> allocate(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (!p) throw ResourceError("fftw_malloc failed");
  return Buffer<T>(p);
}

}  // namespace detail

// Real <-> half-complex transforms of fixed length. FFTW_ESTIMATE keeps the
// plan, and therefore the output bits, independent of machine timing.
// Execution is reentrant: each call uses its own scratch buffers.
class RealFft {
public:
  explicit RealFft(std::size_t n) : n_(n) {
    if (n < 2) throw DomainError("FFT length must be at least 2");
    auto real = detail::allocate<double>(n);
    auto spec = detail::allocate<fftw_complex>(n / 2 + 1);
    std::lock_guard lock(detail::planner_mutex());
    forward_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), real.get(), spec.get(), FFTW_ESTIMATE));
    inverse_.reset(fftw_plan_dft_c2r_1d(static_cast<int>(n), spec.get(), real.get(), FFTW_ESTIMATE));
    if (!forward_ || !inverse_) throw NumericalError("FFTW planning failed");
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  // X_k = sum_n x_n e^{-2 pi i k n / N}, k = 0..N/2.
  std::vector<std::complex<double>> forward(std::span<const double> x) const {
    if (x.size() != n_) throw DomainError("FFT input length mismatch");
    auto real = detail::allocate<double>(n_);
    auto spec = detail::allocate<fftw_complex>(bins());
    std::copy(x.begin(), x.end(), real.get());
    fftw_execute_dft_r2c(forward_.get(), real.get(), spec.get());
    std::vector<std::complex<double>> out(bins());
    for (std::size_t k = 0; k < bins(); ++k) out[k] = {spec[k][0], spec[k][1]};
    return out;
  }

  // x_n = sum_k Y_k e^{+2 pi i k n / N} over the full Hermitian spectrum
  // (unnormalised, FFTW convention).
  std::vector<double> inverse(std::span<const std::complex<double>> y) const {
    if (y.size() != bins()) throw DomainError("FFT spectrum length mismatch");
    auto real = detail::allocate<double>(n_);
    auto spec = detail::allocate<fftw_complex>(bins());
    for (std::size_t k = 0; k < bins(); ++k) {
      spec[k][0] = y[k].real();
      spec[k][1] = y[k].imag();
    }
    fftw_execute_dft_c2r(inverse_.get(), spec.get(), real.get());
    return std::vector<double>(real.get(), real.get() + n_);
  }

private:
  std::size_t n_;
  detail::PlanHandle forward_;
  detail::PlanHandle inverse_;
};

}  // namespace fluxspec::fft
