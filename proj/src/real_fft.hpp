#pragma once

#include <fftw3.h>

#include <algorithm>
#include <mutex>

#include "bss/common.hpp"

namespace bss::detail {

// FFTW's planner is not thread-safe; execution on a plan's own buffers is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// RAII pair of aligned buffers + plans for one real transform length.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    real_ = fftw_alloc_real(static_cast<size_t>(n));
    freq_ = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
    fwd_ = fftw_plan_dft_r2c_1d(n, real_, freq_, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_1d(n, freq_, real_, FFTW_ESTIMATE);
  }

  ~RealFft() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(real_);
    fftw_free(freq_);
  }

  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  // in: n real samples -> out: n/2+1 complex bins.
  void forward(const double* in, cplx* out) {
    std::copy(in, in + n_, real_);
    fftw_execute(fwd_);
    for (int i = 0; i < bins(); ++i) out[i] = cplx(freq_[i][0], freq_[i][1]);
  }

  // Inverse with 1/n normalization. Imaginary parts of DC and Nyquist are
  // dropped (zero for the one-sided spectrum of a real signal).
  void inverse(const cplx* in, double* out) {
    for (int i = 0; i < bins(); ++i) {
      freq_[i][0] = in[i].real();
      freq_[i][1] = in[i].imag();
    }
    freq_[0][1] = 0.0;
    if (n_ % 2 == 0) freq_[n_ / 2][1] = 0.0;
    fftw_execute(bwd_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (int i = 0; i < n_; ++i) out[i] = real_[i] * scale;
  }

 private:
  int n_;
  double* real_;
  fftw_complex* freq_;
  fftw_plan fwd_;
  fftw_plan bwd_;
};

}  // namespace bss::detail
