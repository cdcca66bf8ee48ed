// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpsaudio/signal.hpp"

namespace dpsaudio {

namespace detail {

// FFTW plans keyed by transform length. Planning is not thread-safe in FFTW,
// so it happens under a lock; execution uses the new-array interface on
// fftw_malloc'd buffers, which is safe to call concurrently.
class FftPlanCache {
 public:
  struct Plans {
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
  };

  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  Plans get(std::size_t n) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    const int len = static_cast<int>(n);
    double* real = fftw_alloc_real(n);
    fftw_complex* cplx = fftw_alloc_complex(n / 2 + 1);
    Plans p;
    p.forward = fftw_plan_dft_r2c_1d(len, real, cplx, FFTW_ESTIMATE);
    p.inverse = fftw_plan_dft_c2r_1d(len, cplx, real, FFTW_ESTIMATE);
    fftw_free(real);
    fftw_free(cplx);
    if (p.forward == nullptr || p.inverse == nullptr) {
      throw std::runtime_error("fft: FFTW planning failed for length " + std::to_string(n));
    }
    plans_.emplace(n, p);
    return p;
  }

  FftPlanCache(const FftPlanCache&) = delete;
  FftPlanCache& operator=(const FftPlanCache&) = delete;

 private:
  FftPlanCache() = default;
  ~FftPlanCache() {
    for (auto& [n, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.inverse);
    }
  }

  std::mutex mutex_;
  std::map<std::size_t, Plans> plans_;
};

struct FftwRealDeleter {
  void operator()(double* p) const { fftw_free(p); }
};
struct FftwComplexDeleter {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};

}  // namespace detail

// Unnormalized forward transform of a real sequence; returns bins 0..n/2.
inline std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("rfft: length must be > 0");
  const auto plans = detail::FftPlanCache::instance().get(n);
  std::unique_ptr<double, detail::FftwRealDeleter> in(fftw_alloc_real(n));
  std::unique_ptr<fftw_complex, detail::FftwComplexDeleter> out(fftw_alloc_complex(n / 2 + 1));
  std::copy(x.begin(), x.end(), in.get());
  fftw_execute_dft_r2c(plans.forward, in.get(), out.get());
  std::vector<std::complex<double>> bins(n / 2 + 1);
  for (std::size_t k = 0; k < bins.size(); ++k) bins[k] = {out.get()[k][0], out.get()[k][1]};
  return bins;
}

// Inverse of `rfft` including the 1/n normalization.
inline std::vector<double> irfft(std::span<const std::complex<double>> bins, std::size_t n) {
  if (n == 0) throw std::invalid_argument("irfft: length must be > 0");
  if (bins.size() != n / 2 + 1) {
    throw std::invalid_argument("irfft: spectrum has " + std::to_string(bins.size()) + " bins, length " +
                                std::to_string(n) + " needs " + std::to_string(n / 2 + 1));
  }
  const auto plans = detail::FftPlanCache::instance().get(n);
  std::unique_ptr<fftw_complex, detail::FftwComplexDeleter> in(fftw_alloc_complex(n / 2 + 1));
  std::unique_ptr<double, detail::FftwRealDeleter> out(fftw_alloc_real(n));
  for (std::size_t k = 0; k < bins.size(); ++k) {
    in.get()[k][0] = bins[k].real();
    in.get()[k][1] = bins[k].imag();
  }
  fftw_execute_dft_c2r(plans.inverse, in.get(), out.get());
  std::vector<double> x(out.get(), out.get() + n);
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : x) v *= inv;
  return x;
}

inline Spectrum rfft(const Signal& signal) {
  return Spectrum{rfft(signal.samples()),
                  static_cast<double>(signal.sample_rate()) / static_cast<double>(signal.size())};
}

// `sample_rate` is recovered from the spectrum's bin spacing.
inline Signal irfft(const Spectrum& spec, std::size_t length) {
  const int rate = static_cast<int>(std::lround(spec.bin_hz * static_cast<double>(length)));
  return Signal(irfft(std::span<const std::complex<double>>(spec.bins), length), rate);
}

// Center frequency of half-spectrum bin k for a length-n transform.
inline double bin_frequency(std::size_t k, std::size_t n, int sample_rate) {
  return static_cast<double>(k) * static_cast<double>(sample_rate) / static_cast<double>(n);
}

// Multiplies each half-spectrum bin by a real gain. This is the workhorse of
// every diagonal-in-Fourier operator in the library.
inline std::vector<double> apply_bin_gains(std::span<const double> x, std::span<const double> gains) {
  auto bins = rfft(x);
  if (gains.size() != bins.size()) throw std::invalid_argument("apply_bin_gains: gain count mismatch");
  for (std::size_t k = 0; k < bins.size(); ++k) bins[k] *= gains[k];
  return irfft(bins, x.size());
}

inline Signal apply_bin_gains(const Signal& x, std::span<const double> gains) {
  return x.with_samples(apply_bin_gains(x.samples(), gains));
}

// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

// Hann-windowed short-time transform. The tail is zero-padded so the last
// frame covers the final sample: frames = ceil((L - window) / hop) + 1.
inline std::vector<Spectrum> stft(const Signal& signal, std::size_t window, std::size_t hop) {
  if (hop == 0 || window < hop) throw std::invalid_argument("stft: need window >= hop >= 1");
  const std::size_t length = signal.size();
  if (window > length) {
    throw std::invalid_argument("stft: window " + std::to_string(window) + " larger than signal length " +
                                std::to_string(length));
  }
  const std::size_t frames = (length - window + hop - 1) / hop + 1;
  const auto w = hann_window(window);
  const double bin_hz = static_cast<double>(signal.sample_rate()) / static_cast<double>(window);
  std::vector<Spectrum> out;
  out.reserve(frames);
  std::vector<double> frame(window);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * hop;
    for (std::size_t i = 0; i < window; ++i) {
      const std::size_t idx = start + i;
      frame[i] = idx < length ? signal[idx] * w[i] : 0.0;
    }
    out.push_back(Spectrum{rfft(frame), bin_hz});
  }
  return out;
}

}  // namespace dpsaudio
