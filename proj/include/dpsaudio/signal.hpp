// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dpsaudio {

// Raised by I/O routines (WAV, config, denoiser files).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation produced NaN or Inf where a Signal was expected.
class NonFiniteError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mono waveform, float64 samples, nominal range [-1, 1].
class Signal {
 public:
  Signal() = default;

  Signal(std::vector<double> samples, int sample_rate)
      : samples_(std::move(samples)), sample_rate_(sample_rate) {
    if (samples_.empty()) throw std::invalid_argument("Signal: length must be > 0");
    if (sample_rate_ <= 0) throw std::invalid_argument("Signal: sample_rate must be > 0");
    for (double v : samples_) {
      if (!std::isfinite(v)) throw NonFiniteError("Signal: non-finite sample");
    }
  }

  static Signal zeros(std::size_t length, int sample_rate) {
    return Signal(std::vector<double>(length, 0.0), sample_rate);
  }

  std::size_t size() const { return samples_.size(); }
  int sample_rate() const { return sample_rate_; }
  bool empty() const { return samples_.empty(); }

  std::span<const double> samples() const { return samples_; }
  const std::vector<double>& vec() const { return samples_; }

  double operator[](std::size_t i) const { return samples_[i]; }

  // Mutable access skips the finiteness check; callers that write through
  // this must call `all_finite()` if they can produce NaN/Inf.
  std::vector<double>& mutable_samples() { return samples_; }

  bool all_finite() const {
    for (double v : samples_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  Signal with_samples(std::vector<double> samples) const {
    return Signal(std::move(samples), sample_rate_);
  }

 private:
  std::vector<double> samples_;
  int sample_rate_ = 1;
};

// Non-redundant half spectrum of a real signal: bins 0..L/2.
struct Spectrum {
  std::vector<std::complex<double>> bins;
  double bin_hz = 0.0;
};

namespace detail {

inline void require_same_length(const Signal& a, const Signal& b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace detail

inline double dot(const Signal& a, const Signal& b) {
  detail::require_same_length(a, b, "dot");
  return std::inner_product(a.vec().begin(), a.vec().end(), b.vec().begin(), 0.0);
}

inline double energy(const Signal& a) { return dot(a, a); }

inline double norm(const Signal& a) { return std::sqrt(energy(a)); }

inline double max_abs(const Signal& a) {
  double m = 0.0;
  for (double v : a.vec()) m = std::max(m, std::abs(v));
  return m;
}

// Elementwise helpers. All return fresh signals carrying `a`'s sample rate.
inline Signal add(const Signal& a, const Signal& b) {
  detail::require_same_length(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return a.with_samples(std::move(out));
}

inline Signal sub(const Signal& a, const Signal& b) {
  detail::require_same_length(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return a.with_samples(std::move(out));
}

inline Signal scale(const Signal& a, double k) {
  std::vector<double> out(a.vec());
  for (double& v : out) v *= k;
  return a.with_samples(std::move(out));
}

// a + k * b
inline Signal axpy(const Signal& a, double k, const Signal& b) {
  detail::require_same_length(a, b, "axpy");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + k * b[i];
  return a.with_samples(std::move(out));
}

inline double relative_l2(const Signal& estimate, const Signal& reference) {
  const double ref = norm(reference);
  const double err = norm(sub(estimate, reference));
  return ref > 0.0 ? err / ref : err;
}

}  // namespace dpsaudio
