// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "dpsaudio/fft.hpp"
#include "dpsaudio/signal.hpp"

namespace dpsaudio {

// Upper bound reported when the distortion term underflows.
inline constexpr double kMetricCapDb = 100.0;

struct MetricReport {
  std::string file;
  double si_sdr_db = 0.0;
  double sdr_db = 0.0;
  double lsd = 0.0;
};

namespace detail {

inline double capped_ratio_db(double signal_energy, double error_energy) {
  if (error_energy <= 0.0) return kMetricCapDb;
  const double db = 10.0 * std::log10(signal_energy / error_energy);
  return std::min(db, kMetricCapDb);
}

inline void require_non_silent(const Signal& reference, const char* what) {
  if (!(energy(reference) > 0.0)) throw std::invalid_argument(std::string(what) + ": reference is silent");
}

}  // namespace detail

inline double si_sdr(const Signal& reference, const Signal& estimate) {
  detail::require_same_length(reference, estimate, "si_sdr");
  detail::require_non_silent(reference, "si_sdr");
  const double alpha = dot(estimate, reference) / energy(reference);
  const Signal target = scale(reference, alpha);
  return detail::capped_ratio_db(energy(target), energy(sub(target, estimate)));
}

inline double sdr(const Signal& reference, const Signal& estimate) {
  detail::require_same_length(reference, estimate, "sdr");
  detail::require_non_silent(reference, "sdr");
  return detail::capped_ratio_db(energy(reference), energy(sub(reference, estimate)));
}

struct LsdParams {
  std::size_t window = 1024;
  std::size_t hop = 256;
  double epsilon = 1e-10;
};

// Linear-frequency log-spectral distance on STFT power, in dB.
inline double lsd(const Signal& reference, const Signal& estimate, const LsdParams& p = {}) {
  detail::require_same_length(reference, estimate, "lsd");
  const auto ref = stft(reference, p.window, p.hop);
  const auto est = stft(estimate, p.window, p.hop);
  double total = 0.0;
  for (std::size_t f = 0; f < ref.size(); ++f) {
    double acc = 0.0;
    const auto& a = ref[f].bins;
    const auto& b = est[f].bins;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = 10.0 * std::log10((std::norm(a[k]) + p.epsilon) / (std::norm(b[k]) + p.epsilon));
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(a.size()));
  }
  return total / static_cast<double>(ref.size());
}

inline double lsd(const Signal& reference, const Signal& estimate, std::size_t window, std::size_t hop) {
  LsdParams p;
  p.window = window;
  p.hop = hop;
  return lsd(reference, estimate, p);
}

inline MetricReport evaluate(const Signal& reference, const Signal& estimate, std::string file = {}) {
  MetricReport r;
  r.file = std::move(file);
  r.si_sdr_db = si_sdr(reference, estimate);
  r.sdr_db = sdr(reference, estimate);
  r.lsd = lsd(reference, estimate);
  return r;
}

}  // namespace dpsaudio
