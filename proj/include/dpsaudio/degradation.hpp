// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpsaudio/fft.hpp"
#include "dpsaudio/metrics.hpp"
#include "dpsaudio/signal.hpp"

namespace dpsaudio {

// Forward operator A together with the pieces the guidance terms need.
class DegradationOp {
 public:
  virtual ~DegradationOp() = default;

  virtual Signal apply(const Signal& x) const = 0;

  // h-dagger. Both shipped operators use h-dagger = A, which satisfies
  // A(h-dagger(A(x))) = A(x) because each A is idempotent.
  virtual Signal pseudo_inverse(const Signal& y) const { return apply(y); }

  // v^T dA/dx at x (a subgradient where A is not differentiable).
  virtual Signal adjoint_at(const Signal& x, const Signal& v) const = 0;

  // Replace the parts of x_hat that the measurement determines by y.
  virtual Signal dc_project(const Signal& x_hat, const Signal& y) const = 0;

  virtual std::string name() const = 0;
};

class HardClip final : public DegradationOp {
 public:
  explicit HardClip(double c) : c_(c) {
    if (!(std::isfinite(c) && c > 0.0)) throw std::invalid_argument("HardClip: threshold must be > 0");
  }

  double threshold() const { return c_; }

  // (|x + c| - |x - c|) / 2, evaluated as the clamp it equals so that the
  // output is bit-exactly inside [-c, c] and A(A(x)) == A(x).
  Signal apply(const Signal& x) const override {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(x[i], -c_), c_);
    return x.with_samples(std::move(out));
  }

  // Subgradient of the clamp: 1 strictly inside (-c, c), 0 on or beyond the
  // threshold.
  Signal adjoint_at(const Signal& x, const Signal& v) const override {
    detail::require_same_length(x, v, "HardClip::adjoint_at");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(x[i]) < c_ ? v[i] : 0.0;
    return x.with_samples(std::move(out));
  }

  // Reliable samples (|y| < c) come from the measurement, clipped ones from x_hat.
  Signal dc_project(const Signal& x_hat, const Signal& y) const override {
    detail::require_same_length(x_hat, y, "HardClip::dc_project");
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(y[i]) < c_ ? y[i] : x_hat[i];
    return y.with_samples(std::move(out));
  }

  std::string name() const override { return "declip"; }

 private:
  double c_;
};

// Ideal FFT-mask low-pass: bins whose center frequency is <= fc pass
// unchanged, all others are zeroed. Linear, self-adjoint, idempotent.
class BrickwallLPF final : public DegradationOp {
 public:
  explicit BrickwallLPF(double fc_hz) : fc_(fc_hz) {
    if (!(std::isfinite(fc_hz) && fc_hz > 0.0)) throw std::invalid_argument("BrickwallLPF: cutoff must be > 0");
  }

  double cutoff() const { return fc_; }

  std::vector<double> mask(std::size_t length, int sample_rate) const {
    if (!(fc_ < 0.5 * sample_rate)) {
      throw std::invalid_argument("BrickwallLPF: cutoff " + std::to_string(fc_) + " Hz not below Nyquist " +
                                  std::to_string(0.5 * sample_rate) + " Hz");
    }
    std::vector<double> m(length / 2 + 1);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = bin_frequency(k, length, sample_rate) <= fc_ ? 1.0 : 0.0;
    return m;
  }

  Signal apply(const Signal& x) const override { return apply_bin_gains(x, mask(x.size(), x.sample_rate())); }

  Signal adjoint_at(const Signal& x, const Signal& v) const override {
    detail::require_same_length(x, v, "BrickwallLPF::adjoint_at");
    return apply(v);
  }

  // Measurement below fc, prediction above: y + (x_hat - LPF(x_hat)).
  Signal dc_project(const Signal& x_hat, const Signal& y) const override {
    detail::require_same_length(x_hat, y, "BrickwallLPF::dc_project");
    return add(y, sub(x_hat, apply(x_hat)));
  }

  std::string name() const override { return "bwe"; }

 private:
  double fc_;
};

struct Measurement {
  Signal y;
  std::shared_ptr<const DegradationOp> op;
  double sigma_y = 0.0;
};

inline Signal clip_apply(const HardClip& op, const Signal& x) { return op.apply(x); }
inline Signal lpf_apply(const BrickwallLPF& op, const Signal& x) { return op.apply(x); }
inline Signal pseudo_inverse(const DegradationOp& op, const Signal& y) { return op.pseudo_inverse(y); }
inline Signal adjoint_at(const DegradationOp& op, const Signal& x, const Signal& v) { return op.adjoint_at(x, v); }
inline Signal dc_project(const DegradationOp& op, const Signal& x_hat, const Signal& y) {
  return op.dc_project(x_hat, y);
}

// Standard normal draws, one per sample.
inline std::vector<double> gaussian_noise(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) v = normal(rng);
  return out;
}

// y = A(x) + sigma_y * n with n drawn from a generator seeded by `seed`.
inline Measurement degrade(std::shared_ptr<const DegradationOp> op, const Signal& x, double sigma_y,
                           std::uint64_t seed) {
  if (!(std::isfinite(sigma_y) && sigma_y >= 0.0)) throw std::invalid_argument("degrade: sigma_y must be >= 0");
  Signal y = op->apply(x);
  if (sigma_y > 0.0) {
    std::mt19937_64 rng(seed);
    const auto n = gaussian_noise(y.size(), rng);
    auto& s = y.mutable_samples();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += sigma_y * n[i];
  }
  return Measurement{std::move(y), std::move(op), sigma_y};
}

struct ClipCalibration {
  HardClip op;
  Signal clipped;
  double achieved_sdr_db;
};

// Bisects the clipping threshold until SDR(x, clip(x)) is within `tolerance_db`
// of the target. SDR rises monotonically from 0 dB (c -> 0) to the cap
// (c = max|x|), so targets outside (0, cap) are unreachable.
inline ClipCalibration clip_for_sdr(const Signal& x, double target_sdr_db, double tolerance_db = 0.01) {
  const double peak = max_abs(x);
  if (!(peak > 0.0)) throw std::invalid_argument("clip_for_sdr: input is silent");
  if (!(std::isfinite(target_sdr_db) && target_sdr_db > 0.0 && target_sdr_db < kMetricCapDb)) {
    throw std::invalid_argument("clip_for_sdr: target " + std::to_string(target_sdr_db) +
                                " dB unachievable (reachable range is (0, " + std::to_string(kMetricCapDb) + ") dB)");
  }
  double lo = 0.0;
  double hi = peak;
  for (int step = 0; step < 200; ++step) {
    const double c = 0.5 * (lo + hi);
    if (!(c > 0.0)) break;
    HardClip op(c);
    Signal clipped = op.apply(x);
    const double achieved = sdr(x, clipped);
    if (std::abs(achieved - target_sdr_db) <= tolerance_db) return ClipCalibration{op, std::move(clipped), achieved};
    if (achieved < target_sdr_db) {
      lo = c;
    } else {
      hi = c;
    }
  }
  throw std::runtime_error("clip_for_sdr: target " + std::to_string(target_sdr_db) +
                           " dB not reached after 200 bisection steps");
}

}  // namespace dpsaudio
