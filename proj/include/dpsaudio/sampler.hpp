// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpsaudio/degradation.hpp"
#include "dpsaudio/denoiser.hpp"
#include "dpsaudio/guidance.hpp"
#include "dpsaudio/schedule.hpp"
#include "dpsaudio/signal.hpp"

namespace dpsaudio {

// Windowed RePaint: `u` extra cycles at every iteration i with
// phi1 * T / 3 <= i <= phi2 * T / 3.
struct RepaintConfig {
  bool enabled = false;
  std::size_t u = 0;
  double phi1 = 0.0;
  double phi2 = 0.0;

  void validate() const {
    if (!(0.0 <= phi1 && phi1 <= phi2 && phi2 <= 3.0)) {
      throw std::invalid_argument("repaint: need 0 <= phi1 <= phi2 <= 3");
    }
  }
};

// Where data consistency sits relative to the guidance term when both are on.
enum class DcOrder {
  post,  // guidance first, then the guided x0 estimate is projected
  pre,   // the raw denoiser output is projected, guidance added on top
};

struct SamplerConfig {
  GuidanceConfig guidance;
  bool dc_enabled = false;
  DcOrder dc_order = DcOrder::post;
  RepaintConfig rp;
  int order = 1;
  std::uint64_t seed = 0;

  void validate() const {
    guidance.validate();
    rp.validate();
    if (order != 1 && order != 2) throw std::invalid_argument("sampler: order must be 1 or 2");
  }
};

struct TraceRecord {
  std::size_t iter = 0;
  double sigma = 0.0;
  double residual = 0.0;
  std::size_t rp_cycle = 0;
};

struct Trace {
  std::vector<TraceRecord> records;
  Signal final_estimate;

  void write_csv(std::ostream& out) const {
    out << "iter,sigma,residual,rp_cycle\n";
    char line[128];
    for (const auto& r : records) {
      std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%zu\n", r.iter, r.sigma, r.residual, r.rp_cycle);
      out << line;
    }
  }
};

// Carries the trace recorded up to the failing step.
class RestoreError : public std::runtime_error {
 public:
  RestoreError(const std::string& what, Trace partial) : std::runtime_error(what), trace_(std::move(partial)) {}
  const Trace& trace() const { return trace_; }

 private:
  Trace trace_;
};

inline std::size_t rp_window(const RepaintConfig& rp, std::size_t steps, std::size_t i) {
  if (!rp.enabled || rp.u == 0) return 0;
  const double t = static_cast<double>(steps);
  const double lo = rp.phi1 * t / 3.0;
  const double hi = rp.phi2 * t / 3.0;
  // Absorb representation error in phi * T / 3 (2.8 * 300 / 3 is not exactly 280).
  constexpr double eps = 1e-9;
  const double idx = static_cast<double>(i);
  return (idx >= lo - eps && idx <= hi + eps) ? rp.u : 0;
}

// Total extra RP cycles over the iterations that take a reverse step (0..T-2).
inline std::size_t rp_total_cycles(const RepaintConfig& rp, std::size_t steps) {
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < steps; ++i) total += rp_window(rp, steps, i);
  return total;
}

// x_prev + sqrt(sigma_hi^2 - sigma_lo^2) * n
inline Signal rp_rediffuse(const Signal& x_prev, double sigma_hi, double sigma_lo, std::mt19937_64& rng) {
  if (!(sigma_lo >= 0.0 && sigma_hi > sigma_lo)) throw std::invalid_argument("rp_rediffuse: need sigma_hi > sigma_lo >= 0");
  const double amp = std::sqrt(sigma_hi * sigma_hi - sigma_lo * sigma_lo);
  const auto n = gaussian_noise(x_prev.size(), rng);
  std::vector<double> out(x_prev.vec());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += amp * n[k];
  return x_prev.with_samples(std::move(out));
}

struct StepOutcome {
  Signal x;
  double residual_norm = 0.0;
};

namespace detail {

// dx/dsigma at (x, sigma), with DC and guidance folded into the x0 estimate.
inline Signal step_slope(const Denoiser& denoiser, const Measurement* meas, const SamplerConfig& cfg,
                         const NoiseSchedule& schedule, std::size_t i, const Signal& x, double sigma,
                         double* residual) {
  const GuidedEstimate est = guided_estimate(denoiser, meas, cfg.guidance, schedule, i, x, sigma);
  if (residual != nullptr) *residual = est.residual_norm;
  const double s2 = sigma * sigma;
  const bool dc = cfg.dc_enabled && meas != nullptr;
  Signal x0;
  if (dc && cfg.dc_order == DcOrder::pre) {
    x0 = axpy(meas->op->dc_project(est.x0_hat, meas->y), s2, est.guidance);
  } else {
    x0 = axpy(est.x0_hat, s2, est.guidance);
    if (dc) x0 = meas->op->dc_project(x0, meas->y);
  }
  // d = -sigma * score = (x - x0) / sigma
  return scale(sub(x, x0), 1.0 / sigma);
}

}  // namespace detail

// One reverse step from sigma_i to sigma_{i+1}: churn, guided slope at the
// churned point, Euler update, optional Heun correction. `meas` may be null.
inline StepOutcome sample_step(const Signal& x, std::size_t i, const Denoiser& denoiser, const Measurement* meas,
                               const SamplerConfig& cfg, const NoiseSchedule& schedule, std::mt19937_64& rng) {
  if (i + 1 >= schedule.steps()) throw std::out_of_range("sample_step: index must be < T - 1");
  const double sigma = schedule.sigma(i);
  const double sigma_next = schedule.sigma(i + 1);
  const double gamma = schedule.churn_gamma(i);
  const double sigma_hat = (1.0 + gamma) * sigma;

  Signal x_hat = x;
  if (gamma > 0.0) {
    const double amp = std::sqrt(sigma_hat * sigma_hat - sigma * sigma) * schedule.params().s_noise;
    const auto n = gaussian_noise(x.size(), rng);
    auto& v = x_hat.mutable_samples();
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += amp * n[k];
  }

  StepOutcome out;
  try {
    const Signal d = detail::step_slope(denoiser, meas, cfg, schedule, i, x_hat, sigma_hat, &out.residual_norm);
    const double h = sigma_next - sigma_hat;
    out.x = axpy(x_hat, h, d);
    if (cfg.order == 2 && sigma_next > 0.0) {
      const Signal d2 = detail::step_slope(denoiser, meas, cfg, schedule, i + 1, out.x, sigma_next, nullptr);
      out.x = axpy(x_hat, 0.5 * h, add(d, d2));
    }
  } catch (const GuidanceError& e) {
    throw GuidanceError(e.reason(), static_cast<std::ptrdiff_t>(i), e.residual_norm());
  } catch (const NonFiniteError& e) {
    throw GuidanceError(e.what(), static_cast<std::ptrdiff_t>(i), out.residual_norm);
  }
  return out;
}

struct RestoreResult {
  Signal estimate;
  Trace trace;
};

// Runs the full reverse process from a given starting point at sigma_max.
// `meas` may be null (unconditional sampling).
inline RestoreResult run_sampler(Signal x, const Measurement* meas, const Denoiser& denoiser,
                                 const SamplerConfig& cfg, const NoiseSchedule& schedule, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t steps = schedule.steps();
  Trace trace;
  trace.records.reserve(steps + rp_total_cycles(cfg.rp, steps));
  try {
    for (std::size_t i = 0; i + 1 < steps; ++i) {
      const std::size_t cycles = rp_window(cfg.rp, steps, i);
      for (std::size_t c = 0; c <= cycles; ++c) {
        StepOutcome step = sample_step(x, i, denoiser, meas, cfg, schedule, rng);
        trace.records.push_back({i, schedule.sigma(i), step.residual_norm, c});
        x = c < cycles ? rp_rediffuse(step.x, schedule.sigma(i), schedule.sigma(i + 1), rng) : std::move(step.x);
      }
    }
    const double sigma_last = schedule.sigma(steps - 1);
    Signal estimate = denoiser.denoise(x, sigma_last);
    const double residual = meas != nullptr ? detail::residual_norm(*meas, estimate) : 0.0;
    if (cfg.dc_enabled && meas != nullptr) estimate = meas->op->dc_project(estimate, meas->y);
    trace.records.push_back({steps - 1, sigma_last, residual, 0});
    trace.final_estimate = estimate;
    return RestoreResult{std::move(estimate), std::move(trace)};
  } catch (const GuidanceError& e) {
    throw RestoreError(e.what(), std::move(trace));
  } catch (const NonFiniteError& e) {
    throw RestoreError(std::string("non-finite sampler state after step ") +
                           std::to_string(trace.records.empty() ? 0 : trace.records.back().iter) + ": " + e.what(),
                       std::move(trace));
  }
}

// x_init ~ N(0, sigma_max^2 I) drawn from cfg.seed, then the reverse process.
inline RestoreResult restore(const Measurement& meas, const Denoiser& denoiser, const SamplerConfig& cfg,
                             const NoiseSchedule& schedule) {
  std::mt19937_64 rng(cfg.seed);
  const Signal& y = meas.y;
  Signal x = scale(y.with_samples(gaussian_noise(y.size(), rng)), schedule.sigma_max());
  return run_sampler(std::move(x), &meas, denoiser, cfg, schedule, rng);
}

inline Signal sample_unconditional(const Denoiser& denoiser, const SamplerConfig& cfg, const NoiseSchedule& schedule,
                                   std::size_t length, int sample_rate) {
  std::mt19937_64 rng(cfg.seed);
  Signal x = scale(Signal(gaussian_noise(length, rng), sample_rate), schedule.sigma_max());
  return run_sampler(std::move(x), nullptr, denoiser, cfg, schedule, rng).estimate;
}

}  // namespace dpsaudio
