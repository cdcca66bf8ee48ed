// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dpsaudio/degradation.hpp"
#include "dpsaudio/denoiser.hpp"
#include "dpsaudio/schedule.hpp"
#include "dpsaudio/signal.hpp"

namespace dpsaudio {

enum class GuidanceKind { none, rg, pigdm };

// What the `t` in rho(t) = rho' sqrt(L) / (t ||G||^p) stands for.
enum class RhoTimeConvention {
  noise_level,      // t = sigma_i
  countdown_index,  // t = T - i
};

struct GuidanceConfig {
  GuidanceKind kind = GuidanceKind::none;
  double rho_prime = 1.0;
  bool delta_rho_enabled = false;
  double delta_rho_divisor = 75.0;
  RhoTimeConvention rho_time_convention = RhoTimeConvention::noise_level;
  int grad_norm_power = 2;

  void validate() const {
    if (!(std::isfinite(rho_prime) && rho_prime > 0.0)) throw std::invalid_argument("guidance: rho_prime must be > 0");
    if (!(std::isfinite(delta_rho_divisor) && delta_rho_divisor > 0.0)) {
      throw std::invalid_argument("guidance: delta_rho_divisor must be > 0");
    }
    if (grad_norm_power != 1 && grad_norm_power != 2) throw std::invalid_argument("guidance: grad_norm_power must be 1 or 2");
  }
};

struct GuidanceResult {
  Signal direction;
  double residual_norm = 0.0;
};

// Non-finite values inside a guidance computation. The sampler fills in the
// step index before rethrowing.
class GuidanceError : public std::runtime_error {
 public:
  GuidanceError(std::string reason, std::ptrdiff_t step, double residual_norm)
      : std::runtime_error(format(reason, step, residual_norm)),
        reason_(std::move(reason)),
        step_(step),
        residual_norm_(residual_norm) {}

  const std::string& reason() const { return reason_; }
  std::ptrdiff_t step() const { return step_; }
  double residual_norm() const { return residual_norm_; }

 private:
  static std::string format(const std::string& reason, std::ptrdiff_t step, double residual) {
    std::ostringstream os;
    os << "guidance blow-up: " << reason;
    if (step >= 0) os << " at step " << step;
    os << " (residual norm " << residual << ")";
    return os.str();
  }

  std::string reason_;
  std::ptrdiff_t step_;
  double residual_norm_;
};

namespace detail {

inline void require_finite(const Signal& s, const char* what, double residual) {
  if (!s.all_finite()) throw GuidanceError(std::string("non-finite ") + what, -1, residual);
}

// Gradient of ||y - A(x0_hat)||^2 w.r.t. x_t given x0_hat = D(x_t; sigma).
inline Signal rg_gradient_at(const Denoiser& denoiser, const Measurement& meas, const Signal& x_t, double sigma,
                             const Signal& x0_hat, double residual) {
  const Signal r = scale(sub(meas.op->apply(x0_hat), meas.y), 2.0);
  const Signal s = meas.op->adjoint_at(x0_hat, r);
  Signal g = denoiser_vjp(denoiser, x_t, sigma, s);
  require_finite(g, "reconstruction-guidance gradient", residual);
  return g;
}

// (h-dagger(y) - h-dagger(h(x0_hat)))^T dx0_hat/dx_t
inline Signal pigdm_direction_at(const Denoiser& denoiser, const Measurement& meas, const Signal& x_t, double sigma,
                                 const Signal& x0_hat, double residual) {
  const Signal d = sub(meas.op->pseudo_inverse(meas.y), meas.op->pseudo_inverse(meas.op->apply(x0_hat)));
  Signal g = denoiser_vjp(denoiser, x_t, sigma, d);
  require_finite(g, "pseudo-inverse guidance direction", residual);
  return g;
}

inline double residual_norm(const Measurement& meas, const Signal& x0_hat) {
  return norm(sub(meas.y, meas.op->apply(x0_hat)));
}

}  // namespace detail

// Unscaled G = grad_{x_t} ||y - A(D(x_t; sigma))||^2.
inline Signal rg_gradient(const Denoiser& denoiser, const Measurement& meas, const Signal& x_t, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("rg_gradient: sigma must be > 0");
  const Signal x0_hat = denoiser.denoise(x_t, sigma);
  return detail::rg_gradient_at(denoiser, meas, x_t, sigma, x0_hat, detail::residual_norm(meas, x0_hat));
}

inline Signal pigdm_direction(const Denoiser& denoiser, const Measurement& meas, const Signal& x_t, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("pigdm_direction: sigma must be > 0");
  const Signal x0_hat = denoiser.denoise(x_t, sigma);
  return detail::pigdm_direction_at(denoiser, meas, x_t, sigma, x0_hat, detail::residual_norm(meas, x0_hat));
}

// Multiplier applied to -rg_scale growing linearly from 0 at i = 0 to
// T / divisor at i = T - 1.
inline double delta_rho(const GuidanceConfig& cfg, const NoiseSchedule& schedule, std::size_t i) {
  const double steps = static_cast<double>(schedule.steps());
  return (steps / cfg.delta_rho_divisor) * schedule.progress(i).value;
}

// rho(i) = rho' sqrt(L) / (tau ||G||^p), times delta-rho when enabled.
inline double rg_scale(const GuidanceConfig& cfg, const NoiseSchedule& schedule, std::size_t i, std::size_t length,
                       const Signal& grad) {
  const double gnorm = norm(grad);
  if (!(gnorm > 0.0)) return 0.0;
  double tau = cfg.rho_time_convention == RhoTimeConvention::noise_level
                   ? schedule.sigma(i)
                   : static_cast<double>(schedule.steps() - i);
  tau = std::max(tau, schedule.sigma_min());
  double s = cfg.rho_prime * std::sqrt(static_cast<double>(length)) / (tau * std::pow(gnorm, cfg.grad_norm_power));
  if (cfg.delta_rho_enabled) s *= delta_rho(cfg, schedule, i);
  return s;
}

// Guidance evaluated once at (x_t, sigma) for schedule index i.
struct GuidedEstimate {
  Signal x0_hat;       // raw denoiser output
  Signal score;        // unconditional score
  Signal guidance;     // additive likelihood term (score units)
  double residual_norm = 0.0;
};

namespace detail {

inline GuidedEstimate guided_estimate_unchecked(const Denoiser& denoiser, const Measurement* meas,
                                                const GuidanceConfig& cfg, const NoiseSchedule& schedule,
                                                std::size_t i, const Signal& x_t, double sigma) {
  GuidedEstimate out;
  out.x0_hat = denoiser.denoise(x_t, sigma);
  out.score = scale(sub(out.x0_hat, x_t), 1.0 / (sigma * sigma));
  out.guidance = Signal::zeros(x_t.size(), x_t.sample_rate());
  if (meas == nullptr) return out;
  out.residual_norm = detail::residual_norm(*meas, out.x0_hat);
  if (!std::isfinite(out.residual_norm)) throw GuidanceError("non-finite residual", -1, out.residual_norm);
  switch (cfg.kind) {
    case GuidanceKind::none:
      break;
    case GuidanceKind::rg: {
      const Signal g = detail::rg_gradient_at(denoiser, *meas, x_t, sigma, out.x0_hat, out.residual_norm);
      const double s = rg_scale(cfg, schedule, i, x_t.size(), g);
      if (!std::isfinite(s)) throw GuidanceError("non-finite guidance scale", -1, out.residual_norm);
      out.guidance = scale(g, -s);
      break;
    }
    case GuidanceKind::pigdm: {
      const Signal d = detail::pigdm_direction_at(denoiser, *meas, x_t, sigma, out.x0_hat, out.residual_norm);
      out.guidance = scale(d, 1.0 / (sigma * sigma));
      break;
    }
  }
  return out;
}

}  // namespace detail

// `meas` may be null for unconditional sampling.
inline GuidedEstimate guided_estimate(const Denoiser& denoiser, const Measurement* meas, const GuidanceConfig& cfg,
                                      const NoiseSchedule& schedule, std::size_t i, const Signal& x_t, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("conditional_score: sigma must be > 0");
  try {
    return detail::guided_estimate_unchecked(denoiser, meas, cfg, schedule, i, x_t, sigma);
  } catch (const NonFiniteError& e) {
    throw GuidanceError(e.what(), -1, std::numeric_limits<double>::quiet_NaN());
  }
}

// score(x_t, sigma) plus the configured likelihood term. `sigma` defaults to
// the schedule level sigma_i.
inline Signal conditional_score(const Denoiser& denoiser, const Measurement& meas, const GuidanceConfig& cfg,
                                const NoiseSchedule& schedule, std::size_t i, const Signal& x_t,
                                double sigma = -1.0) {
  const double s = sigma > 0.0 ? sigma : schedule.sigma(i);
  const auto est = guided_estimate(denoiser, &meas, cfg, schedule, i, x_t, s);
  return add(est.score, est.guidance);
}

}  // namespace dpsaudio
