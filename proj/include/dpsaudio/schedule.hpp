// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpsaudio {

// Position along the reverse process: 0 at the noisiest iteration, 1 at the last.
struct Progress {
  double value = 0.0;
};

struct ScheduleParams {
  std::size_t steps = 300;
  double nu = 13.0;
  double sigma_min = 1e-4;
  double sigma_max = 1.0;
  double s_churn = 5.0;
  double s_noise = 1.0;
  double s_tmin = 0.0;
  double s_tmax = std::numeric_limits<double>::infinity();
};

// Discrete noise ladder sigma_0 = sigma_max > ... > sigma_{T-1} = sigma_min.
// Iteration i runs from noisiest (0) to cleanest (T - 1).
class NoiseSchedule {
 public:
  explicit NoiseSchedule(const ScheduleParams& p) : params_(p) {
    if (p.steps < 2) throw std::invalid_argument("NoiseSchedule: steps must be >= 2");
    if (!(std::isfinite(p.nu) && p.nu > 0.0)) throw std::invalid_argument("NoiseSchedule: nu must be > 0");
    if (!(std::isfinite(p.sigma_min) && std::isfinite(p.sigma_max) && p.sigma_min > 0.0 &&
          p.sigma_min < p.sigma_max)) {
      throw std::invalid_argument("NoiseSchedule: need finite 0 < sigma_min < sigma_max");
    }
    if (!(std::isfinite(p.s_churn) && p.s_churn >= 0.0)) {
      throw std::invalid_argument("NoiseSchedule: s_churn must be finite and >= 0");
    }
    if (!(p.s_noise >= 0.0) || !(p.s_tmin <= p.s_tmax)) {
      throw std::invalid_argument("NoiseSchedule: invalid churn noise parameters");
    }

    const double hi = std::pow(p.sigma_max, 1.0 / p.nu);
    const double lo = std::pow(p.sigma_min, 1.0 / p.nu);
    const double last = static_cast<double>(p.steps - 1);
    sigmas_.resize(p.steps);
    for (std::size_t i = 0; i < p.steps; ++i) {
      sigmas_[i] = std::pow(hi + (static_cast<double>(i) / last) * (lo - hi), p.nu);
    }
    // Pin endpoints; pow(pow(s, 1/nu), nu) can be off by an ulp or two.
    sigmas_.front() = p.sigma_max;
    sigmas_.back() = p.sigma_min;
    for (std::size_t i = 0; i + 1 < sigmas_.size(); ++i) {
      if (!(sigmas_[i] > sigmas_[i + 1])) {
        throw std::invalid_argument("NoiseSchedule: ladder not strictly decreasing at i=" + std::to_string(i) +
                                    " (too many steps for the given bounds)");
      }
    }
  }

  std::size_t steps() const { return sigmas_.size(); }
  double sigma(std::size_t i) const { return sigmas_.at(i); }
  const std::vector<double>& sigmas() const { return sigmas_; }
  const ScheduleParams& params() const { return params_; }
  double sigma_min() const { return params_.sigma_min; }
  double sigma_max() const { return params_.sigma_max; }

  // Churn factor: min(S_churn / T, sqrt(2) - 1) inside [s_tmin, s_tmax], else 0.
  double churn_gamma(std::size_t i) const {
    const double s = sigma(i);
    if (s < params_.s_tmin || s > params_.s_tmax) return 0.0;
    return std::min(params_.s_churn / static_cast<double>(steps()), std::sqrt(2.0) - 1.0);
  }

  double churned_sigma(std::size_t i) const { return (1.0 + churn_gamma(i)) * sigma(i); }

  Progress progress(std::size_t i) const {
    if (i >= steps()) throw std::out_of_range("NoiseSchedule::progress: index out of range");
    return Progress{static_cast<double>(i) / static_cast<double>(steps() - 1)};
  }

 private:
  ScheduleParams params_;
  std::vector<double> sigmas_;
};

inline NoiseSchedule build_schedule(std::size_t steps, double nu, double sigma_min, double sigma_max,
                                    double s_churn) {
  ScheduleParams p;
  p.steps = steps;
  p.nu = nu;
  p.sigma_min = sigma_min;
  p.sigma_max = sigma_max;
  p.s_churn = s_churn;
  return NoiseSchedule(p);
}

}  // namespace dpsaudio
