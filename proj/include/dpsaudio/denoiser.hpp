// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpsaudio/fft.hpp"
#include "dpsaudio/schedule.hpp"
#include "dpsaudio/signal.hpp"

namespace dpsaudio {

// D(x; sigma): estimate of E[x0 | x_t = x] at noise level sigma, plus its
// vector-Jacobian product v^T dD/dx.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Signal denoise(const Signal& x, double sigma) const = 0;
  virtual Signal vjp(const Signal& x, double sigma, const Signal& v) const = 0;
  virtual std::string name() const = 0;
};

// (D(x; sigma) - x) / sigma^2
inline Signal score(const Denoiser& d, const Signal& x, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("score: sigma must be > 0");
  return scale(sub(d.denoise(x, sigma), x), 1.0 / (sigma * sigma));
}

inline Signal denoiser_vjp(const Denoiser& d, const Signal& x, double sigma, const Signal& v) {
  if (!(sigma > 0.0)) throw std::invalid_argument("denoiser_vjp: sigma must be > 0");
  detail::require_same_length(x, v, "denoiser_vjp");
  return d.vjp(x, sigma, v);
}

// Central-difference v^T dD/dx. Costs 2L denoiser calls; meant for tests.
inline Signal finite_difference_vjp(const Denoiser& d, const Signal& x, double sigma, const Signal& v) {
  detail::require_same_length(x, v, "finite_difference_vjp");
  const double h = 1e-4 * (1.0 + max_abs(x));
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    auto plus = x.vec();
    auto minus = x.vec();
    plus[j] += h;
    minus[j] -= h;
    const Signal dp = d.denoise(x.with_samples(std::move(plus)), sigma);
    const Signal dm = d.denoise(x.with_samples(std::move(minus)), sigma);
    out[j] = dot(v, sub(dp, dm)) / (2.0 * h);
  }
  return x.with_samples(std::move(out));
}

class IdentityDenoiser final : public Denoiser {
 public:
  Signal denoise(const Signal& x, double) const override { return x; }
  Signal vjp(const Signal&, double, const Signal& v) const override { return v; }
  std::string name() const override { return "identity"; }
};

// Exact posterior mean under a stationary Gaussian prior N(mean, C) where C is
// circulant with eigenvalues `cov_spectrum` (one per half-spectrum bin).
class GaussianPriorDenoiser final : public Denoiser {
 public:
  GaussianPriorDenoiser(Signal mean, std::vector<double> cov_spectrum)
      : mean_(std::move(mean)), cov_(std::move(cov_spectrum)) {
    if (cov_.size() != mean_.size() / 2 + 1) {
      throw std::invalid_argument("GaussianPriorDenoiser: need " + std::to_string(mean_.size() / 2 + 1) +
                                  " prior variances, got " + std::to_string(cov_.size()));
    }
    for (double l : cov_) {
      if (!(std::isfinite(l) && l >= 0.0)) throw std::invalid_argument("GaussianPriorDenoiser: variances must be >= 0");
    }
  }

  const Signal& mean() const { return mean_; }
  const std::vector<double>& cov_spectrum() const { return cov_; }

  // lambda_k / (lambda_k + sigma^2)
  std::vector<double> gains(double sigma) const {
    std::vector<double> g(cov_.size());
    const double s2 = sigma * sigma;
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = cov_[k] + s2 > 0.0 ? cov_[k] / (cov_[k] + s2) : 1.0;
    return g;
  }

  Signal denoise(const Signal& x, double sigma) const override {
    if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian_denoise: sigma must be >= 0");
    detail::require_same_length(x, mean_, "gaussian_denoise");
    if (sigma == 0.0) return x;
    return add(mean_, apply_bin_gains(sub(x, mean_), gains(sigma)));
  }

  Signal vjp(const Signal& x, double sigma, const Signal& v) const override {
    detail::require_same_length(x, mean_, "gaussian vjp");
    return apply_bin_gains(v, gains(sigma));
  }

  std::string name() const override { return "gaussian"; }

 private:
  Signal mean_;
  std::vector<double> cov_;
};

inline Signal gaussian_denoise(const GaussianPriorDenoiser& d, const Signal& x, double sigma) {
  return d.denoise(x, sigma);
}

// White prior: every bin has the same variance.
inline std::vector<double> flat_spectrum(std::size_t length, double variance) {
  return std::vector<double>(length / 2 + 1, variance);
}

// 1/f prior: `variance` at and below `floor_hz`, falling as floor_hz / f above.
inline std::vector<double> pink_spectrum(std::size_t length, int sample_rate, double variance, double floor_hz) {
  std::vector<double> lambda(length / 2 + 1);
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    const double f = bin_frequency(k, length, sample_rate);
    lambda[k] = variance * floor_hz / std::max(f, floor_hz);
  }
  return lambda;
}

// Band layout for the shrinkage denoiser: edges in Hz, strictly increasing.
struct BandSpec {
  std::vector<double> edges_hz;
  std::size_t sigma_bins = 32;
};

inline BandSpec linear_bands(std::size_t n_bands, int sample_rate, std::size_t sigma_bins = 32) {
  if (n_bands == 0) throw std::invalid_argument("linear_bands: need at least one band");
  BandSpec spec;
  spec.sigma_bins = sigma_bins;
  const double nyquist = 0.5 * static_cast<double>(sample_rate);
  for (std::size_t b = 0; b <= n_bands; ++b) {
    spec.edges_hz.push_back(nyquist * static_cast<double>(b) / static_cast<double>(n_bands));
  }
  return spec;
}

// Per-band Fourier gains learned per noise level, interpolated linearly in
// log(sigma) between trained levels and clamped outside them.
class ShrinkageDenoiser final : public Denoiser {
 public:
  ShrinkageDenoiser(std::vector<double> band_edges_hz, std::vector<double> sigma_bins,
                    std::vector<std::vector<double>> gains)
      : edges_(std::move(band_edges_hz)), sigmas_(std::move(sigma_bins)), gains_(std::move(gains)) {
    if (edges_.size() < 2) throw std::invalid_argument("ShrinkageDenoiser: need at least one band");
    for (std::size_t b = 0; b + 1 < edges_.size(); ++b) {
      if (!(edges_[b] < edges_[b + 1])) throw std::invalid_argument("ShrinkageDenoiser: zero-length band " + std::to_string(b));
    }
    if (sigmas_.empty()) throw std::invalid_argument("ShrinkageDenoiser: need at least one sigma bin");
    for (std::size_t s = 0; s < sigmas_.size(); ++s) {
      if (!(sigmas_[s] > 0.0) || (s > 0 && !(sigmas_[s] > sigmas_[s - 1]))) {
        throw std::invalid_argument("ShrinkageDenoiser: sigma bins must be positive and increasing");
      }
    }
    if (gains_.size() != bands()) throw std::invalid_argument("ShrinkageDenoiser: gain rows != band count");
    for (const auto& row : gains_) {
      if (row.size() != sigmas_.size()) throw std::invalid_argument("ShrinkageDenoiser: gain columns != sigma bins");
      for (double g : row) {
        if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("ShrinkageDenoiser: gains must lie in [0, 1]");
      }
    }
  }

  std::size_t bands() const { return edges_.size() - 1; }
  const std::vector<double>& band_edges() const { return edges_; }
  const std::vector<double>& sigma_bins() const { return sigmas_; }
  const std::vector<std::vector<double>>& gains() const { return gains_; }

  // Band containing frequency f, or bands() if f lies outside all edges.
  std::size_t band_of(double f) const {
    if (f < edges_.front() || f > edges_.back()) return bands();
    auto it = std::upper_bound(edges_.begin(), edges_.end(), f);
    const auto b = static_cast<std::size_t>(std::distance(edges_.begin(), it)) - 1;
    return std::min(b, bands() - 1);
  }

  double gain(std::size_t band, double sigma) const {
    const auto& row = gains_.at(band);
    if (sigma <= sigmas_.front()) return row.front();
    if (sigma >= sigmas_.back()) return row.back();
    auto it = std::upper_bound(sigmas_.begin(), sigmas_.end(), sigma);
    const auto hi = static_cast<std::size_t>(std::distance(sigmas_.begin(), it));
    const std::size_t lo = hi - 1;
    const double t = (std::log(sigma) - std::log(sigmas_[lo])) / (std::log(sigmas_[hi]) - std::log(sigmas_[lo]));
    return row[lo] + t * (row[hi] - row[lo]);
  }

  std::vector<double> bin_gains(std::size_t length, int sample_rate, double sigma) const {
    std::vector<double> per_band(bands());
    for (std::size_t b = 0; b < per_band.size(); ++b) per_band[b] = gain(b, sigma);
    std::vector<double> g(length / 2 + 1, 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const std::size_t b = band_of(bin_frequency(k, length, sample_rate));
      g[k] = b < bands() ? per_band[b] : 0.0;
    }
    return g;
  }

  Signal denoise(const Signal& x, double sigma) const override {
    if (!(sigma >= 0.0)) throw std::invalid_argument("ShrinkageDenoiser: sigma must be >= 0");
    if (sigma == 0.0) return x;
    return apply_bin_gains(x, bin_gains(x.size(), x.sample_rate(), sigma));
  }

  Signal vjp(const Signal& x, double sigma, const Signal& v) const override {
    return apply_bin_gains(v, bin_gains(x.size(), x.sample_rate(), sigma));
  }

  std::string name() const override { return "shrinkage"; }

 private:
  std::vector<double> edges_;
  std::vector<double> sigmas_;
  std::vector<std::vector<double>> gains_;
};

// Mean per-bin power |X_k|^2 / L of the dataset inside each band. Bins outside
// every band are ignored.
inline std::vector<double> band_powers(const std::vector<Signal>& dataset, const std::vector<double>& edges_hz) {
  const std::size_t n_bands = edges_hz.size() - 1;
  std::vector<double> power(n_bands, 0.0);
  std::vector<double> count(n_bands, 0.0);
  // Bin-to-band lookup via a throwaway denoiser keeps one definition of band_of.
  const ShrinkageDenoiser layout(edges_hz, {1.0}, std::vector<std::vector<double>>(n_bands, {0.0}));
  for (const Signal& x : dataset) {
    const auto bins = rfft(x.samples());
    const double inv_len = 1.0 / static_cast<double>(x.size());
    for (std::size_t k = 0; k < bins.size(); ++k) {
      const std::size_t b = layout.band_of(bin_frequency(k, x.size(), x.sample_rate()));
      if (b >= n_bands) continue;
      power[b] += std::norm(bins[k]) * inv_len;
      count[b] += 1.0;
    }
  }
  for (std::size_t b = 0; b < n_bands; ++b) power[b] = count[b] > 0.0 ? power[b] / count[b] : 0.0;
  return power;
}

// Minimizes the denoising L2 loss per (band, sigma bin). For a gain applied
// to signal-plus-white-noise the minimizer is the Wiener gain S / (S + sigma^2),
// with S the band's mean per-bin signal power.
inline ShrinkageDenoiser train_shrinkage(const std::vector<Signal>& dataset, const NoiseSchedule& schedule,
                                         const BandSpec& bands) {
  if (dataset.empty()) throw std::invalid_argument("train_shrinkage: empty dataset");
  for (const Signal& x : dataset) {
    if (x.size() != dataset.front().size() || x.sample_rate() != dataset.front().sample_rate()) {
      throw std::invalid_argument("train_shrinkage: dataset items must share length and sample rate");
    }
  }
  if (bands.edges_hz.size() < 2) throw std::invalid_argument("train_shrinkage: need at least one band");
  for (std::size_t b = 0; b + 1 < bands.edges_hz.size(); ++b) {
    if (!(bands.edges_hz[b] < bands.edges_hz[b + 1])) {
      throw std::invalid_argument("train_shrinkage: zero-length band " + std::to_string(b));
    }
  }
  if (bands.sigma_bins < 2) throw std::invalid_argument("train_shrinkage: need at least two sigma bins");

  // Log-spaced noise grid from sigma_min up to the largest churned level,
  // sqrt(2) * sigma_max.
  const double lo = std::log(schedule.sigma_min());
  const double hi = std::log(schedule.sigma_max() * std::sqrt(2.0));
  std::vector<double> sigmas(bands.sigma_bins);
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    sigmas[s] = std::exp(lo + (hi - lo) * static_cast<double>(s) / static_cast<double>(sigmas.size() - 1));
  }

  const auto power = band_powers(dataset, bands.edges_hz);
  std::vector<std::vector<double>> gains(power.size(), std::vector<double>(sigmas.size()));
  for (std::size_t b = 0; b < power.size(); ++b) {
    for (std::size_t s = 0; s < sigmas.size(); ++s) {
      gains[b][s] = power[b] / (power[b] + sigmas[s] * sigmas[s]);
    }
  }
  return ShrinkageDenoiser(bands.edges_hz, std::move(sigmas), std::move(gains));
}

// Binary layout (little-endian): "DPSD1", u64 edge count, f64 edges,
// u64 sigma count, f64 sigmas, f64 gains row-major [band][sigma].
inline void save_shrinkage(const ShrinkageDenoiser& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_shrinkage: cannot open " + path.string());
  auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto put_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write("DPSD1", 5);
  put_u64(d.band_edges().size());
  for (double e : d.band_edges()) put_f64(e);
  put_u64(d.sigma_bins().size());
  for (double s : d.sigma_bins()) put_f64(s);
  for (const auto& row : d.gains()) {
    for (double g : row) put_f64(g);
  }
  if (!out) throw IoError("save_shrinkage: write failed for " + path.string());
}

inline ShrinkageDenoiser load_shrinkage(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_shrinkage: cannot open " + path.string());
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, "DPSD1", 5) != 0) throw IoError("load_shrinkage: bad magic in " + path.string());
  auto get_u64 = [&]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("load_shrinkage: truncated file");
    return v;
  };
  auto get_f64 = [&]() {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("load_shrinkage: truncated file");
    return v;
  };
  constexpr std::uint64_t kMaxEntries = 1u << 20;
  const auto n_edges = get_u64();
  if (n_edges < 2 || n_edges > kMaxEntries) throw IoError("load_shrinkage: implausible band count");
  std::vector<double> edges(n_edges);
  for (double& e : edges) e = get_f64();
  const auto n_sigmas = get_u64();
  if (n_sigmas < 1 || n_sigmas > kMaxEntries) throw IoError("load_shrinkage: implausible sigma count");
  std::vector<double> sigmas(n_sigmas);
  for (double& s : sigmas) s = get_f64();
  std::vector<std::vector<double>> gains(n_edges - 1, std::vector<double>(n_sigmas));
  for (auto& row : gains) {
    for (double& g : row) g = get_f64();
  }
  try {
    return ShrinkageDenoiser(std::move(edges), std::move(sigmas), std::move(gains));
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("load_shrinkage: ") + e.what());
  }
}

}  // namespace dpsaudio
