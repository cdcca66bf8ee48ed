// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpsaudio/signal.hpp"

namespace dpsaudio {

// Parameters for sung-vowel-like harmonic test signals.
struct SyntheticVoiceSpec {
  std::size_t n_items = 20;
  double duration_s = 2.97;
  double f0_min_hz = 110.0;
  double f0_max_hz = 330.0;
  std::size_t n_harmonics = 30;
  double max_glide = 0.15;          // |f0_end / f0_start - 1| upper bound
  double vibrato_rate_min_hz = 4.5;
  double vibrato_rate_max_hz = 6.5;
  double vibrato_depth = 0.02;      // fractional f0 deviation
  double decay_min = 0.8;           // harmonic k amplitude ~ k^-decay
  double decay_max = 1.6;
  double tremolo_depth = 0.25;
  double attack_s = 0.04;
  double release_s = 0.08;
  double breath_db = -30.0;         // aspiration noise level relative to the harmonic RMS
  int sample_rate = 22050;

  void validate() const {
    if (!(f0_min_hz > 0.0 && f0_min_hz <= f0_max_hz)) throw std::invalid_argument("synth: need 0 < f0_min <= f0_max");
    if (n_harmonics == 0) throw std::invalid_argument("synth: need at least one harmonic");
    if (!(duration_s > 0.0) || sample_rate <= 0) throw std::invalid_argument("synth: bad duration or sample rate");
    if (!(vibrato_depth >= 0.0 && vibrato_depth < 1.0) || !(max_glide >= 0.0)) {
      throw std::invalid_argument("synth: bad vibrato depth or glide");
    }
    const double top = f0_max_hz * (1.0 + vibrato_depth) * static_cast<double>(n_harmonics);
    if (!(top < 0.5 * sample_rate)) {
      throw std::invalid_argument("synth: highest harmonic " + std::to_string(top) + " Hz reaches Nyquist " +
                                  std::to_string(0.5 * sample_rate) + " Hz");
    }
  }
};

struct SyntheticItem {
  std::string name;
  Signal signal;
  double f0_start_hz = 0.0;
  double f0_end_hz = 0.0;
  std::vector<double> harmonic_amplitudes;
};

// Deterministic corpus of harmonic tones with f0 glides, vibrato, per-harmonic
// decay and a tremolo envelope, each peak-normalized to 0.9.
inline std::vector<SyntheticItem> synth_corpus(const SyntheticVoiceSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const auto length = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
  const double dt = 1.0 / static_cast<double>(spec.sample_rate);
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<SyntheticItem> items;
  items.reserve(spec.n_items);
  for (std::size_t n = 0; n < spec.n_items; ++n) {
    SyntheticItem item;
    item.name = "synth_" + std::to_string(n);
    item.f0_start_hz = uniform(spec.f0_min_hz, spec.f0_max_hz);
    const double glide = uniform(-spec.max_glide, spec.max_glide);
    item.f0_end_hz = std::clamp(item.f0_start_hz * (1.0 + glide), spec.f0_min_hz, spec.f0_max_hz);
    const double vib_rate = uniform(spec.vibrato_rate_min_hz, spec.vibrato_rate_max_hz);
    const double vib_phase = uniform(0.0, two_pi);
    const double decay = uniform(spec.decay_min, spec.decay_max);
    const double trem_rate = uniform(0.5, 2.0);
    const double trem_phase = uniform(0.0, two_pi);

    item.harmonic_amplitudes.resize(spec.n_harmonics);
    std::vector<double> phase(spec.n_harmonics);
    for (std::size_t k = 0; k < spec.n_harmonics; ++k) {
      const double jitter = k == 0 ? 1.0 : uniform(0.6, 1.0);
      item.harmonic_amplitudes[k] = jitter * std::pow(static_cast<double>(k + 1), -decay);
      phase[k] = uniform(0.0, two_pi);
    }

    std::vector<double> samples(length);
    std::vector<double> envelope(length);
    double f0_phase = 0.0;
    for (std::size_t i = 0; i < length; ++i) {
      const double t = static_cast<double>(i) * dt;
      const double frac = static_cast<double>(i) / static_cast<double>(length);
      const double f0 = (item.f0_start_hz + (item.f0_end_hz - item.f0_start_hz) * frac) *
                        (1.0 + spec.vibrato_depth * std::sin(two_pi * vib_rate * t + vib_phase));
      double v = 0.0;
      for (std::size_t k = 0; k < spec.n_harmonics; ++k) {
        v += item.harmonic_amplitudes[k] * std::sin(static_cast<double>(k + 1) * f0_phase + phase[k]);
      }
      const double attack = spec.attack_s > 0.0 ? std::min(1.0, t / spec.attack_s) : 1.0;
      const double remaining = static_cast<double>(length - i) * dt;
      const double release = spec.release_s > 0.0 ? std::min(1.0, remaining / spec.release_s) : 1.0;
      const double tremolo = 1.0 - spec.tremolo_depth * 0.5 * (1.0 + std::sin(two_pi * trem_rate * t + trem_phase));
      envelope[i] = attack * release * tremolo;
      samples[i] = v * envelope[i];
      f0_phase += two_pi * f0 * dt;
    }

    // Breath: white noise riding the same envelope, gently low-passed.
    double power = 0.0;
    for (double v : samples) power += v * v;
    const double breath_rms = std::sqrt(power / static_cast<double>(length)) * std::pow(10.0, spec.breath_db / 20.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    double state = 0.0;
    constexpr double kPole = 0.5;
    const double gain = breath_rms * std::sqrt((1.0 + kPole) / (1.0 - kPole));
    for (std::size_t i = 0; i < length; ++i) {
      state = kPole * state + (1.0 - kPole) * normal(rng);
      samples[i] += gain * state * envelope[i];
    }

    double peak = 0.0;
    for (double v : samples) peak = std::max(peak, std::abs(v));
    if (peak > 0.0) {
      for (double& v : samples) v *= 0.9 / peak;
    }
    item.signal = Signal(std::move(samples), spec.sample_rate);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace dpsaudio
