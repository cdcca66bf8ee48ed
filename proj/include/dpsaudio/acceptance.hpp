// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <complex>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "dpsaudio/config.hpp"
#include "dpsaudio/degradation.hpp"
#include "dpsaudio/denoiser.hpp"
#include "dpsaudio/guidance.hpp"
#include "dpsaudio/harness.hpp"
#include "dpsaudio/metrics.hpp"
#include "dpsaudio/sampler.hpp"
#include "dpsaudio/schedule.hpp"
#include "dpsaudio/synth.hpp"

namespace dpsaudio {

struct CriterionResult {
  std::string name;
  bool passed = false;
  std::string measured;
  std::string tolerance;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  bool include_end_to_end = true;
  std::size_t e2e_items = 20;
  double e2e_segment_s = 1.0;
  std::uint64_t seed = 2024;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
};

// Stationary Gaussian test problem: pink prior on L = 256 samples at
// 22.05 kHz with a four-tone mean, a prior draw x0, and its brick-wall
// low-passed measurement at a quarter of Nyquist.
struct GaussianScene {
  std::shared_ptr<GaussianPriorDenoiser> denoiser;
  Signal x0;
  Measurement meas;
  Signal posterior_mean;  // exact E[x0 | y]
};

inline Signal draw_gaussian_prior(const GaussianPriorDenoiser& prior, std::mt19937_64& rng) {
  const Signal& mu = prior.mean();
  std::vector<double> amp(prior.cov_spectrum().size());
  for (std::size_t k = 0; k < amp.size(); ++k) amp[k] = std::sqrt(prior.cov_spectrum()[k]);
  const Signal white(gaussian_noise(mu.size(), rng), mu.sample_rate());
  return add(mu, apply_bin_gains(white, amp));
}

inline GaussianScene make_gaussian_scene(std::uint64_t seed) {
  constexpr std::size_t kLength = 256;
  constexpr int kRate = 22050;
  std::vector<double> mu(kLength, 0.0);
  for (int bin : {5, 20, 50, 90}) {
    for (std::size_t n = 0; n < kLength; ++n) {
      mu[n] += 0.05 * std::cos(2.0 * std::numbers::pi * bin * static_cast<double>(n) / kLength);
    }
  }
  GaussianScene s;
  s.denoiser = std::make_shared<GaussianPriorDenoiser>(Signal(mu, kRate), pink_spectrum(kLength, kRate, 0.01, 100.0));
  std::mt19937_64 rng(seed);
  s.x0 = draw_gaussian_prior(*s.denoiser, rng);
  auto op = std::make_shared<BrickwallLPF>(kRate / 8.0);
  s.meas = degrade(op, s.x0, 0.0, seed);
  // Passband fixed by y, stopband independent of it under a diagonal prior.
  const Signal& m = s.denoiser->mean();
  s.posterior_mean = add(s.meas.y, sub(m, op->apply(m)));
  return s;
}

namespace detail {

inline std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

inline std::string fmt2(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

template <class F>
CriterionResult timed(const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r = body();
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline Signal random_signal(std::size_t n, int sr, double std, std::mt19937_64& rng) {
  return scale(Signal(gaussian_noise(n, rng), sr), std);
}

}  // namespace detail

inline CriterionResult check_gaussian_posterior(std::size_t seeds = 50) {
  return detail::timed("Gaussian posterior oracle", [&] {
    const GaussianScene scene = make_gaussian_scene(7);
    const NoiseSchedule schedule(ScheduleParams{});
    const auto& lpf = *scene.meas.op;
    std::vector<double> acc(scene.x0.size(), 0.0);
    double worst_passband = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < seeds; ++s) {
      SamplerConfig cfg = preset("pigdm-dc", Task::bwe);
      cfg.seed = s;
      const Signal out = restore(scene.meas, *scene.denoiser, cfg, schedule).estimate;
      worst_passband = std::max(worst_passband, relative_l2(lpf.apply(out), scene.meas.y));
      for (std::size_t n = 0; n < acc.size(); ++n) acc[n] += out[n] / static_cast<double>(seeds);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double err = relative_l2(scene.x0.with_samples(acc), scene.posterior_mean);
    CriterionResult r;
    r.passed = err < 0.05 && worst_passband < 1e-6 && secs < 120.0;
    r.measured = detail::fmt2("mean rel L2 %.4f, worst passband rel %.3g", err, worst_passband) +
                 detail::fmt(", %.1f s", secs);
    r.tolerance = "< 0.05, < 1e-6, < 120 s";
    return r;
  });
}

// Central-difference gradient of ||y - A(D(x; sigma))||^2.
inline Signal fd_loss_gradient(const Denoiser& d, const Measurement& meas, const Signal& x, double sigma, double h) {
  auto loss = [&](const Signal& z) { return energy(sub(meas.y, meas.op->apply(d.denoise(z, sigma)))); };
  std::vector<double> g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    auto p = x.vec();
    auto m = x.vec();
    p[j] += h;
    m[j] -= h;
    g[j] = (loss(x.with_samples(std::move(p))) - loss(x.with_samples(std::move(m)))) / (2.0 * h);
  }
  return x.with_samples(std::move(g));
}

inline ShrinkageDenoiser random_shrinkage(std::size_t bands, int sample_rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> sigmas;
  for (double s = 1e-4; s < 2.0; s *= 3.0) sigmas.push_back(s);
  std::vector<std::vector<double>> gains(bands, std::vector<double>(sigmas.size()));
  for (auto& row : gains) {
    for (double& g : row) g = unit(rng);
  }
  return ShrinkageDenoiser(linear_bands(bands, sample_rate).edges_hz, sigmas, gains);
}

inline CriterionResult check_gradients(std::size_t probes = 20) {
  return detail::timed("Guidance gradient checks", [&] {
    constexpr std::size_t kLength = 64;
    constexpr int kRate = 22050;
    std::mt19937_64 rng(11);
    std::vector<std::pair<std::string, std::shared_ptr<const Denoiser>>> denoisers = {
        {"gaussian", std::make_shared<GaussianPriorDenoiser>(Signal::zeros(kLength, kRate),
                                                             pink_spectrum(kLength, kRate, 0.05, 500.0))},
        {"shrinkage", std::make_shared<ShrinkageDenoiser>(random_shrinkage(12, kRate, rng))}};
    std::vector<std::pair<std::string, std::shared_ptr<const DegradationOp>>> ops = {
        {"clip", std::make_shared<HardClip>(0.25)}, {"lpf", std::make_shared<BrickwallLPF>(kRate / 8.0)}};
    std::uniform_real_distribution<double> log_sigma(std::log(0.01), std::log(1.0));
    double worst = 0.0;
    std::size_t count = 0;
    for (const auto& [dn, d] : denoisers) {
      for (const auto& [on, op] : ops) {
        for (std::size_t p = 0; p < probes; ++p) {
          const Signal x_true = detail::random_signal(kLength, kRate, 0.4, rng);
          const Measurement meas = degrade(op, x_true, 0.0, 0);
          const Signal x_t = detail::random_signal(kLength, kRate, 0.5, rng);
          const double sigma = std::exp(log_sigma(rng));
          const Signal g = rg_gradient(*d, meas, x_t, sigma);
          const Signal fd = fd_loss_gradient(*d, meas, x_t, sigma, 1e-6);
          const double n = norm(g);
          worst = std::max(worst, n > 0.0 ? relative_l2(fd, g) : norm(fd));
          ++count;
        }
      }
    }
    CriterionResult r;
    r.passed = worst < 1e-4 && count >= 80;
    r.measured = detail::fmt2("worst rel err %.3g over %.0f probes", worst, static_cast<double>(count));
    r.tolerance = "< 1e-4, >= 20 probes per pair";
    return r;
  });
}

inline CriterionResult check_operator_contracts(std::size_t trials = 100) {
  return detail::timed("Operator contracts", [&] {
    constexpr int kRate = 22050;
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<std::size_t> len_dist(16, 2048);
    std::uniform_real_distribution<double> c_dist(0.05, 1.5);
    std::uniform_real_distribution<double> fc_dist(100.0, 0.49 * kRate);
    double hhh = 0.0;
    double idem = 0.0;
    double adj = 0.0;
    std::size_t clamp_mismatch = 0;
    double formula_dev = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t n = len_dist(rng);
      const Signal x = detail::random_signal(n, kRate, 0.7, rng);
      const HardClip clip(c_dist(rng));
      const BrickwallLPF lpf(fc_dist(rng));
      for (const DegradationOp* op : {static_cast<const DegradationOp*>(&clip), static_cast<const DegradationOp*>(&lpf)}) {
        const Signal hx = op->apply(x);
        const double ref = std::max(norm(hx), 1e-300);
        hhh = std::max(hhh, norm(sub(op->apply(op->pseudo_inverse(hx)), hx)) / ref);
      }
      const Signal lx = lpf.apply(x);
      idem = std::max(idem, norm(sub(lpf.apply(lx), lx)) / std::max(norm(lx), 1e-300));
      const Signal u = detail::random_signal(n, kRate, 1.0, rng);
      const Signal v = detail::random_signal(n, kRate, 1.0, rng);
      adj = std::max(adj, std::abs(dot(lpf.apply(u), v) - dot(u, lpf.adjoint_at(u, v))) / (norm(u) * norm(v)));
      const Signal cx = clip_apply(clip, x);
      const double c = clip.threshold();
      for (std::size_t i = 0; i < n; ++i) {
        if (cx[i] != std::min(std::max(x[i], -c), c)) ++clamp_mismatch;
        formula_dev = std::max(formula_dev, std::abs((std::abs(x[i] + c) - std::abs(x[i] - c)) / 2.0 - cx[i]));
      }
    }
    CriterionResult r;
    r.passed = hhh <= 1e-9 && idem <= 1e-9 && adj <= 1e-9 && clamp_mismatch == 0 && formula_dev <= 1e-15;
    std::ostringstream m;
    m << "h(h+(h)) " << detail::fmt("%.3g", hhh) << ", idempotence " << detail::fmt("%.3g", idem) << ", adjoint "
      << detail::fmt("%.3g", adj) << ", clamp mismatches " << clamp_mismatch << ", closed-form deviation "
      << detail::fmt("%.3g", formula_dev);
    r.measured = m.str();
    r.tolerance = "<= 1e-9 each, 0 mismatches, closed form within 1e-15 (rounding)";
    return r;
  });
}

inline CriterionResult check_schedule_window() {
  return detail::timed("Schedule and window arithmetic", [] {
    const NoiseSchedule s = build_schedule(300, 13.0, 1e-4, 1.0, 5.0);
    const double e0 = std::abs(s.sigma(0) - 1.0);
    const double e1 = std::abs(s.sigma(299) - 1e-4);
    RepaintConfig rp{true, 10, 1.5, 2.8};
    std::size_t window_errors = 0;
    std::size_t first = 300;
    std::size_t last = 0;
    for (std::size_t i = 0; i < 300; ++i) {
      const std::size_t u = rp_window(rp, 300, i);
      const std::size_t want = (i >= 150 && i <= 280) ? 10 : 0;
      if (u != want) ++window_errors;
      if (u > 0) {
        first = std::min(first, i);
        last = std::max(last, i);
      }
    }
    GuidanceConfig g;
    g.kind = GuidanceKind::rg;
    g.delta_rho_enabled = true;
    const double d0 = delta_rho(g, s, 0);
    const double d1 = delta_rho(g, s, 299);
    CriterionResult r;
    r.passed = e0 <= 1e-12 && e1 <= 1e-12 && window_errors == 0 && d0 == 0.0 && std::abs(d1 - 4.0) <= 1e-12;
    std::ostringstream m;
    m << "endpoint errors " << detail::fmt2("%.3g/%.3g", e0, e1) << ", RP window [" << first << "," << last
      << "] with " << window_errors << " wrong indices, delta-rho " << detail::fmt2("%.17g -> %.17g", d0, d1);
    r.measured = m.str();
    r.tolerance = "<= 1e-12, window [150,280], delta-rho 0 -> 4";
    return r;
  });
}

inline CriterionResult check_clip_calibration(std::size_t items, double segment_s, std::uint64_t seed) {
  return detail::timed("Clipping calibration", [&] {
    SyntheticVoiceSpec spec;
    spec.n_items = items;
    spec.duration_s = segment_s;
    const auto corpus = synth_corpus(spec, seed);
    double worst = 0.0;
    std::size_t failures = 0;
    for (const auto& it : corpus) {
      for (double target : {5.0, 10.0}) {
        try {
          const auto cal = clip_for_sdr(it.signal, target);
          worst = std::max(worst, std::abs(sdr(it.signal, cal.clipped) - target));
        } catch (const std::exception&) {
          ++failures;
        }
      }
    }
    CriterionResult r;
    r.passed = failures == 0 && worst <= 0.01;
    r.measured = detail::fmt2("worst |SDR - target| %.4g dB, %.0f failures", worst, static_cast<double>(failures));
    r.tolerance = "<= 0.01 dB on " + std::to_string(items) + " items x {5, 10} dB";
    return r;
  });
}

// Per-band sample variance of unconditional draws against the prior, bands of
// 16 half-spectrum bins. Variance is taken around the empirical mean.
inline std::vector<std::pair<double, double>> unconditional_band_variances(const GaussianPriorDenoiser& prior,
                                                                           const ScheduleParams& params,
                                                                           std::size_t samples, int order = 1) {
  const NoiseSchedule schedule(params);
  const std::size_t n = prior.mean().size();
  const std::size_t bins = n / 2 + 1;
  std::vector<std::vector<std::complex<double>>> spectra;
  spectra.reserve(samples);
  std::vector<std::complex<double>> mean(bins);
  for (std::size_t s = 0; s < samples; ++s) {
    SamplerConfig cfg;
    cfg.order = order;
    cfg.seed = s;
    const Signal x = sample_unconditional(prior, cfg, schedule, n, prior.mean().sample_rate());
    spectra.push_back(rfft(x.samples()));
    for (std::size_t k = 0; k < bins; ++k) mean[k] += spectra.back()[k] / static_cast<double>(samples);
  }
  constexpr std::size_t kBand = 16;
  std::vector<std::pair<double, double>> out;
  for (std::size_t b0 = 0; b0 + kBand <= bins; b0 += kBand) {
    double emp = 0.0;
    double want = 0.0;
    for (std::size_t k = b0; k < b0 + kBand; ++k) {
      for (const auto& sp : spectra) emp += std::norm(sp[k] - mean[k]);
      want += prior.cov_spectrum()[k];
    }
    emp /= static_cast<double>((samples - 1) * n);
    out.emplace_back(emp / kBand, want / kBand);
  }
  return out;
}

inline CriterionResult check_unconditional(std::size_t samples = 500) {
  return detail::timed("Unconditional sampling sanity", [&] {
    const GaussianScene scene = make_gaussian_scene(3);
    const auto bands = unconditional_band_variances(*scene.denoiser, ScheduleParams{}, samples);
    double worst = 0.0;
    for (const auto& [emp, want] : bands) worst = std::max(worst, std::abs(emp / want - 1.0));
    CriterionResult r;
    r.passed = worst <= 0.10;
    r.measured = detail::fmt2("worst band variance deviation %.2f%% over %.0f bands", 100.0 * worst,
                              static_cast<double>(bands.size()));
    r.tolerance = "<= 10% with " + std::to_string(samples) + " samples";
    return r;
  });
}

struct ImprovementStats {
  double degraded_mean = 0.0;
  double restored_mean = 0.0;
  double pass_rate = 0.0;
};

// Compares the method rows against the baseline rows of one cell.
inline ImprovementStats improvement(const std::vector<ResultRow>& rows, Task task, double severity,
                                    const std::string& method, bool higher_is_better) {
  std::map<std::string, double> base;
  std::map<std::string, double> rest;
  auto metric = [&](const ResultRow& r) { return higher_is_better ? r.si_sdr : r.lsd; };
  for (const auto& r : rows) {
    if (r.task != task || r.severity != severity) continue;
    if (r.method == baseline_name(task)) base[r.file] = metric(r);
    if (r.method == method) rest[r.file] = metric(r);
  }
  ImprovementStats st;
  std::size_t wins = 0;
  for (const auto& [file, b] : base) {
    const auto it = rest.find(file);
    const double v = it == rest.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
    st.degraded_mean += b;
    st.restored_mean += v;
    if (higher_is_better ? v > b : v < b) ++wins;
  }
  const double n = static_cast<double>(base.size());
  st.degraded_mean /= n;
  st.restored_mean /= n;
  st.pass_rate = static_cast<double>(wins) / n;
  return st;
}

inline CriterionResult check_end_to_end(const AcceptanceOptions& opt) {
  return detail::timed("End-to-end improvement", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentSpec spec;
    spec.dataset = "synthetic:" + std::to_string(opt.e2e_items);
    spec.segment_s = opt.e2e_segment_s;
    spec.seed = opt.seed;
    spec.threads = opt.threads;
    const auto items = load_dataset(spec.dataset, spec.segment_s, spec.seed);
    const ShrinkageDenoiser denoiser = train_default_denoiser(spec.segment_s, spec.seed, spec.schedule);

    spec.tasks = {{Task::declip, 5.0}, {Task::declip, 10.0}};
    spec.methods = {"rg-drho-dc-rp"};
    auto rows = run_matrix(spec, items, denoiser).rows;
    spec.tasks = {{Task::bwe, 3000.0}, {Task::bwe, 5000.0}};
    spec.methods = {"pigdm-dc"};
    const auto bwe = run_matrix(spec, items, denoiser).rows;
    rows.insert(rows.end(), bwe.begin(), bwe.end());

    bool ok = true;
    std::ostringstream m;
    for (const auto& [task, sev, method, higher] :
         {std::tuple{Task::declip, 5.0, "rg-drho-dc-rp", true}, std::tuple{Task::declip, 10.0, "rg-drho-dc-rp", true},
          std::tuple{Task::bwe, 3000.0, "pigdm-dc", false}, std::tuple{Task::bwe, 5000.0, "pigdm-dc", false}}) {
      const ImprovementStats st = improvement(rows, task, sev, method, higher);
      const bool better = higher ? st.restored_mean > st.degraded_mean : st.restored_mean < st.degraded_mean;
      ok = ok && better && st.pass_rate >= 0.8;
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s %g %s %.3f -> %.3f (%.0f%% items)", to_string(task).c_str(), sev,
                    higher ? "SI-SDR" : "LSD", st.degraded_mean, st.restored_mean, 100.0 * st.pass_rate);
      if (m.tellp() > 0) m << "; ";
      m << buf;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CriterionResult r;
    r.passed = ok && secs < 900.0;
    r.measured = m.str();
    r.tolerance = "strict mean improvement, >= 80% of " + std::to_string(opt.e2e_items) + " items, < 900 s";
    return r;
  });
}

inline CriterionResult check_determinism() {
  return detail::timed("Determinism", [] {
    std::vector<std::string> broken;
    SyntheticVoiceSpec vs;
    vs.n_items = 2;
    vs.duration_s = 0.1;
    const auto corpus = synth_corpus(vs, 5);
    const Signal& x = corpus[0].signal;
    ScheduleParams sp;
    sp.steps = 40;
    const NoiseSchedule schedule(sp);

    auto same = [](const Signal& a, const Signal& b) { return a.vec() == b.vec(); };
    if (!same(synth_corpus(vs, 5)[1].signal, corpus[1].signal)) broken.push_back("synth");

    const auto clip = clip_for_sdr(x, 5.0);
    auto op = std::make_shared<HardClip>(clip.op);
    const Measurement m1 = degrade(op, x, 0.01, 9);
    const Measurement m2 = degrade(op, x, 0.01, 9);
    if (!same(m1.y, m2.y)) broken.push_back("degrade");

    std::vector<Signal> data;
    for (const auto& it : corpus) data.push_back(it.signal);
    const auto d1 = train_shrinkage(data, schedule, linear_bands(32, vs.sample_rate));
    const auto d2 = train_shrinkage(data, schedule, linear_bands(32, vs.sample_rate));
    if (d1.gains() != d2.gains()) broken.push_back("train-denoiser");

    for (const std::string name : {"rg-drho-dc-rp", "pigdm-dc"}) {
      SamplerConfig cfg = preset(name, Task::declip);
      cfg.seed = 17;
      const auto r1 = restore(m1, d1, cfg, schedule);
      const auto r2 = restore(m1, d1, cfg, schedule);
      std::ostringstream t1;
      std::ostringstream t2;
      r1.trace.write_csv(t1);
      r2.trace.write_csv(t2);
      if (!same(r1.estimate, r2.estimate) || t1.str() != t2.str()) broken.push_back("restore " + name);
    }

    const MetricReport e1 = evaluate(x, m1.y);
    const MetricReport e2 = evaluate(x, m1.y);
    if (e1.si_sdr_db != e2.si_sdr_db || e1.sdr_db != e2.sdr_db || e1.lsd != e2.lsd) broken.push_back("evaluate");

    ExperimentSpec spec;
    spec.tasks = {{Task::declip, 5.0}, {Task::bwe, 3000.0}};
    spec.methods = {"rg-dc", "pigdm-dc"};
    spec.schedule = sp;
    spec.seed = 3;
    std::vector<DatasetItem> items;
    for (const auto& it : corpus) items.push_back({it.name, it.signal});
    std::ostringstream c1;
    std::ostringstream c2;
    write_results_csv(run_matrix(spec, items, d1).rows, c1);
    spec.threads = 2;
    write_results_csv(run_matrix(spec, items, d1).rows, c2);
    if (c1.str() != c2.str()) broken.push_back("run-matrix");

    CriterionResult r;
    r.passed = broken.empty();
    std::ostringstream m;
    m << (broken.empty() ? "all reruns bit-identical" : "differs:");
    for (const auto& b : broken) m << ' ' << b;
    r.measured = m.str();
    r.tolerance = "bit-identical";
    return r;
  });
}

inline std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt,
                                                   const std::function<void(const CriterionResult&)>& on_result = {}) {
  std::vector<std::function<CriterionResult()>> checks = {
      [] { return check_gaussian_posterior(); },
      [] { return check_gradients(); },
      [] { return check_operator_contracts(); },
      [] { return check_schedule_window(); },
      [&] { return check_clip_calibration(opt.e2e_items, opt.e2e_segment_s, opt.seed); },
      [] { return check_unconditional(); },
  };
  if (opt.include_end_to_end) checks.push_back([&] { return check_end_to_end(opt); });
  checks.push_back([] { return check_determinism(); });
  std::vector<CriterionResult> out;
  for (auto& c : checks) {
    out.push_back(c());
    if (on_result) on_result(out.back());
  }
  return out;
}

inline std::string format_result(const CriterionResult& r) {
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.1f", r.seconds);
  return std::string(r.passed ? "PASS" : "FAIL") + "  " + r.name + ": " + r.measured + " (tolerance " +
         r.tolerance + ", " + secs + " s)";
}

}  // namespace dpsaudio
