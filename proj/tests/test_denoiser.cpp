// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "dpsaudio/acceptance.hpp"
#include "dpsaudio/denoiser.hpp"
#include "dpsaudio/synth.hpp"
#include "test_util.hpp"

using namespace dpsaudio;

namespace {

using Matrix = std::vector<std::vector<double>>;

// Dense circulant covariance with half-spectrum eigenvalues `lambda`.
Matrix circulant_covariance(const std::vector<double>& lambda, std::size_t n) {
  Matrix c(n, std::vector<double>(n));
  for (std::size_t d = 0; d < n; ++d) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double lk = lambda[std::min(k, n - k)];
      acc += lk * std::cos(2.0 * std::numbers::pi * static_cast<double>(k * d % n) / static_cast<double>(n));
    }
    for (std::size_t m = 0; m < n; ++m) c[m][(m + d) % n] = acc / static_cast<double>(n);
  }
  return c;
}

// Solves A z = b for symmetric positive definite A.
std::vector<double> cholesky_solve(Matrix a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    a[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      a[i][j] = s / a[j][j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= a[i][k] * b[k];
    b[i] /= a[i][i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) b[i] -= a[k][i] * b[k];
    b[i] /= a[i][i];
  }
  return b;
}

std::vector<Signal> short_corpus(std::size_t n, double seconds, std::uint64_t seed) {
  SyntheticVoiceSpec spec;
  spec.n_items = n;
  spec.duration_s = seconds;
  std::vector<Signal> out;
  for (auto& it : synth_corpus(spec, seed)) out.push_back(it.signal);
  return out;
}

}  // namespace

TEST(Score, UnitGaussianPrior) {
  const std::size_t n = 32;
  const GaussianPriorDenoiser d(Signal::zeros(n, 8000), flat_spectrum(n, 1.0));
  const Signal x = testutil::random_signal(n, 1, 1.0, 8000);
  for (double sigma : {0.1, 0.5, 1.0, 3.0}) {
    const Signal s = score(d, x, sigma);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(s[i], -x[i] / (1.0 + sigma * sigma), 1e-12);
  }
}

TEST(Score, IdentityDenoiserHasZeroScore) {
  const IdentityDenoiser d;
  const Signal s = score(d, testutil::random_signal(16, 2), 0.3);
  for (double v : s.vec()) EXPECT_EQ(v, 0.0);
}

TEST(Score, RejectsNonPositiveSigma) {
  const IdentityDenoiser d;
  const Signal x = testutil::random_signal(8, 3);
  EXPECT_THROW(score(d, x, 0.0), std::invalid_argument);
  EXPECT_THROW(score(d, x, -1.0), std::invalid_argument);
  EXPECT_THROW(denoiser_vjp(d, x, 0.0, x), std::invalid_argument);
}

TEST(Score, GaussianMatchesDenseLogDensityGradient) {
  const std::size_t n = 64;
  const int sr = 22050;
  const auto lambda = pink_spectrum(n, sr, 0.05, 300.0);
  const Signal mu = testutil::random_signal(n, 4, 0.1, sr);
  const GaussianPriorDenoiser d(mu, lambda);
  const Matrix cov = circulant_covariance(lambda, n);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> log_sigma(std::log(1e-2), std::log(2.0));
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    const double sigma = std::exp(log_sigma(rng));
    const Signal x = testutil::random_signal(n, 1000 + probe, 0.5, sr);
    Matrix a = cov;
    for (std::size_t i = 0; i < n; ++i) a[i][i] += sigma * sigma;
    std::vector<double> grad = cholesky_solve(a, sub(x, mu).vec());
    for (double& g : grad) g = -g;
    worst = std::max(worst, relative_l2(score(d, x, sigma), Signal(grad, sr)));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(GaussianDenoise, Examples) {
  const std::size_t n = 16;
  const GaussianPriorDenoiser d(Signal::zeros(n, 8000), flat_spectrum(n, 1.0));
  const Signal x = testutil::random_signal(n, 6, 1.0, 8000);
  const Signal half = gaussian_denoise(d, x, 1.0);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(half[i], x[i] / 2.0, 1e-14);
  EXPECT_EQ(gaussian_denoise(d, x, 0.0).vec(), x.vec());

  std::vector<double> lambda(n / 2 + 1, 0.0);
  lambda[0] = 4.0;
  lambda[1] = 1.0;
  const GaussianPriorDenoiser e(Signal::zeros(n, 8000), lambda);
  const auto g = e.gains(2.0);
  EXPECT_DOUBLE_EQ(g[0], 0.5);
  EXPECT_DOUBLE_EQ(g[1], 0.2);
  for (std::size_t k = 2; k < g.size(); ++k) EXPECT_EQ(g[k], 0.0);
}

TEST(GaussianDenoise, PerBinFormula) {
  const std::size_t n = 128;
  const int sr = 16000;
  const auto lambda = pink_spectrum(n, sr, 0.02, 200.0);
  const Signal mu = testutil::random_signal(n, 7, 0.1, sr);
  const GaussianPriorDenoiser d(mu, lambda);
  const Signal x = testutil::random_signal(n, 8, 0.5, sr);
  const double sigma = 0.3;
  const auto xo = testutil::direct_dft(x.vec());
  const auto mo = testutil::direct_dft(mu.vec());
  const auto out = testutil::direct_dft(gaussian_denoise(d, x, sigma).vec());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto want = mo[k] + (lambda[k] / (lambda[k] + sigma * sigma)) * (xo[k] - mo[k]);
    EXPECT_NEAR(std::abs(out[k] - want), 0.0, 1e-10) << k;
  }
}

TEST(GaussianDenoise, RejectsBadInput) {
  EXPECT_THROW(GaussianPriorDenoiser(Signal::zeros(16, 8000), flat_spectrum(15, 1.0)), std::invalid_argument);
  std::vector<double> neg = flat_spectrum(16, 1.0);
  neg[3] = -0.1;
  EXPECT_THROW(GaussianPriorDenoiser(Signal::zeros(16, 8000), neg), std::invalid_argument);
  const GaussianPriorDenoiser d(Signal::zeros(16, 8000), flat_spectrum(16, 1.0));
  EXPECT_THROW(d.denoise(testutil::random_signal(17, 1), 0.5), std::invalid_argument);
  EXPECT_THROW(d.denoise(testutil::random_signal(16, 1), -0.5), std::invalid_argument);
}

TEST(Vjp, ClosedFormExamples) {
  const std::size_t n = 32;
  const Signal v = testutil::random_signal(n, 9, 1.0, 8000);
  const Signal x = testutil::random_signal(n, 10, 1.0, 8000);
  const IdentityDenoiser id;
  EXPECT_EQ(denoiser_vjp(id, x, 0.5, v).vec(), v.vec());
  const GaussianPriorDenoiser g(Signal::zeros(n, 8000), flat_spectrum(n, 1.0));
  const Signal half = denoiser_vjp(g, x, 1.0, v);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(half[i], v[i] / 2.0, 1e-14);
}

TEST(Vjp, MatchesFiniteDifferencesForShippedDenoisers) {
  const std::size_t n = 64;
  const int sr = 22050;
  std::mt19937_64 rng(11);
  const GaussianPriorDenoiser gauss(testutil::random_signal(n, 12, 0.1, sr), pink_spectrum(n, sr, 0.05, 300.0));
  const ShrinkageDenoiser shrink = random_shrinkage(10, sr, rng);
  std::uniform_real_distribution<double> log_sigma(std::log(1e-3), std::log(1.4));
  for (const Denoiser* d : {static_cast<const Denoiser*>(&gauss), static_cast<const Denoiser*>(&shrink)}) {
    for (int probe = 0; probe < 20; ++probe) {
      const Signal x = testutil::random_signal(n, 100 + probe, 0.5, sr);
      const Signal v = testutil::random_signal(n, 200 + probe, 1.0, sr);
      const double sigma = std::exp(log_sigma(rng));
      EXPECT_LT(relative_l2(finite_difference_vjp(*d, x, sigma, v), denoiser_vjp(*d, x, sigma, v)), 1e-4)
          << d->name() << " probe " << probe;
    }
  }
}

TEST(Vjp, LinearInV) {
  const std::size_t n = 128;
  const int sr = 22050;
  std::mt19937_64 rng(13);
  const ShrinkageDenoiser shrink = random_shrinkage(16, sr, rng);
  const GaussianPriorDenoiser gauss(Signal::zeros(n, sr), pink_spectrum(n, sr, 0.05, 300.0));
  const Signal x = testutil::random_signal(n, 14, 0.5, sr);
  const Signal v1 = testutil::random_signal(n, 15, 1.0, sr);
  const Signal v2 = testutil::random_signal(n, 16, 1.0, sr);
  for (const Denoiser* d : {static_cast<const Denoiser*>(&gauss), static_cast<const Denoiser*>(&shrink)}) {
    const Signal lhs = d->vjp(x, 0.2, add(scale(v1, 1.5), scale(v2, -0.25)));
    const Signal rhs = add(scale(d->vjp(x, 0.2, v1), 1.5), scale(d->vjp(x, 0.2, v2), -0.25));
    EXPECT_LT(norm(sub(lhs, rhs)), 1e-9 * norm(rhs)) << d->name();
  }
}

TEST(DenoiserProperty, Contraction) {
  const std::size_t n = 512;
  const int sr = 22050;
  std::mt19937_64 rng(17);
  const ShrinkageDenoiser shrink = random_shrinkage(32, sr, rng);
  const GaussianPriorDenoiser gauss(testutil::random_signal(n, 18, 0.1, sr), pink_spectrum(n, sr, 0.05, 100.0));
  for (int t = 0; t < 50; ++t) {
    const Signal x = testutil::random_signal(n, 300 + t, 0.5, sr);
    const Signal y = testutil::random_signal(n, 400 + t, 0.5, sr);
    const double sigma = 0.001 * std::pow(1.2, t);
    for (const Denoiser* d : {static_cast<const Denoiser*>(&gauss), static_cast<const Denoiser*>(&shrink)}) {
      EXPECT_LE(norm(sub(d->denoise(x, sigma), d->denoise(y, sigma))), norm(sub(x, y)) * (1.0 + 1e-12));
    }
  }
}

TEST(Shrinkage, InterpolatesInLogSigma) {
  const ShrinkageDenoiser d({0.0, 1000.0, 4000.0}, {0.01, 0.1, 1.0}, {{1.0, 0.5, 0.0}, {0.9, 0.9, 0.3}});
  EXPECT_EQ(d.gain(0, 0.001), 1.0);
  EXPECT_EQ(d.gain(0, 5.0), 0.0);
  EXPECT_NEAR(d.gain(0, std::sqrt(0.01 * 0.1)), 0.75, 1e-12);
  EXPECT_NEAR(d.gain(1, std::sqrt(0.1)), 0.6, 1e-12);
  EXPECT_EQ(d.band_of(500.0), 0u);
  EXPECT_EQ(d.band_of(1000.0), 1u);
  EXPECT_EQ(d.band_of(4000.0), 1u);
  EXPECT_EQ(d.band_of(4000.5), 2u);  // outside every band
  const auto g = d.bin_gains(16, 16000, 0.1);
  EXPECT_EQ(g.back(), 0.0);  // 8 kHz lies above the last edge
}

TEST(Shrinkage, RejectsInvalidTables) {
  EXPECT_THROW(ShrinkageDenoiser({0.0, 0.0}, {1.0}, {{0.5}}), std::invalid_argument);
  EXPECT_THROW(ShrinkageDenoiser({0.0, 1.0}, {1.0, 0.5}, {{0.5, 0.5}}), std::invalid_argument);
  EXPECT_THROW(ShrinkageDenoiser({0.0, 1.0}, {1.0}, {{1.5}}), std::invalid_argument);
  EXPECT_THROW(ShrinkageDenoiser({0.0, 1.0}, {1.0}, {{0.5}, {0.5}}), std::invalid_argument);
}

TEST(Train, ToneOnlyInOneBand) {
  const int sr = 16000;
  const std::size_t n = 1600;
  std::vector<Signal> data;
  for (int i = 0; i < 4; ++i) data.push_back(testutil::tone(1500.0 + 10.0 * i, n, sr, 0.5, 0.3 * i));
  BandSpec bands = linear_bands(8, sr, 8);  // 1 kHz bands
  const NoiseSchedule sched = build_schedule(50, 13.0, 1e-3, 1.0, 0.0);
  const ShrinkageDenoiser d = train_shrinkage(data, sched, bands);
  const auto power = band_powers(data, bands.edges_hz);
  for (std::size_t s = 0; s < d.sigma_bins().size(); ++s) {
    const double sig = d.sigma_bins()[s];
    EXPECT_NEAR(d.gains()[1][s], power[1] / (power[1] + sig * sig), 1e-12);
    for (std::size_t b : {0u, 3u, 5u, 7u}) EXPECT_LT(d.gains()[b][s], 1e-6) << b;
  }
}

TEST(Train, VanishingNoiseGivesUnitGains) {
  const auto data = short_corpus(4, 0.1, 3);
  const NoiseSchedule sched = build_schedule(50, 13.0, 1e-9, 1.0, 0.0);
  const ShrinkageDenoiser d = train_shrinkage(data, sched, linear_bands(16, 22050));
  for (std::size_t b = 0; b < d.bands(); ++b) EXPECT_GT(d.gains()[b].front(), 1.0 - 1e-6) << b;
}

TEST(Train, GainsMatchLeastSquaresFit) {
  const auto data = short_corpus(10, 0.2, 4);
  const double sigma = 0.1;
  // sigma_min = 0.1 puts the fit level exactly on the first trained bin.
  const NoiseSchedule sched = build_schedule(50, 13.0, sigma, 1.0, 0.0);
  const BandSpec bands = linear_bands(16, 22050);
  const ShrinkageDenoiser d = train_shrinkage(data, sched, bands);
  std::vector<double> num(16, 0.0);
  std::vector<double> den(16, 0.0);
  std::mt19937_64 rng(5);
  for (const Signal& x : data) {
    const auto xs = rfft(x.samples());
    for (int draw = 0; draw < 40; ++draw) {
      auto noisy = x.vec();
      for (double& v : noisy) v += sigma * std::normal_distribution<double>(0.0, 1.0)(rng);
      const auto ys = rfft(noisy);
      for (std::size_t k = 0; k < xs.size(); ++k) {
        const std::size_t b = d.band_of(bin_frequency(k, x.size(), x.sample_rate()));
        if (b >= 16) continue;
        num[b] += std::real(std::conj(ys[k]) * xs[k]);
        den[b] += std::norm(ys[k]);
      }
    }
  }
  for (std::size_t b = 0; b < 16; ++b) EXPECT_NEAR(d.gain(b, sigma), num[b] / den[b], 0.01) << b;
}

TEST(Train, LossNotWorseThanIdentityPerSigmaBin) {
  const auto data = short_corpus(8, 0.2, 6);
  const NoiseSchedule sched(ScheduleParams{});
  const ShrinkageDenoiser d = train_shrinkage(data, sched, linear_bands(64, 22050, 12));
  std::mt19937_64 rng(7);
  for (double sigma : d.sigma_bins()) {
    double trained = 0.0;
    double identity = 0.0;
    for (const Signal& x : data) {
      for (int draw = 0; draw < 8; ++draw) {
        auto noisy = x.vec();
        for (double& v : noisy) v += sigma * std::normal_distribution<double>(0.0, 1.0)(rng);
        const Signal y = x.with_samples(noisy);
        trained += energy(sub(d.denoise(y, sigma), x));
        identity += energy(sub(y, x));
      }
    }
    EXPECT_LE(trained, identity) << "sigma " << sigma;
  }
}

TEST(Train, RejectsBadDatasets) {
  const NoiseSchedule sched(ScheduleParams{});
  EXPECT_THROW(train_shrinkage({}, sched, linear_bands(4, 22050)), std::invalid_argument);
  std::vector<Signal> mixed = {testutil::random_signal(100, 1), testutil::random_signal(101, 2)};
  EXPECT_THROW(train_shrinkage(mixed, sched, linear_bands(4, 22050)), std::invalid_argument);
  BandSpec zero{{0.0, 100.0, 100.0, 200.0}, 8};
  EXPECT_THROW(train_shrinkage({testutil::random_signal(100, 1)}, sched, zero), std::invalid_argument);
}

TEST(Serialization, RoundTripIsBitExact) {
  testutil::TempDir dir("den");
  const auto data = short_corpus(3, 0.1, 8);
  const ShrinkageDenoiser d = train_shrinkage(data, NoiseSchedule(ScheduleParams{}), linear_bands(32, 22050));
  save_shrinkage(d, dir / "d.bin");
  const ShrinkageDenoiser r = load_shrinkage(dir / "d.bin");
  EXPECT_EQ(r.band_edges(), d.band_edges());
  EXPECT_EQ(r.sigma_bins(), d.sigma_bins());
  EXPECT_EQ(r.gains(), d.gains());

  std::ifstream in(dir / "d.bin", std::ios::binary);
  char magic[5];
  in.read(magic, 5);
  EXPECT_EQ(std::string(magic, 5), "DPSD1");
  const auto size = std::filesystem::file_size(dir / "d.bin");
  EXPECT_EQ(size, 5u + 8u + 33u * 8u + 8u + 32u * 8u + 32u * 32u * 8u);
}

TEST(Serialization, RejectsCorruptFiles) {
  testutil::TempDir dir("den");
  std::ofstream(dir / "bad.bin", std::ios::binary) << "DPSD2xxxxxxxx";
  EXPECT_THROW(load_shrinkage(dir / "bad.bin"), IoError);
  std::ofstream(dir / "short.bin", std::ios::binary) << "DPSD1";
  EXPECT_THROW(load_shrinkage(dir / "short.bin"), IoError);
  EXPECT_THROW(load_shrinkage(dir / "missing.bin"), IoError);
}
