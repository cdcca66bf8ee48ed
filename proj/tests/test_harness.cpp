// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "dpsaudio/harness.hpp"
#include "test_util.hpp"

using namespace dpsaudio;

namespace {

ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.tasks = {{Task::declip, 5.0}, {Task::bwe, 3000.0}};
  spec.methods = {"rg-dc", "pigdm-dc"};
  spec.segment_s = 0.1;
  spec.schedule.steps = 20;
  spec.seed = 3;
  return spec;
}

std::string csv_of(const MatrixResult& r) {
  std::ostringstream out;
  write_results_csv(r.rows, out);
  return out.str();
}

}  // namespace

TEST(Synth, EmptyAndDeterministic) {
  SyntheticVoiceSpec spec;
  spec.n_items = 0;
  EXPECT_TRUE(synth_corpus(spec, 1).empty());
  spec.n_items = 3;
  spec.duration_s = 0.2;
  const auto a = synth_corpus(spec, 5);
  const auto b = synth_corpus(spec, 5);
  const auto c = synth_corpus(spec, 6);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, "synth_" + std::to_string(i));
    EXPECT_EQ(a[i].signal.vec(), b[i].signal.vec());
    EXPECT_NE(a[i].signal.vec(), c[i].signal.vec());
    EXPECT_EQ(a[i].signal.size(), 4410u);
    EXPECT_NEAR(max_abs(a[i].signal), 0.9, 1e-12);
  }
}

TEST(Synth, RejectsHarmonicsAboveNyquist) {
  SyntheticVoiceSpec spec;
  spec.n_harmonics = 40;
  EXPECT_THROW(synth_corpus(spec, 1), std::invalid_argument);
  spec.n_harmonics = 0;
  EXPECT_THROW(synth_corpus(spec, 1), std::invalid_argument);
}

TEST(Synth, SpectralPeakIsAHarmonic) {
  SyntheticVoiceSpec spec;
  spec.n_items = 10;
  spec.duration_s = 1.0;
  spec.max_glide = 0.0;
  spec.vibrato_depth = 0.0;
  const std::size_t window = 4096;
  const double bin_hz = static_cast<double>(spec.sample_rate) / static_cast<double>(window);
  for (const auto& item : synth_corpus(spec, 7)) {
    const auto frames = stft(item.signal, window, 1024);
    std::vector<double> power(window / 2 + 1, 0.0);
    for (const auto& f : frames) {
      for (std::size_t k = 0; k < power.size(); ++k) power[k] += std::norm(f.bins[k]);
    }
    const auto peak = static_cast<double>(std::max_element(power.begin(), power.end()) - power.begin());
    const double f = peak * bin_hz;
    const double harmonic = std::max(1.0, std::round(f / item.f0_start_hz)) * item.f0_start_hz;
    EXPECT_LE(std::abs(f - harmonic), bin_hz) << item.name << " peak " << f << " f0 " << item.f0_start_hz;
  }
}

TEST(Harness, SeedMixing) {
  EXPECT_EQ(mix_seed(1, {2, 3}), mix_seed(1, {2, 3}));
  EXPECT_NE(mix_seed(1, {2, 3}), mix_seed(1, {3, 2}));
  EXPECT_NE(mix_seed(1, {2, 3}), mix_seed(2, {2, 3}));
  EXPECT_EQ(baseline_name(Task::declip), "clipped");
  EXPECT_EQ(baseline_name(Task::bwe), "lpf");
}

TEST(Harness, RowCountAndBaselineRows) {
  const ExperimentSpec spec = small_spec();
  const auto items = load_dataset("synthetic:3", spec.segment_s, spec.seed);
  const GaussianPriorDenoiser d(Signal::zeros(items[0].signal.size(), 22050),
                                pink_spectrum(items[0].signal.size(), 22050, 0.01, 100.0));
  const MatrixResult r = run_matrix(spec, items, d);
  EXPECT_EQ(r.rows.size(), items.size() * spec.tasks.size() * (spec.methods.size() + 1));
  EXPECT_EQ(r.failed_cells, 0u);
  EXPECT_TRUE(std::is_sorted(r.rows.begin(), r.rows.end(), row_less));

  for (std::size_t c = 0; c < spec.tasks.size(); ++c) {
    for (std::size_t n = 0; n < items.size(); ++n) {
      const Measurement m = degrade_for(spec.tasks[c], items[n].signal, 0.0, mix_seed(spec.seed, {n, c, 0}));
      const MetricReport want = evaluate(items[n].signal, m.y);
      const auto it = std::find_if(r.rows.begin(), r.rows.end(), [&](const ResultRow& row) {
        return row.file == items[n].name && row.task == spec.tasks[c].task &&
               row.method == baseline_name(spec.tasks[c].task);
      });
      ASSERT_NE(it, r.rows.end());
      EXPECT_EQ(it->si_sdr, want.si_sdr_db);
      EXPECT_EQ(it->sdr, want.sdr_db);
      EXPECT_EQ(it->lsd, want.lsd);
    }
  }
  for (const auto& row : r.rows) {
    if (row.task == Task::declip && row.method == "clipped") {
      EXPECT_NEAR(row.sdr, 5.0, 0.01);
    }
  }

  const auto summary = summarize(r.rows);
  for (const auto& [key, cell] : summary) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : r.rows) {
      if (to_string(row.task) == std::get<0>(key) && row.severity == std::get<1>(key) && row.method == std::get<2>(key)) {
        sum += row.si_sdr;
        ++n;
      }
    }
    EXPECT_EQ(cell.n, n);
    EXPECT_NEAR(cell.si_sdr, sum / static_cast<double>(n), 1e-12);
  }

  std::ostringstream table;
  write_summary(r.rows, table);
  EXPECT_NE(table.str().find("Declipping"), std::string::npos);
  EXPECT_NE(table.str().find("Bandwidth extension"), std::string::npos);
  EXPECT_NE(table.str().find("n/a"), std::string::npos);
}

TEST(Harness, CsvIndependentOfThreadCount) {
  ExperimentSpec spec = small_spec();
  const auto items = load_dataset("synthetic:3", spec.segment_s, spec.seed);
  const GaussianPriorDenoiser d(Signal::zeros(items[0].signal.size(), 22050),
                                pink_spectrum(items[0].signal.size(), 22050, 0.01, 100.0));
  spec.threads = 1;
  const std::string one = csv_of(run_matrix(spec, items, d));
  spec.threads = 3;
  const std::string three = csv_of(run_matrix(spec, items, d));
  EXPECT_EQ(one, three);
  EXPECT_EQ(one.substr(0, one.find('\n')), "file,task,severity,method,si_sdr,sdr,lsd");
}

TEST(Harness, InfeasibleSeverityFailsWholeCell) {
  ExperimentSpec spec = small_spec();
  spec.tasks = {{Task::declip, 150.0}, {Task::bwe, 3000.0}};
  const auto items = load_dataset("synthetic:2", spec.segment_s, spec.seed);
  const GaussianPriorDenoiser d(Signal::zeros(items[0].signal.size(), 22050),
                                pink_spectrum(items[0].signal.size(), 22050, 0.01, 100.0));
  const MatrixResult r = run_matrix(spec, items, d);
  EXPECT_EQ(r.failed_cells, spec.methods.size() + 1);
  for (const auto& row : r.rows) {
    if (row.task == Task::declip) {
      EXPECT_FALSE(row.error.empty());
      EXPECT_TRUE(std::isnan(row.si_sdr));
    } else {
      EXPECT_TRUE(row.error.empty());
    }
  }
  EXPECT_NE(csv_of(r).find(",nan,nan,nan"), std::string::npos);
}

TEST(Harness, RejectsBadSpecs) {
  ExperimentSpec spec = small_spec();
  const auto items = load_dataset("synthetic:1", spec.segment_s, spec.seed);
  const IdentityDenoiser d;
  spec.methods = {"nonsense"};
  EXPECT_THROW(run_matrix(spec, items, d), ConfigError);
  spec = small_spec();
  spec.tasks = {};
  EXPECT_THROW(run_matrix(spec, items, d), std::invalid_argument);
  EXPECT_THROW(load_dataset("/nonexistent/dataset", 1.0, 0), IoError);
  EXPECT_THROW(load_dataset("synthetic:abc", 1.0, 0), ConfigError);
}

TEST(Harness, WavDirectoryDataset) {
  testutil::TempDir dir("ds");
  const Signal long_sig = testutil::random_signal(22050, 1, 0.2, 22050);
  const Signal short_sig = testutil::random_signal(1000, 2, 0.2, 22050);
  save_wav(long_sig, dir / "b.wav", WavEncoding::float32);
  save_wav(short_sig, dir / "a.WAV", WavEncoding::float32);
  std::ofstream(dir / "notes.txt") << "ignored";
  const auto items = load_dataset(dir.path().string(), 0.1, 9);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].name, "a.WAV");
  EXPECT_EQ(items[0].signal.size(), 1000u);
  EXPECT_EQ(items[1].name, "b.wav");
  ASSERT_EQ(items[1].signal.size(), 2205u);
  const Signal loaded = load_wav(dir / "b.wav");
  const auto& full = loaded.vec();
  const auto& seg = items[1].signal.vec();
  const auto pos = std::search(full.begin(), full.end(), seg.begin(), seg.end());
  EXPECT_NE(pos, full.end());
  EXPECT_EQ(load_dataset(dir.path().string(), 0.1, 9)[1].signal.vec(), seg);

  testutil::TempDir empty("ds-empty");
  EXPECT_THROW(load_dataset(empty.path().string(), 0.1, 0), IoError);
}
