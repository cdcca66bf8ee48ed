// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "dpsaudio/config.hpp"
#include "dpsaudio/degradation.hpp"
#include "dpsaudio/denoiser.hpp"
#include "dpsaudio/metrics.hpp"
#include "dpsaudio/sampler.hpp"
#include "dpsaudio/synth.hpp"
#include "dpsaudio/wav.hpp"

namespace dpsaudio {

// One severity of one task: SDR in dB for declip, cutoff in Hz for bwe.
struct TaskCell {
  Task task = Task::declip;
  double severity = 5.0;
};

struct ExperimentSpec {
  std::vector<TaskCell> tasks = {{Task::declip, 5.0}, {Task::declip, 10.0}, {Task::bwe, 3000.0}, {Task::bwe, 5000.0}};
  std::vector<std::string> methods = matrix_methods();
  std::string dataset = "synthetic:20";
  std::uint64_t seed = 0;
  double segment_s = 2.97;
  ScheduleParams schedule;
  double sigma_y = 0.0;
  std::size_t threads = 1;
};

struct DatasetItem {
  std::string name;
  Signal signal;
};

struct ResultRow {
  std::string file;
  Task task = Task::declip;
  double severity = 0.0;
  std::string method;  // "clipped" / "lpf" for the degraded-input baseline
  double si_sdr = 0.0;
  double sdr = 0.0;
  double lsd = 0.0;
  std::string error;   // non-empty when this item failed
};

struct MatrixResult {
  std::vector<ResultRow> rows;
  std::size_t failed_cells = 0;  // cells in which every item failed
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

inline std::string baseline_name(Task task) { return task == Task::declip ? "clipped" : "lpf"; }

// "synthetic:<n>" builds the harmonic corpus; anything else is a directory of
// WAV files, each cut to one seeded random segment of `segment_s`.
inline std::vector<DatasetItem> load_dataset(const std::string& dataset, double segment_s, std::uint64_t seed) {
  std::vector<DatasetItem> items;
  const std::string prefix = "synthetic:";
  if (dataset.rfind(prefix, 0) == 0) {
    const std::string count = dataset.substr(prefix.size());
    SyntheticVoiceSpec spec;
    spec.n_items = detail::parse_count("synthetic item count", count);
    spec.duration_s = segment_s;
    for (auto& it : synth_corpus(spec, seed)) items.push_back({it.name, std::move(it.signal)});
    return items;
  }
  const std::filesystem::path dir(dataset);
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset '" + dataset + "' is neither synthetic:<n> nor a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("dataset directory '" + dataset + "' has no .wav files");
  for (std::size_t n = 0; n < files.size(); ++n) {
    Signal full = load_wav(files[n]);
    const auto len = static_cast<std::size_t>(std::llround(segment_s * full.sample_rate()));
    if (len == 0) throw std::invalid_argument("segment length rounds to zero samples");
    if (full.size() <= len) {
      items.push_back({files[n].filename().string(), std::move(full)});
      continue;
    }
    std::mt19937_64 rng(mix_seed(seed, {n}));
    std::uniform_int_distribution<std::size_t> start_dist(0, full.size() - len);
    const std::size_t start = start_dist(rng);
    std::vector<double> seg(full.vec().begin() + static_cast<std::ptrdiff_t>(start),
                            full.vec().begin() + static_cast<std::ptrdiff_t>(start + len));
    items.push_back({files[n].filename().string(), full.with_samples(std::move(seg))});
  }
  return items;
}

// Shrinkage denoiser trained on a synthetic corpus disjoint from the test
// corpus (different seed) with matching segment length.
inline ShrinkageDenoiser train_default_denoiser(double segment_s, std::uint64_t seed, const ScheduleParams& schedule,
                                                std::size_t n_items = 40) {
  SyntheticVoiceSpec spec;
  spec.n_items = n_items;
  spec.duration_s = segment_s;
  std::vector<Signal> data;
  for (auto& it : synth_corpus(spec, mix_seed(seed, {0x7472616eULL}))) data.push_back(std::move(it.signal));
  return train_shrinkage(data, NoiseSchedule(schedule), linear_bands(256, spec.sample_rate));
}

inline Measurement degrade_for(const TaskCell& cell, const Signal& x, double sigma_y, std::uint64_t seed) {
  if (cell.task == Task::declip) {
    const ClipCalibration cal = clip_for_sdr(x, cell.severity);
    return degrade(std::make_shared<HardClip>(cal.op), x, sigma_y, seed);
  }
  return degrade(std::make_shared<BrickwallLPF>(cell.severity), x, sigma_y, seed);
}

inline ResultRow score_row(const std::string& file, const TaskCell& cell, const std::string& method,
                           const Signal& reference, const Signal& estimate) {
  const MetricReport m = evaluate(reference, estimate, file);
  return ResultRow{file, cell.task, cell.severity, method, m.si_sdr_db, m.sdr_db, m.lsd, {}};
}

inline bool row_less(const ResultRow& a, const ResultRow& b) {
  return std::make_tuple(to_string(a.task), a.severity, a.method, a.file) <
         std::make_tuple(to_string(b.task), b.severity, b.method, b.file);
}

// Every (item, cell) pair is one job: degrade once, then the baseline row and
// one restoration per method. Jobs run on `threads` workers; rows are sorted
// before returning so the output does not depend on scheduling.
inline MatrixResult run_matrix(const ExperimentSpec& spec, const std::vector<DatasetItem>& items,
                               const Denoiser& denoiser) {
  if (spec.tasks.empty()) throw std::invalid_argument("run_matrix: no tasks");
  for (const auto& c : spec.tasks) {
    if (!(c.severity > 0.0)) throw std::invalid_argument("run_matrix: severities must be positive");
  }
  for (const auto& m : spec.methods) preset(m, Task::declip);
  const NoiseSchedule schedule(spec.schedule);

  const std::size_t per_job = spec.methods.size() + 1;
  const std::size_t jobs = items.size() * spec.tasks.size();
  std::vector<ResultRow> rows(jobs * per_job);

  auto run_job = [&](std::size_t job) {
    const std::size_t item_idx = job / spec.tasks.size();
    const std::size_t cell_idx = job % spec.tasks.size();
    const DatasetItem& item = items[item_idx];
    const TaskCell& cell = spec.tasks[cell_idx];
    ResultRow* out = &rows[job * per_job];
    auto fail = [&](std::size_t slot, const std::string& method, const std::string& what) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      out[slot] = ResultRow{item.name, cell.task, cell.severity, method, nan, nan, nan, what};
    };
    Measurement meas;
    try {
      meas = degrade_for(cell, item.signal, spec.sigma_y, mix_seed(spec.seed, {item_idx, cell_idx, 0}));
      out[0] = score_row(item.name, cell, baseline_name(cell.task), item.signal, meas.y);
    } catch (const std::exception& e) {
      fail(0, baseline_name(cell.task), e.what());
      for (std::size_t m = 0; m < spec.methods.size(); ++m) fail(m + 1, spec.methods[m], e.what());
      return;
    }
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
      try {
        SamplerConfig cfg = preset(spec.methods[m], cell.task);
        cfg.seed = mix_seed(spec.seed, {item_idx, cell_idx, m + 1});
        const RestoreResult r = restore(meas, denoiser, cfg, schedule);
        out[m + 1] = score_row(item.name, cell, spec.methods[m], item.signal, r.estimate);
      } catch (const std::exception& e) {
        fail(m + 1, spec.methods[m], e.what());
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(spec.threads, jobs));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t j = next++; j < jobs; j = next++) run_job(j);
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::sort(rows.begin(), rows.end(), row_less);
  MatrixResult result;
  result.rows = std::move(rows);
  std::map<std::tuple<std::string, double, std::string>, std::pair<std::size_t, std::size_t>> cells;
  for (const auto& r : result.rows) {
    auto& c = cells[{to_string(r.task), r.severity, r.method}];
    ++c.first;
    if (!r.error.empty()) ++c.second;
  }
  for (const auto& [key, c] : cells) {
    if (c.first == c.second) ++result.failed_cells;
  }
  return result;
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << "file,task,severity,method,si_sdr,sdr,lsd\n";
  for (const auto& r : rows) {
    out << r.file << ',' << to_string(r.task) << ',' << format_number(r.severity) << ',' << r.method << ','
        << format_number(r.si_sdr) << ',' << format_number(r.sdr) << ',' << format_number(r.lsd) << '\n';
  }
}

struct SummaryCell {
  double si_sdr = 0.0;
  double sdr = 0.0;
  double lsd = 0.0;
  std::size_t n = 0;       // successful items
  std::size_t failed = 0;
};

// Mean of the successful rows per (task, severity, method).
inline std::map<std::tuple<std::string, double, std::string>, SummaryCell> summarize(const std::vector<ResultRow>& rows) {
  std::map<std::tuple<std::string, double, std::string>, SummaryCell> cells;
  for (const auto& r : rows) {
    auto& c = cells[{to_string(r.task), r.severity, r.method}];
    if (!r.error.empty()) {
      ++c.failed;
      continue;
    }
    c.si_sdr += r.si_sdr;
    c.sdr += r.sdr;
    c.lsd += r.lsd;
    ++c.n;
  }
  for (auto& [key, c] : cells) {
    const double n = c.n > 0 ? static_cast<double>(c.n) : std::numeric_limits<double>::quiet_NaN();
    c.si_sdr /= n;
    c.sdr /= n;
    c.lsd /= n;
  }
  return cells;
}

// One block per task: a row per method (baseline first), a column per severity.
inline void write_summary(const std::vector<ResultRow>& rows, std::ostream& out) {
  const auto cells = summarize(rows);
  for (const std::string task : {"declip", "bwe"}) {
    std::vector<double> severities;
    std::vector<std::string> methods;
    for (const auto& [key, c] : cells) {
      if (std::get<0>(key) != task) continue;
      if (std::find(severities.begin(), severities.end(), std::get<1>(key)) == severities.end()) {
        severities.push_back(std::get<1>(key));
      }
      if (std::find(methods.begin(), methods.end(), std::get<2>(key)) == methods.end()) {
        methods.push_back(std::get<2>(key));
      }
    }
    if (severities.empty()) continue;
    const std::string base = task == "declip" ? "clipped" : "lpf";
    std::stable_partition(methods.begin(), methods.end(), [&](const std::string& m) { return m == base; });
    char buf[128];
    out << (task == "declip" ? "Declipping" : "Bandwidth extension") << '\n';
    std::snprintf(buf, sizeof buf, "%-16s", "method");
    out << buf;
    for (double s : severities) {
      const std::string head = task == "declip" ? "SDR=" + format_number(s) + "dB" : "fc=" + format_number(s) + "Hz";
      std::snprintf(buf, sizeof buf, " | %-28s", head.c_str());
      out << buf;
    }
    out << '\n';
    std::snprintf(buf, sizeof buf, "%-16s", "");
    out << buf;
    for (std::size_t i = 0; i < severities.size(); ++i) {
      std::snprintf(buf, sizeof buf, " | %8s %8s %8s  ", "SI-SDR", "LSD", "FAD");
      out << buf;
    }
    out << '\n';
    for (const auto& m : methods) {
      std::snprintf(buf, sizeof buf, "%-16s", m.c_str());
      out << buf;
      for (double s : severities) {
        auto it = cells.find({task, s, m});
        if (it == cells.end()) {
          std::snprintf(buf, sizeof buf, " | %8s %8s %8s  ", "-", "-", "n/a");
        } else {
          std::snprintf(buf, sizeof buf, " | %8.3f %8.3f %8s  ", it->second.si_sdr, it->second.lsd, "n/a");
        }
        out << buf;
      }
      out << '\n';
    }
    out << '\n';
  }
}

}  // namespace dpsaudio
