// SPDX-License-Identifier: Apache-2.0
// dpsaudio: degrade, restore, evaluate, train-denoiser, run-matrix, oracle-check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpsaudio/dpsaudio.hpp"

namespace fs = std::filesystem;
using namespace dpsaudio;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitAcceptance = 3;

// Thrown for flag combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

WavEncoding parse_encoding(const std::string& s) {
  if (s == "float32") return WavEncoding::float32;
  if (s == "pcm16") return WavEncoding::pcm16;
  throw UsageError("--encoding must be float32 or pcm16");
}

void write_wav(const Signal& s, const fs::path& path, WavEncoding enc) {
  const WavWriteReport rep = save_wav(s, path, enc);
  if (rep.limited_samples > 0) {
    std::cerr << "warning: " << rep.limited_samples << " samples outside [-1, 1] hard-limited in " << path.string()
              << "\n";
  }
}

std::string num(double v) { return format_number(v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::shared_ptr<const Denoiser> make_denoiser(const std::string& spec, const Signal& like) {
  if (spec == "gaussian:flat") {
    return std::make_shared<GaussianPriorDenoiser>(Signal::zeros(like.size(), like.sample_rate()),
                                                   flat_spectrum(like.size(), 0.01));
  }
  if (spec == "gaussian:pink") {
    return std::make_shared<GaussianPriorDenoiser>(Signal::zeros(like.size(), like.sample_rate()),
                                                   pink_spectrum(like.size(), like.sample_rate(), 0.01, 100.0));
  }
  return std::make_shared<ShrinkageDenoiser>(load_shrinkage(spec));
}

// ---- degrade -------------------------------------------------------------

struct DegradeArgs {
  std::string task;
  std::optional<double> sdr;
  std::optional<double> fc;
  std::string in;
  std::string out;
  std::uint64_t seed = 0;
  double sigma_y = 0.0;
  std::string encoding = "float32";
};

int cmd_degrade(const DegradeArgs& a) {
  const Signal x = load_wav(a.in);
  const Task task = parse_task(a.task);
  std::shared_ptr<const DegradationOp> op;
  std::ostringstream report;
  if (task == Task::declip) {
    if (!a.sdr) throw UsageError("--task declip needs --sdr");
    const ClipCalibration cal = clip_for_sdr(x, *a.sdr);
    op = std::make_shared<HardClip>(cal.op);
    report << "clip_level=" << num(cal.op.threshold()) << " sdr_db=" << num(cal.achieved_sdr_db);
  } else {
    if (!a.fc) throw UsageError("--task bwe needs --fc");
    op = std::make_shared<BrickwallLPF>(*a.fc);
    report << "fc_hz=" << num(*a.fc);
  }
  const Measurement m = degrade(op, x, a.sigma_y, a.seed);
  write_wav(m.y, a.out, parse_encoding(a.encoding));
  std::cout << report.str() << " sigma_y=" << num(a.sigma_y) << " seed=" << a.seed << "\n";
  return kExitOk;
}

// ---- restore ---------------------------------------------------------------

struct RestoreArgs {
  std::string config;
  std::string in;
  std::string out;
  std::string trace;
  std::optional<std::string> preset;
  std::optional<std::string> task;
  std::optional<std::uint64_t> seed;
  std::optional<double> clip_level;
  std::optional<double> fc;
  std::optional<std::string> denoiser;
  std::string encoding = "float32";
};

fs::path default_trace_path(const fs::path& out) {
  fs::path p = out;
  p.replace_extension(".trace.csv");
  return p;
}

int cmd_restore(const RestoreArgs& a) {
  RestoreConfig cfg = load_config(a.config);
  if (a.task) cfg.task = parse_task(*a.task);
  if (a.preset) {
    cfg.preset = *a.preset;
    const std::uint64_t seed = cfg.sampler.seed;
    cfg.sampler = preset(*a.preset, cfg.task);
    cfg.sampler.seed = seed;
  }
  if (a.seed) cfg.sampler.seed = *a.seed;
  if (a.clip_level) cfg.clip_level = *a.clip_level;
  if (a.fc) cfg.fc_hz = *a.fc;
  if (a.denoiser) cfg.denoiser = *a.denoiser;

  const Signal y = load_wav(a.in);
  Measurement meas;
  meas.y = y;
  meas.sigma_y = cfg.sigma_y;
  if (cfg.task == Task::declip) {
    // Without an explicit level the clipped input's peak is the threshold.
    meas.op = std::make_shared<HardClip>(cfg.clip_level.value_or(max_abs(y)));
  } else {
    if (!cfg.fc_hz) throw UsageError("bwe restore needs fc (config [task] fc or --fc)");
    meas.op = std::make_shared<BrickwallLPF>(*cfg.fc_hz);
  }
  const auto denoiser = make_denoiser(cfg.denoiser, y);
  const NoiseSchedule schedule(cfg.schedule);
  const fs::path trace_path = a.trace.empty() ? default_trace_path(a.out) : fs::path(a.trace);
  try {
    const RestoreResult r = restore(meas, *denoiser, cfg.sampler, schedule);
    write_wav(r.estimate, a.out, parse_encoding(a.encoding));
    std::ostringstream csv;
    r.trace.write_csv(csv);
    write_text(trace_path, csv.str());
    std::cout << "steps=" << r.trace.records.size() << " final_residual=" << num(r.trace.records.back().residual)
              << " trace=" << trace_path.string() << "\n";
  } catch (const RestoreError& e) {
    std::ostringstream csv;
    e.trace().write_csv(csv);
    write_text(trace_path, csv.str());
    throw;
  }
  return kExitOk;
}

// ---- evaluate ----------------------------------------------------------------

struct EvaluateArgs {
  std::string ref;
  std::vector<std::string> est;
  std::size_t window = 1024;
  std::size_t hop = 256;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const Signal ref = load_wav(a.ref);
  std::cout << "file,si_sdr,sdr,lsd\n";
  for (const auto& path : a.est) {
    const Signal est = load_wav(path);
    std::cout << path << ',' << num(si_sdr(ref, est)) << ',' << num(sdr(ref, est)) << ','
              << num(lsd(ref, est, a.window, a.hop)) << '\n';
  }
  return kExitOk;
}

// ---- train-denoiser ------------------------------------------------------------

struct TrainArgs {
  std::string dataset = "synthetic:40";
  double segment_s = 2.97;
  std::uint64_t seed = 0;
  std::size_t bands = 256;
  std::size_t sigma_bins = 32;
  std::string config;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  const ScheduleParams params = a.config.empty() ? ScheduleParams{} : load_config(a.config).schedule;
  const auto items = load_dataset(a.dataset, a.segment_s, a.seed);
  std::vector<Signal> data;
  for (const auto& it : items) data.push_back(it.signal);
  if (data.empty()) throw std::invalid_argument("train-denoiser: dataset is empty");
  BandSpec bands = linear_bands(a.bands, data.front().sample_rate(), a.sigma_bins);
  const ShrinkageDenoiser d = train_shrinkage(data, NoiseSchedule(params), bands);
  save_shrinkage(d, a.out);
  std::cout << "items=" << data.size() << " bands=" << d.bands() << " sigma_bins=" << d.sigma_bins().size()
            << " out=" << a.out << "\n";
  return kExitOk;
}

// ---- run-matrix ------------------------------------------------------------------

struct MatrixArgs {
  std::string dataset = "synthetic:20";
  double segment_s = 2.97;
  std::uint64_t seed = 0;
  std::string tasks = "declip:5,declip:10,bwe:3000,bwe:5000";
  std::string methods;
  std::string denoiser;
  std::string config;
  std::size_t threads = 1;
  double sigma_y = 0.0;
  std::string csv;
  std::string summary;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

int cmd_matrix(const MatrixArgs& a) {
  ExperimentSpec spec;
  spec.dataset = a.dataset;
  spec.segment_s = a.segment_s;
  spec.seed = a.seed;
  spec.threads = a.threads;
  spec.sigma_y = a.sigma_y;
  if (!a.config.empty()) spec.schedule = load_config(a.config).schedule;
  spec.tasks.clear();
  for (const auto& t : split(a.tasks, ',')) {
    const auto colon = t.find(':');
    if (colon == std::string::npos) throw UsageError("--tasks entries look like declip:5 or bwe:3000");
    spec.tasks.push_back({parse_task(t.substr(0, colon)), detail::parse_double("severity", t.substr(colon + 1))});
  }
  if (!a.methods.empty()) spec.methods = split(a.methods, ',');

  const auto items = load_dataset(spec.dataset, spec.segment_s, spec.seed);
  std::shared_ptr<const Denoiser> denoiser;
  if (a.denoiser.empty()) {
    denoiser = std::make_shared<ShrinkageDenoiser>(train_default_denoiser(spec.segment_s, spec.seed, spec.schedule));
  } else {
    denoiser = make_denoiser(a.denoiser, items.front().signal);
  }
  const MatrixResult res = run_matrix(spec, items, *denoiser);

  std::ostringstream csv;
  write_results_csv(res.rows, csv);
  if (a.csv.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.csv, csv.str());
  }
  std::ostringstream summary;
  write_summary(res.rows, summary);
  if (a.summary.empty()) {
    (a.csv.empty() ? std::cerr : std::cout) << summary.str();
  } else {
    write_text(a.summary, summary.str());
  }
  for (const auto& r : res.rows) {
    if (!r.error.empty()) std::cerr << "error: item " << r.file << " " << r.method << ": " << r.error << "\n";
  }
  if (res.failed_cells > 0) {
    std::cerr << "error: run-matrix: " << res.failed_cells << " cells failed on every item\n";
    return kExitRuntime;
  }
  return kExitOk;
}

// ---- oracle-check ------------------------------------------------------------------

struct OracleArgs {
  bool skip_e2e = false;
  AcceptanceOptions opt;
};

int cmd_oracle(const OracleArgs& a) {
  AcceptanceOptions opt = a.opt;
  opt.include_end_to_end = !a.skip_e2e;
  bool ok = true;
  run_acceptance(opt, [&](const CriterionResult& r) {
    ok = ok && r.passed;
    std::cout << format_result(r) << std::endl;
  });
  if (a.skip_e2e) std::cout << "SKIP  End-to-end improvement (--skip-e2e)\n";
  return ok ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion posterior sampling for audio declipping and bandwidth extension"};
  app.require_subcommand(1);

  DegradeArgs dg;
  auto* degrade_cmd = app.add_subcommand("degrade", "Clip or low-pass a WAV file");
  degrade_cmd->add_option("--task", dg.task, "declip or bwe")->required()->check(CLI::IsMember({"declip", "bwe"}));
  degrade_cmd->add_option("--sdr", dg.sdr, "Target clipping SDR in dB (declip)");
  degrade_cmd->add_option("--fc", dg.fc, "Cutoff in Hz (bwe)");
  degrade_cmd->add_option("--in", dg.in, "Input WAV")->required()->check(CLI::ExistingFile);
  degrade_cmd->add_option("--out", dg.out, "Output WAV")->required();
  degrade_cmd->add_option("--seed", dg.seed, "Measurement noise seed");
  degrade_cmd->add_option("--sigma-y", dg.sigma_y, "Measurement noise std")->check(CLI::NonNegativeNumber);
  degrade_cmd->add_option("--encoding", dg.encoding, "float32 or pcm16")->check(CLI::IsMember({"float32", "pcm16"}));

  RestoreArgs rs;
  auto* restore_cmd = app.add_subcommand("restore", "Restore a degraded WAV file");
  restore_cmd->add_option("--config", rs.config, "Config file")->required()->check(CLI::ExistingFile);
  restore_cmd->add_option("--in", rs.in, "Degraded WAV")->required()->check(CLI::ExistingFile);
  restore_cmd->add_option("--out", rs.out, "Restored WAV")->required();
  restore_cmd->add_option("--trace", rs.trace, "Trace CSV (default: <out>.trace.csv)");
  restore_cmd->add_option("--preset", rs.preset, "Override the config preset")->check(CLI::IsMember(preset_names()));
  restore_cmd->add_option("--task", rs.task, "Override the task")->check(CLI::IsMember({"declip", "bwe"}));
  restore_cmd->add_option("--seed", rs.seed, "Override the sampler seed");
  restore_cmd->add_option("--clip-level", rs.clip_level, "Clip threshold (declip; default max|y|)");
  restore_cmd->add_option("--fc", rs.fc, "Cutoff in Hz (bwe)");
  restore_cmd->add_option("--denoiser", rs.denoiser, "Denoiser file or gaussian:flat / gaussian:pink");
  restore_cmd->add_option("--encoding", rs.encoding, "float32 or pcm16")->check(CLI::IsMember({"float32", "pcm16"}));

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "SI-SDR, SDR and LSD of estimates against a reference");
  eval_cmd->add_option("--ref", ev.ref, "Reference WAV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--est", ev.est, "Estimate WAV(s)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--window", ev.window, "LSD STFT window")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--hop", ev.hop, "LSD STFT hop")->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train-denoiser", "Fit a spectral shrinkage denoiser");
  train_cmd->add_option("--dataset", tr.dataset, "synthetic:<n> or a WAV directory");
  train_cmd->add_option("--segment", tr.segment_s, "Segment length in seconds")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.seed, "Corpus / segment seed");
  train_cmd->add_option("--bands", tr.bands, "Number of linear bands")->check(CLI::PositiveNumber);
  train_cmd->add_option("--sigma-bins", tr.sigma_bins, "Noise-level grid size")->check(CLI::Range(2, 100000));
  train_cmd->add_option("--config", tr.config, "Config supplying the noise schedule")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "Output denoiser file")->required();

  MatrixArgs mx;
  auto* matrix_cmd = app.add_subcommand("run-matrix", "Method x task x severity comparison");
  matrix_cmd->add_option("--dataset", mx.dataset, "synthetic:<n> or a WAV directory");
  matrix_cmd->add_option("--segment", mx.segment_s, "Segment length in seconds")->check(CLI::PositiveNumber);
  matrix_cmd->add_option("--seed", mx.seed, "Experiment seed");
  matrix_cmd->add_option("--tasks", mx.tasks, "Comma list of task:severity");
  matrix_cmd->add_option("--methods", mx.methods, "Comma list of presets (default: the five comparison methods)");
  matrix_cmd->add_option("--denoiser", mx.denoiser, "Denoiser file (default: train on a synthetic corpus)");
  matrix_cmd->add_option("--config", mx.config, "Config supplying the noise schedule")->check(CLI::ExistingFile);
  matrix_cmd->add_option("--threads", mx.threads, "Worker threads")->check(CLI::PositiveNumber);
  matrix_cmd->add_option("--sigma-y", mx.sigma_y, "Measurement noise std")->check(CLI::NonNegativeNumber);
  matrix_cmd->add_option("--csv", mx.csv, "Per-item CSV (default: stdout)");
  matrix_cmd->add_option("--summary", mx.summary, "Summary table file");

  OracleArgs oc;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Run the acceptance criteria");
  oracle_cmd->add_flag("--skip-e2e", oc.skip_e2e, "Skip the end-to-end improvement criterion");
  oracle_cmd->add_option("--e2e-items", oc.opt.e2e_items, "Synthetic items for end-to-end and calibration");
  oracle_cmd->add_option("--e2e-segment", oc.opt.e2e_segment_s, "Synthetic item length in seconds")
      ->check(CLI::PositiveNumber);
  oracle_cmd->add_option("--seed", oc.opt.seed, "Corpus seed");
  oracle_cmd->add_option("--threads", oc.opt.threads, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (*degrade_cmd) return cmd_degrade(dg);
    if (*restore_cmd) return cmd_restore(rs);
    if (*eval_cmd) return cmd_evaluate(ev);
    if (*train_cmd) return cmd_train(tr);
    if (*matrix_cmd) return cmd_matrix(mx);
    if (*oracle_cmd) return cmd_oracle(oc);
  } catch (const UsageError& e) {
    std::cerr << "error: " << name << ": usage: " << e.what() << "\n"
              << app.get_subcommands().front()->help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << name << ": config: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << name << ": " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
