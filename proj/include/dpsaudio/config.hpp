// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dpsaudio/sampler.hpp"
#include "dpsaudio/schedule.hpp"
#include "dpsaudio/signal.hpp"

namespace dpsaudio {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Task { declip, bwe };

inline std::string to_string(Task t) { return t == Task::declip ? "declip" : "bwe"; }

inline Task parse_task(const std::string& s) {
  if (s == "declip") return Task::declip;
  if (s == "bwe") return Task::bwe;
  throw ConfigError("unknown task '" + s + "' (expected declip or bwe)");
}

// Everything a restoration run needs besides the audio itself.
struct RestoreConfig {
  ScheduleParams schedule;
  SamplerConfig sampler;
  std::string preset;               // empty when no preset was named
  Task task = Task::declip;
  std::optional<double> sdr_db;     // declip severity, used by degrade
  std::optional<double> fc_hz;      // bwe cutoff
  std::optional<double> clip_level; // declip threshold; defaults to max|y|
  double sigma_y = 0.0;
  std::string denoiser = "gaussian:pink";
};

// Named method recipes. rho' values are our own, tuned once on the synthetic
// corpus; RP windows follow the per-task values of the method description.
inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"none", "rg", "rg-dc", "rg-drho-dc", "pigdm-dc", "rg-drho-dc-rp"};
  return names;
}

// The five comparison methods of the experiment matrix.
inline const std::vector<std::string>& matrix_methods() {
  static const std::vector<std::string> names = {"rg", "rg-dc", "rg-drho-dc", "pigdm-dc", "rg-drho-dc-rp"};
  return names;
}

inline double preset_rho_prime(Task) { return 10.0; }

inline RepaintConfig preset_repaint(Task task) {
  RepaintConfig rp;
  rp.enabled = true;
  if (task == Task::declip) {
    rp.u = 10;
    rp.phi1 = 1.5;
    rp.phi2 = 2.8;
  } else {
    rp.u = 5;
    rp.phi1 = 2.5;
    rp.phi2 = 2.8;
  }
  return rp;
}

inline SamplerConfig preset(const std::string& name, Task task) {
  SamplerConfig cfg;
  cfg.guidance.rho_prime = preset_rho_prime(task);
  if (name == "none") return cfg;
  if (name == "rg") {
    cfg.guidance.kind = GuidanceKind::rg;
  } else if (name == "rg-dc") {
    cfg.guidance.kind = GuidanceKind::rg;
    cfg.dc_enabled = true;
  } else if (name == "rg-drho-dc") {
    cfg.guidance.kind = GuidanceKind::rg;
    cfg.guidance.delta_rho_enabled = true;
    cfg.dc_enabled = true;
  } else if (name == "pigdm-dc") {
    cfg.guidance.kind = GuidanceKind::pigdm;
    cfg.dc_enabled = true;
  } else if (name == "rg-drho-dc-rp") {
    cfg.guidance.kind = GuidanceKind::rg;
    cfg.guidance.delta_rho_enabled = true;
    cfg.dc_enabled = true;
    cfg.rp = preset_repaint(task);
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return cfg;
}

namespace detail {

inline double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("config: '" + key + "' is not a number: '" + text + "'");
  return v;
}

inline long long parse_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("config: '" + key + "' is not an integer: '" + text + "'");
  return v;
}

inline std::size_t parse_count(const std::string& key, const std::string& text) {
  const long long v = parse_int(key, text);
  if (v < 0) throw ConfigError("config: '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "on" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "off" || text == "no" || text == "0") return false;
  throw ConfigError("config: '" + key + "' is not a boolean: '" + text + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// INI-style text: [section] headers, key = value lines, '#' or ';' comments.
// [sampler] preset is applied first; every other key overrides it. Unknown
// sections and keys are rejected.
inline RestoreConfig parse_config(const std::string& text) {
  // The INI reader only understands ';' comments.
  std::istringstream lines(text);
  std::ostringstream cleaned;
  for (std::string line; std::getline(lines, line);) {
    const std::string t = detail::trim(line);
    cleaned << (t.empty() || t[0] == '#' ? std::string() : line) << '\n';
  }
  boost::property_tree::ptree tree;
  std::istringstream in(cleaned.str());
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }

  std::map<std::string, std::map<std::string, std::string>> kv;
  static const std::vector<std::string> sections = {"task", "schedule", "guidance", "sampler", "repaint"};
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("config: key '" + section + "' outside any section");
    if (std::find(sections.begin(), sections.end(), section) == sections.end()) {
      throw ConfigError("config: unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) kv[section][key] = detail::trim(value.data());
  }
  auto take = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
    auto s = kv.find(section);
    if (s == kv.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    std::string v = k->second;
    s->second.erase(k);
    return v;
  };

  RestoreConfig cfg;
  if (auto v = take("task", "task")) cfg.task = parse_task(*v);
  if (auto v = take("sampler", "preset")) {
    cfg.preset = *v;
    cfg.sampler = preset(*v, cfg.task);
  }

  auto& sp = cfg.schedule;
  if (auto v = take("schedule", "steps")) sp.steps = detail::parse_count("steps", *v);
  if (auto v = take("schedule", "nu")) sp.nu = detail::parse_double("nu", *v);
  if (auto v = take("schedule", "sigma_min")) sp.sigma_min = detail::parse_double("sigma_min", *v);
  if (auto v = take("schedule", "sigma_max")) sp.sigma_max = detail::parse_double("sigma_max", *v);
  if (auto v = take("schedule", "s_churn")) sp.s_churn = detail::parse_double("s_churn", *v);
  if (auto v = take("schedule", "s_noise")) sp.s_noise = detail::parse_double("s_noise", *v);
  if (auto v = take("schedule", "s_tmin")) sp.s_tmin = detail::parse_double("s_tmin", *v);
  if (auto v = take("schedule", "s_tmax")) sp.s_tmax = detail::parse_double("s_tmax", *v);

  auto& g = cfg.sampler.guidance;
  if (auto v = take("guidance", "guidance")) {
    if (*v == "none") g.kind = GuidanceKind::none;
    else if (*v == "rg") g.kind = GuidanceKind::rg;
    else if (*v == "pigdm") g.kind = GuidanceKind::pigdm;
    else throw ConfigError("config: guidance must be none, rg or pigdm, got '" + *v + "'");
  }
  if (auto v = take("guidance", "rho_prime")) g.rho_prime = detail::parse_double("rho_prime", *v);
  if (auto v = take("guidance", "delta_rho")) g.delta_rho_enabled = detail::parse_bool("delta_rho", *v);
  if (auto v = take("guidance", "delta_rho_divisor")) g.delta_rho_divisor = detail::parse_double("delta_rho_divisor", *v);
  if (auto v = take("guidance", "rho_time_convention")) {
    if (*v == "noise-level") g.rho_time_convention = RhoTimeConvention::noise_level;
    else if (*v == "countdown-index") g.rho_time_convention = RhoTimeConvention::countdown_index;
    else throw ConfigError("config: rho_time_convention must be noise-level or countdown-index");
  }
  if (auto v = take("guidance", "grad_norm_power")) {
    g.grad_norm_power = static_cast<int>(detail::parse_int("grad_norm_power", *v));
  }

  auto& s = cfg.sampler;
  if (auto v = take("sampler", "order")) s.order = static_cast<int>(detail::parse_int("order", *v));
  if (auto v = take("sampler", "seed")) s.seed = static_cast<std::uint64_t>(detail::parse_int("seed", *v));
  if (auto v = take("sampler", "dc")) s.dc_enabled = detail::parse_bool("dc", *v);
  if (auto v = take("sampler", "dc_order")) {
    if (*v == "post") s.dc_order = DcOrder::post;
    else if (*v == "pre") s.dc_order = DcOrder::pre;
    else throw ConfigError("config: dc_order must be post or pre");
  }
  if (auto v = take("sampler", "denoiser")) cfg.denoiser = *v;

  if (auto v = take("repaint", "enabled")) s.rp.enabled = detail::parse_bool("enabled", *v);
  if (auto v = take("repaint", "u")) s.rp.u = detail::parse_count("u", *v);
  if (auto v = take("repaint", "phi1")) s.rp.phi1 = detail::parse_double("phi1", *v);
  if (auto v = take("repaint", "phi2")) s.rp.phi2 = detail::parse_double("phi2", *v);

  if (auto v = take("task", "sdr")) cfg.sdr_db = detail::parse_double("sdr", *v);
  if (auto v = take("task", "fc")) cfg.fc_hz = detail::parse_double("fc", *v);
  if (auto v = take("task", "clip_level")) cfg.clip_level = detail::parse_double("clip_level", *v);
  if (auto v = take("task", "sigma_y")) cfg.sigma_y = detail::parse_double("sigma_y", *v);

  for (const auto& [section, keys] : kv) {
    for (const auto& [key, value] : keys) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
  }
  if (!(cfg.sigma_y >= 0.0)) throw ConfigError("config: sigma_y must be >= 0");
  cfg.sampler.validate();
  NoiseSchedule check(cfg.schedule);
  return cfg;
}

inline RestoreConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

// Writes a config that parse_config reads back to the same values.
inline std::string format_config(const RestoreConfig& cfg) {
  auto num = [](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  };
  const auto& g = cfg.sampler.guidance;
  const auto& s = cfg.sampler;
  std::ostringstream out;
  out << "[task]\n"
      << "task = " << to_string(cfg.task) << "\n";
  if (cfg.sdr_db) out << "sdr = " << num(*cfg.sdr_db) << "\n";
  if (cfg.fc_hz) out << "fc = " << num(*cfg.fc_hz) << "\n";
  if (cfg.clip_level) out << "clip_level = " << num(*cfg.clip_level) << "\n";
  out << "sigma_y = " << num(cfg.sigma_y) << "\n\n"
      << "[schedule]\n"
      << "steps = " << cfg.schedule.steps << "\n"
      << "nu = " << num(cfg.schedule.nu) << "\n"
      << "sigma_min = " << num(cfg.schedule.sigma_min) << "\n"
      << "sigma_max = " << num(cfg.schedule.sigma_max) << "\n"
      << "s_churn = " << num(cfg.schedule.s_churn) << "\n"
      << "s_noise = " << num(cfg.schedule.s_noise) << "\n"
      << "s_tmin = " << num(cfg.schedule.s_tmin) << "\n"
      << "s_tmax = " << num(cfg.schedule.s_tmax) << "\n\n"
      << "[guidance]\n"
      << "guidance = " << (g.kind == GuidanceKind::none ? "none" : g.kind == GuidanceKind::rg ? "rg" : "pigdm") << "\n"
      << "rho_prime = " << num(g.rho_prime) << "\n"
      << "delta_rho = " << (g.delta_rho_enabled ? "true" : "false") << "\n"
      << "delta_rho_divisor = " << num(g.delta_rho_divisor) << "\n"
      << "rho_time_convention = "
      << (g.rho_time_convention == RhoTimeConvention::noise_level ? "noise-level" : "countdown-index") << "\n"
      << "grad_norm_power = " << g.grad_norm_power << "\n\n"
      << "[sampler]\n";
  if (!cfg.preset.empty()) out << "preset = " << cfg.preset << "\n";
  out << "order = " << s.order << "\n"
      << "seed = " << s.seed << "\n"
      << "dc = " << (s.dc_enabled ? "true" : "false") << "\n"
      << "dc_order = " << (s.dc_order == DcOrder::post ? "post" : "pre") << "\n"
      << "denoiser = " << cfg.denoiser << "\n\n"
      << "[repaint]\n"
      << "enabled = " << (s.rp.enabled ? "true" : "false") << "\n"
      << "u = " << s.rp.u << "\n"
      << "phi1 = " << num(s.rp.phi1) << "\n"
      << "phi2 = " << num(s.rp.phi2) << "\n";
  return out.str();
}

}  // namespace dpsaudio
