#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "homsim/csv.hpp"
#include "homsim/simulator.hpp"
#include "homsim/util.hpp"

namespace homsim {
namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

struct ConfigCursor {
  const std::string& origin;
  std::size_t line;
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(origin + ": line " + std::to_string(line) + ": " + msg);
  }
  double num(const std::string& v) const {
    const char* b = v.c_str();
    char* e = nullptr;
    double x = std::strtod(b, &e);
    if (e == b || *e != '\0') fail("not a number: '" + v + "'");
    return x;
  }
  std::uint64_t uint(const std::string& v) const {
    if (v.empty() || v[0] == '-') fail("not a non-negative integer: '" + v + "'");
    const char* b = v.c_str();
    char* e = nullptr;
    unsigned long long x = std::strtoull(b, &e, 10);
    if (e == b || *e != '\0') fail("not a non-negative integer: '" + v + "'");
    return x;
  }
};

}  // namespace detail

/// INI-style experiment description. Sections: source1, source2, overlap,
/// detector1, detector2, gate, response, run. Every key is optional and
/// falls back to the built-in defaults; unknown sections or keys are
/// errors, with the offending line reported. '#' or ';' starts a comment.
/// run.emission_offset_ps defaults to half the gate width and
/// run.coincidence_window_ps to the full gate width when not given.
inline ExperimentConfig parse_config(const std::string& text,
                                     const std::string& origin = "config") {
  ExperimentConfig cfg;
  bool saw_offset = false, saw_window = false;
  std::string section;
  auto lines = detail::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    detail::ConfigCursor at{origin, i + 1};
    std::string line = lines[i];
    std::size_t cpos = line.find_first_of("#;");
    if (cpos != std::string::npos) line = line.substr(0, cpos);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') at.fail("unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "source1" && section != "source2" && section != "overlap" &&
          section != "detector1" && section != "detector2" && section != "gate" &&
          section != "response" && section != "run")
        at.fail("unknown section [" + section + "]");
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) at.fail("expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) at.fail("empty key");
    if (val.empty()) at.fail("empty value for '" + key + "'");
    if (section.empty()) at.fail("key '" + key + "' outside any section");

    auto unknown = [&]() { at.fail("unknown key '" + key + "' in [" + section + "]"); };
    if (section == "source1" || section == "source2") {
      SourceParams& s = section == "source1" ? cfg.source1 : cfg.source2;
      if (key == "mu")
        s.mu = at.num(val);
      else if (key == "pulse_fwhm_ps")
        s.pulse_fwhm_ps = at.num(val);
      else if (key == "rep_period_ps")
        s.rep_period_ps = at.num(val);
      else
        unknown();
    } else if (section == "overlap") {
      if (key == "gamma_ps")
        cfg.overlap.gamma_ps = at.num(val);
      else if (key == "max_overlap")
        cfg.overlap.max_overlap = at.num(val);
      else
        unknown();
    } else if (section == "detector1" || section == "detector2") {
      ChannelParams& d = section == "detector1" ? cfg.det1 : cfg.det2;
      if (key == "efficiency")
        d.efficiency = at.num(val);
      else if (key == "dark_prob")
        d.dark_prob = at.num(val);
      else
        unknown();
    } else if (section == "gate") {
      if (key == "gate_width_ps")
        cfg.gate.gate_width_ps = at.num(val);
      else if (key == "dead_time_ps")
        cfg.gate.dead_time_ps = at.uint(val);
      else if (key == "tdc_bin_ps")
        cfg.gate.tdc_bin_ps = static_cast<std::uint32_t>(at.uint(val));
      else if (key == "afterpulse_prob")
        cfg.gate.afterpulse_prob = at.num(val);
      else
        unknown();
    } else if (section == "response") {
      if (key == "amplitude")
        cfg.response.amplitude = at.num(val);
      else if (key == "t0_ps")
        cfg.response.t0_ps = at.num(val);
      else if (key == "sigma_ps")
        cfg.response.sigma_ps = at.num(val);
      else if (key == "t1_ps")
        cfg.response.t1_ps = at.num(val);
      else if (key == "tau_decay_ps")
        cfg.response.tau_decay_ps = at.num(val);
      else
        unknown();
    } else { // run
      if (key == "n_pulses")
        cfg.n_pulses = at.uint(val);
      else if (key == "seed")
        cfg.seed = at.uint(val);
      else if (key == "block") {
        if (val == "none")
          cfg.block = BlockMode::none;
        else if (val == "source1")
          cfg.block = BlockMode::block1;
        else if (val == "source2")
          cfg.block = BlockMode::block2;
        else
          at.fail("block must be none, source1 or source2, got '" + val + "'");
      } else if (key == "emission_offset_ps") {
        cfg.emission_offset_ps = at.num(val);
        saw_offset = true;
      } else if (key == "coincidence_window_ps") {
        cfg.coincidence_window_ps = at.num(val);
        saw_window = true;
      } else {
        unknown();
      }
    }
  }
  if (!saw_offset) cfg.emission_offset_ps = 0.5 * cfg.gate.gate_width_ps;
  if (!saw_window) cfg.coincidence_window_ps = cfg.gate.gate_width_ps;
  try {
    validate_config(cfg);
  } catch (const std::domain_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

}  // namespace homsim
