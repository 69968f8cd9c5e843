// hombench: pulsed two-source interference bench simulator and analysis
// front end. Subcommands: simulate-scan, fit-dip, decoy, detector-fit, g2.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "homsim/homsim.hpp"

namespace fs = std::filesystem;
using namespace homsim;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  int threads = -1; // -1: not set, fall back to HOMBENCH_THREADS, then auto
  std::string format = "csv";
};

int resolve_threads(const GlobalOpts& g) {
  if (g.threads >= 0) return g.threads;
  if (const char* env = std::getenv("HOMBENCH_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 0) return static_cast<int>(v);
    throw ConfigError(std::string("HOMBENCH_THREADS is not a thread count: '") + env + "'");
  }
  return 0; // auto
}

std::vector<double> parse_delays(const std::string& grid) {
  // "start:stop:count", ps, inclusive endpoints
  auto bad = [&](const std::string& why) {
    throw ConfigError("delay grid '" + grid + "': " + why + " (expected start:stop:count)");
  };
  std::size_t c1 = grid.find(':');
  std::size_t c2 = c1 == std::string::npos ? std::string::npos : grid.find(':', c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos || grid.find(':', c2 + 1) != std::string::npos)
    bad("need exactly two ':'");
  auto num = [&](const std::string& s, const char* what) {
    const char* b = s.c_str();
    char* e = nullptr;
    double v = std::strtod(b, &e);
    if (e == b || *e != '\0') bad(std::string(what) + " is not a number: '" + s + "'");
    return v;
  };
  double start = num(grid.substr(0, c1), "start");
  double stop = num(grid.substr(c1 + 1, c2 - c1 - 1), "stop");
  std::string cs = grid.substr(c2 + 1);
  char* e = nullptr;
  long count = std::strtol(cs.c_str(), &e, 10);
  if (e == cs.c_str() || *e != '\0' || count < 1) bad("count must be a positive integer");
  if (count > 1000000) bad("count too large");
  std::vector<double> delays(static_cast<std::size_t>(count));
  if (count == 1) {
    delays[0] = start;
  } else {
    for (long i = 0; i < count; ++i)
      delays[static_cast<std::size_t>(i)] =
          start + (stop - start) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return delays;
}

std::string point_tag_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "tags_%03zu.homt", index);
  return buf;
}

ExperimentConfig load_run_config(const GlobalOpts& g) {
  if (g.config_path.empty()) throw ConfigError("--config is required for this command");
  ExperimentConfig cfg = load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

void finish_manifest(RunManifest& man, const GlobalOpts& g, const Timer& timer) {
  man.duration_ms = timer.ms();
  man.write(fs::path(g.out_dir));
}

int cmd_simulate_scan(const GlobalOpts& g, const std::string& delay_grid, bool write_tags) {
  Timer timer;
  ExperimentConfig cfg = load_run_config(g);
  std::vector<double> delays = parse_delays(delay_grid);
  fs::create_directories(g.out_dir);

  ScanOptions opt;
  opt.threads = resolve_threads(g);
  opt.keep_tags = write_tags;
  std::vector<PointResult> results = simulate_scan(cfg, delays, opt);

  RunManifest man;
  man.command = "simulate-scan";
  man.config_path = g.config_path;
  man.seed = cfg.seed;

  std::vector<ScanPoint> points;
  points.reserve(results.size());
  for (const PointResult& r : results) points.push_back(r.point);

  const bool json = g.format == "json-lines";
  std::string scan_name = json ? "scan.jsonl" : "scan.csv";
  atomic_write_file(fs::path(g.out_dir) / scan_name, json ? scan_json_lines(points) : scan_csv(points));
  man.outputs.push_back(scan_name);

  if (write_tags) {
    auto rep = static_cast<std::uint64_t>(cfg.source1.rep_period_ps);
    for (std::size_t i = 0; i < results.size(); ++i) {
      std::string name = point_tag_name(i);
      write_tag_file(fs::path(g.out_dir) / name, cfg.gate.tdc_bin_ps, rep, results[i].tags[0],
                     results[i].tags[1]);
      man.outputs.push_back(name);
    }
  }
  finish_manifest(man, g, timer);
  return 0;
}

int cmd_fit_dip(const GlobalOpts& g, const std::string& input, const std::string& mode) {
  Timer timer;
  std::vector<ScanPoint> points = parse_scan_csv(read_file(input), input);
  DipFitMode m = mode == "free" ? DipFitMode::free_baseline : DipFitMode::constrained;
  DipFit fit = fit_dip(points, m);
  fs::create_directories(g.out_dir);

  RunManifest man;
  man.command = "fit-dip";
  man.config_path = "";
  man.seed = g.seed.value_or(0);

  const bool json = g.format == "json-lines";
  std::string rec_name = json ? "dip_fit.json" : "dip_fit.txt";
  atomic_write_file(fs::path(g.out_dir) / rec_name, json ? dip_fit_json(fit) : dip_fit_text(fit));
  man.outputs.push_back(rec_name);
  atomic_write_file(fs::path(g.out_dir) / "dip.svg", dip_svg(points, &fit));
  man.outputs.push_back("dip.svg");
  finish_manifest(man, g, timer);

  if (!fit.converged) throw AnalysisError("dip fit did not converge");
  return 0;
}

std::map<double, ScanPoint> scan_by_delay(const std::string& path) {
  std::map<double, ScanPoint> m;
  for (const ScanPoint& p : parse_scan_csv(read_file(path), path)) m[p.tau_ps] = p;
  return m;
}

int cmd_decoy_csv(const GlobalOpts& g, const std::string& both_path, const std::string& b1_path,
                  const std::string& b2_path) {
  Timer timer;
  auto both = scan_by_delay(both_path);
  auto b1 = scan_by_delay(b1_path);
  auto b2 = scan_by_delay(b2_path);

  std::string missing;
  for (const auto& kv : both)
    if (!b1.count(kv.first) || !b2.count(kv.first))
      missing += (missing.empty() ? "" : ", ") + fmt_g10(kv.first);
  for (const auto* other : {&b1, &b2})
    for (const auto& kv : *other)
      if (!both.count(kv.first)) missing += (missing.empty() ? "" : ", ") + fmt_g10(kv.first);
  if (!missing.empty())
    throw FormatError("decoy inputs disagree on the delay grid; offending delays: " + missing);
  if (both.empty()) throw FormatError("decoy inputs contain no scan points");

  std::vector<DecoyBound> bounds;
  for (const auto& [tau, p] : both) {
    DecoyRecord rec;
    rec.tau_ps = tau;
    rec.gates_both = p.n_pulses;
    rec.cc_both = p.n_coinc;
    rec.s1_both = p.n1;
    rec.s2_both = p.n2;
    rec.gates_blocked1 = b1[tau].n_pulses;
    rec.cc_blocked1 = b1[tau].n_coinc;
    rec.gates_blocked2 = b2[tau].n_pulses;
    rec.cc_blocked2 = b2[tau].n_coinc;
    bounds.push_back(decoy_upper_bound(rec));
  }

  fs::create_directories(g.out_dir);
  RunManifest man;
  man.command = "decoy";
  man.config_path = "";
  man.seed = g.seed.value_or(0);
  const bool json = g.format == "json-lines";
  std::string name = json ? "decoy.jsonl" : "decoy.csv";
  atomic_write_file(fs::path(g.out_dir) / name, json ? decoy_json_lines(bounds) : decoy_csv(bounds));
  man.outputs.push_back(name);
  finish_manifest(man, g, timer);
  return 0;
}

int cmd_decoy_tags(const GlobalOpts& g, const std::string& both_path, const std::string& b1_path,
                   const std::string& b2_path, std::uint64_t gates, double window_ps,
                   double tau_label) {
  Timer timer;
  if (gates == 0) throw ConfigError("--gates is required with tag-file inputs");
  auto count_file = [&](const std::string& path) {
    TagStream ts = read_tag_file(path);
    auto ch = ts.split_channels();
    std::uint64_t win = window_ps >= 0.0 ? static_cast<std::uint64_t>(window_ps) : ts.rep_period_ps;
    return count_coincidences(ch[0], ch[1], ts.rep_period_ps, win, gates);
  };
  CoincidenceCounts both = count_file(both_path);
  CoincidenceCounts b1 = count_file(b1_path);
  CoincidenceCounts b2 = count_file(b2_path);

  DecoyRecord rec;
  rec.tau_ps = tau_label;
  rec.gates_both = gates;
  rec.cc_both = both.n_coinc;
  rec.s1_both = both.n1;
  rec.s2_both = both.n2;
  rec.gates_blocked1 = gates;
  rec.cc_blocked1 = b1.n_coinc;
  rec.gates_blocked2 = gates;
  rec.cc_blocked2 = b2.n_coinc;
  std::vector<DecoyBound> bounds = {decoy_upper_bound(rec)};

  fs::create_directories(g.out_dir);
  RunManifest man;
  man.command = "decoy";
  man.config_path = "";
  man.seed = g.seed.value_or(0);
  const bool json = g.format == "json-lines";
  std::string name = json ? "decoy.jsonl" : "decoy.csv";
  atomic_write_file(fs::path(g.out_dir) / name, json ? decoy_json_lines(bounds) : decoy_csv(bounds));
  man.outputs.push_back(name);
  finish_manifest(man, g, timer);
  return 0;
}

std::string detector_fit_text(const DetectorFit& f) {
  std::string out;
  out += "amplitude=" + fmt_g10(f.params.amplitude) + "\n";
  out += "amplitude_err=" + fmt_g10(f.param_errors.amplitude) + "\n";
  out += "t0_ps=" + fmt_g10(f.params.t0_ps) + "\n";
  out += "t0_err_ps=" + fmt_g10(f.param_errors.t0_ps) + "\n";
  out += "sigma_ps=" + fmt_g10(f.params.sigma_ps) + "\n";
  out += "sigma_err_ps=" + fmt_g10(f.param_errors.sigma_ps) + "\n";
  out += "t1_ps=" + fmt_g10(f.params.t1_ps) + "\n";
  out += "t1_err_ps=" + fmt_g10(f.param_errors.t1_ps) + "\n";
  out += "tau_decay_ps=" + fmt_g10(f.params.tau_decay_ps) + "\n";
  out += "tau_decay_err_ps=" + fmt_g10(f.param_errors.tau_decay_ps) + "\n";
  out += "fwhm_ps=" + fmt_g10(f.fwhm_ps) + "\n";
  out += "chi2_red=" + fmt_g10(f.chi2_red) + "\n";
  out += "n_points=" + std::to_string(f.n_points) + "\n";
  out += std::string("converged=") + (f.converged ? "true" : "false") + "\n";
  return out;
}

std::string detector_fit_json(const DetectorFit& f) {
  std::string out = "{";
  out += "\"amplitude\":" + fmt_g10(f.params.amplitude);
  out += ",\"amplitude_err\":" + fmt_g10(f.param_errors.amplitude);
  out += ",\"t0_ps\":" + fmt_g10(f.params.t0_ps);
  out += ",\"t0_err_ps\":" + fmt_g10(f.param_errors.t0_ps);
  out += ",\"sigma_ps\":" + fmt_g10(f.params.sigma_ps);
  out += ",\"sigma_err_ps\":" + fmt_g10(f.param_errors.sigma_ps);
  out += ",\"t1_ps\":" + fmt_g10(f.params.t1_ps);
  out += ",\"t1_err_ps\":" + fmt_g10(f.param_errors.t1_ps);
  out += ",\"tau_decay_ps\":" + fmt_g10(f.params.tau_decay_ps);
  out += ",\"tau_decay_err_ps\":" + fmt_g10(f.param_errors.tau_decay_ps);
  out += ",\"fwhm_ps\":" + fmt_g10(f.fwhm_ps);
  out += ",\"chi2_red\":" + fmt_g10(f.chi2_red);
  out += ",\"n_points\":" + std::to_string(f.n_points);
  out += std::string(",\"converged\":") + (f.converged ? "true" : "false");
  out += "}\n";
  return out;
}

bool looks_like_tag_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && magic[0] == 'H' && magic[1] == 'O' && magic[2] == 'M' &&
         magic[3] == 'T';
}

int cmd_detector_fit(const GlobalOpts& g, const std::string& input, std::uint64_t fold_ps,
                     std::uint64_t bin_ps) {
  Timer timer;
  Histogram hist;
  if (looks_like_tag_file(input)) {
    TagStream ts = read_tag_file(input);
    std::vector<std::uint64_t> all;
    all.reserve(ts.tags.size());
    for (const TimeTag& t : ts.tags) all.push_back(t.timestamp_ps);
    std::uint64_t fold = fold_ps ? fold_ps : ts.rep_period_ps;
    std::uint64_t bin = bin_ps ? bin_ps : ts.tdc_bin_ps;
    if (fold == 0) throw FormatError(input + ": no fold period in header; pass --fold");
    if (bin == 0) throw FormatError(input + ": no TDC bin in header; pass --bin");
    hist = build_histogram(all, bin, fold);
  } else {
    hist = parse_histogram_csv(read_file(input), input);
  }

  DetectorFit fit = fit_detector_response(hist);

  fs::create_directories(g.out_dir);
  RunManifest man;
  man.command = "detector-fit";
  man.config_path = "";
  man.seed = g.seed.value_or(0);
  const bool json = g.format == "json-lines";
  std::string rec_name = json ? "detector_fit.json" : "detector_fit.txt";
  atomic_write_file(fs::path(g.out_dir) / rec_name,
                    json ? detector_fit_json(fit) : detector_fit_text(fit));
  man.outputs.push_back(rec_name);
  atomic_write_file(fs::path(g.out_dir) / "folded_histogram.csv", histogram_csv(hist));
  man.outputs.push_back("folded_histogram.csv");
  atomic_write_file(fs::path(g.out_dir) / "histogram.svg", histogram_svg(hist, &fit));
  man.outputs.push_back("histogram.svg");
  finish_manifest(man, g, timer);

  if (!fit.converged) throw AnalysisError("detector response fit did not converge");
  return 0;
}

int cmd_g2(const std::string& input, double window_ps, std::uint64_t gates) {
  TagStream ts = read_tag_file(input);
  auto ch = ts.split_channels();
  std::uint64_t win = window_ps >= 0.0 ? static_cast<std::uint64_t>(window_ps) : ts.rep_period_ps;
  CoincidenceCounts cc = count_coincidences(ch[0], ch[1], ts.rep_period_ps, win, gates);
  G2Estimate est = estimate_g2(cc.n1, cc.n2, cc.n_coinc, cc.n_slots);
  std::string out;
  out += "n1=" + std::to_string(cc.n1) + "\n";
  out += "n2=" + std::to_string(cc.n2) + "\n";
  out += "n_coinc=" + std::to_string(cc.n_coinc) + "\n";
  out += "n_slots=" + std::to_string(cc.n_slots) + "\n";
  out += "g2=" + (est.g2 ? fmt_g10(*est.g2) : std::string("undefined")) + "\n";
  out += "g2_err=" + (est.g2_err ? fmt_g10(*est.g2_err) : std::string("undefined")) + "\n";
  std::fputs(out.c_str(), stdout);
  if (!est.g2) throw AnalysisError("g2 undefined: a channel has no counts");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pulsed two-source interference bench: simulator and analysis"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GlobalOpts g;
  app.add_option("--config", g.config_path, "experiment config file (INI-style)");
  app.add_option("--seed", g.seed, "RNG seed (overrides the config)");
  app.add_option("--out", g.out_dir, "output directory")->capture_default_str();
  app.add_option("--threads", g.threads,
                 "worker threads, 0 = auto (env HOMBENCH_THREADS when absent)");
  app.add_option("--format", g.format, "tabular output format")
      ->check(CLI::IsMember({"csv", "json-lines"}))
      ->capture_default_str();

  auto* scan = app.add_subcommand("simulate-scan", "simulate a delay scan and write ScanPoint rows");
  std::string delay_grid;
  bool write_tags = false;
  scan->add_option("--delays", delay_grid, "delay grid start:stop:count in ps")->required();
  scan->add_flag("--tags", write_tags, "also write per-point time-tag files");

  auto* fitd = app.add_subcommand("fit-dip", "fit the interference dip in a scan CSV");
  std::string fit_input, fit_mode = "constrained";
  fitd->add_option("--input", fit_input, "ScanPoint CSV path")->required();
  fitd->add_option("--mode", fit_mode, "baseline handling")
      ->check(CLI::IsMember({"constrained", "free"}))
      ->capture_default_str();

  auto* dec = app.add_subcommand("decoy", "blocked-port coincidence bound from three runs");
  std::string dec_both, dec_b1, dec_b2, dec_both_t, dec_b1_t, dec_b2_t;
  std::uint64_t dec_gates = 0;
  double dec_window = -1.0, dec_tau = 0.0;
  dec->add_option("--both", dec_both, "scan CSV, both ports open");
  dec->add_option("--blocked1", dec_b1, "scan CSV, source 1 blocked");
  dec->add_option("--blocked2", dec_b2, "scan CSV, source 2 blocked");
  dec->add_option("--both-tags", dec_both_t, "tag file, both ports open");
  dec->add_option("--blocked1-tags", dec_b1_t, "tag file, source 1 blocked");
  dec->add_option("--blocked2-tags", dec_b2_t, "tag file, source 2 blocked");
  dec->add_option("--gates", dec_gates, "gate count per tag file (required with tag inputs)");
  dec->add_option("--window", dec_window, "coincidence window in ps (default: one slot)");
  dec->add_option("--tau", dec_tau, "delay label for tag-file inputs, ps")->capture_default_str();

  auto* det = app.add_subcommand("detector-fit", "fit the timing response to folded tags");
  std::string det_input;
  std::uint64_t det_fold = 0, det_bin = 0;
  det->add_option("--input", det_input, "tag file or histogram CSV")->required();
  det->add_option("--fold", det_fold, "fold period in ps (default: tag header rep period)");
  det->add_option("--bin", det_bin, "histogram bin width in ps (default: tag header TDC bin)");

  auto* g2c = app.add_subcommand("g2", "counts and normalized coincidence rate of a tag file");
  std::string g2_input;
  double g2_window = -1.0;
  std::uint64_t g2_gates = 0;
  g2c->add_option("--input", g2_input, "tag file path")->required();
  g2c->add_option("--window", g2_window, "coincidence window in ps (default: one slot)");
  g2c->add_option("--gates", g2_gates, "total gate count (default: inferred from last tag)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2; // usage errors are exit 2, --help stays 0
  }

  try {
    if (scan->parsed()) return cmd_simulate_scan(g, delay_grid, write_tags);
    if (fitd->parsed()) return cmd_fit_dip(g, fit_input, fit_mode);
    if (dec->parsed()) {
      bool csv_route = !dec_both.empty() || !dec_b1.empty() || !dec_b2.empty();
      bool tag_route = !dec_both_t.empty() || !dec_b1_t.empty() || !dec_b2_t.empty();
      if (csv_route == tag_route)
        throw ConfigError("decoy needs either --both/--blocked1/--blocked2 or the *-tags trio");
      if (csv_route) {
        if (dec_both.empty() || dec_b1.empty() || dec_b2.empty())
          throw ConfigError("decoy CSV route needs --both, --blocked1 and --blocked2");
        return cmd_decoy_csv(g, dec_both, dec_b1, dec_b2);
      }
      if (dec_both_t.empty() || dec_b1_t.empty() || dec_b2_t.empty())
        throw ConfigError("decoy tag route needs --both-tags, --blocked1-tags and --blocked2-tags");
      return cmd_decoy_tags(g, dec_both_t, dec_b1_t, dec_b2_t, dec_gates, dec_window, dec_tau);
    }
    if (det->parsed()) return cmd_detector_fit(g, det_input, det_fold, det_bin);
    if (g2c->parsed()) return cmd_g2(g2_input, g2_window, g2_gates);
  } catch (const AnalysisError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
