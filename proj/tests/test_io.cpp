#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "homsim/config.hpp"
#include "homsim/csv.hpp"
#include "homsim/manifest.hpp"
#include "homsim/tagio.hpp"
#include "homsim/util.hpp"

using namespace homsim;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinRel;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("homsim_io_" + std::to_string(SplitMix64(reinterpret_cast<std::uintptr_t>(this)).next_u64() % 1000000000));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

} // namespace

TEST_CASE("tag streams survive a serialize and parse round trip", "[io]") {
  std::vector<std::uint64_t> ch0 = {0, 81000, 200000};
  std::vector<std::uint64_t> ch1 = {81, 81000};
  std::string blob = serialize_tags(81, 10000, ch0, ch1);
  CHECK(blob.size() == 17 + 9 * 5);

  TagStream ts = parse_tags(blob);
  CHECK(ts.tdc_bin_ps == 81);
  CHECK(ts.rep_period_ps == 10000);
  REQUIRE(ts.tags.size() == 5);

  // Merge is time ordered; equal stamps put channel 0 first.
  CHECK(ts.tags[0].timestamp_ps == 0);
  CHECK(ts.tags[1].timestamp_ps == 81);
  CHECK(ts.tags[1].channel == 1);
  CHECK(ts.tags[2].timestamp_ps == 81000);
  CHECK(ts.tags[2].channel == 0);
  CHECK(ts.tags[3].timestamp_ps == 81000);
  CHECK(ts.tags[3].channel == 1);

  auto [back0, back1] = ts.split_channels();
  CHECK(back0 == ch0);
  CHECK(back1 == ch1);
}

TEST_CASE("tag files round trip through disk", "[io]") {
  TempDir dir;
  std::vector<std::uint64_t> ch0 = {1215, 3000000};
  std::vector<std::uint64_t> ch1 = {1296};
  fs::path file = dir.path / "t.homt";
  write_tag_file(file, 81, 10000, ch0, ch1);

  TagStream ts = read_tag_file(file);
  auto [a, b] = ts.split_channels();
  CHECK(a == ch0);
  CHECK(b == ch1);
}

TEST_CASE("tag parsing rejects malformed data", "[io]") {
  std::string good = serialize_tags(81, 10000, {0, 81000}, {81});

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(parse_tags(bad_magic), FormatError);
  CHECK_THROWS_WITH(parse_tags(bad_magic, "f.homt"), ContainsSubstring("f.homt"));

  std::string bad_version = good;
  bad_version[4] = 2;
  CHECK_THROWS_WITH(parse_tags(bad_version), ContainsSubstring("version"));

  std::string truncated = good.substr(0, good.size() - 1);
  CHECK_THROWS_AS(parse_tags(truncated), FormatError);

  std::string too_short = good.substr(0, 10);
  CHECK_THROWS_AS(parse_tags(too_short), FormatError);

  std::string bad_channel = good;
  bad_channel[17 + 8] = 2; // channel byte of the first record
  CHECK_THROWS_WITH(parse_tags(bad_channel), ContainsSubstring("record 0"));

  // Swap the two leading records to break the time ordering.
  std::string unsorted = good;
  for (int i = 0; i < 9; ++i) std::swap(unsorted[17 + i], unsorted[17 + 9 + i]);
  CHECK_THROWS_WITH(parse_tags(unsorted), ContainsSubstring("order"));
}

TEST_CASE("scan tables round trip, including undefined estimates", "[io]") {
  std::vector<ScanPoint> pts(3);
  pts[0].tau_ps = -50.0;
  pts[0].n_pulses = 1000;
  pts[0].n1 = 10;
  pts[0].n2 = 12;
  pts[0].n_coinc = 2;
  pts[0].g2 = 16.66666666;
  pts[0].g2_err = 12.0218504;
  pts[1].tau_ps = 0.0;
  pts[1].n_pulses = 1000; // dead channel: no estimate
  pts[2].tau_ps = 50.0;
  pts[2].n_pulses = 1000;
  pts[2].n1 = 3;
  pts[2].n2 = 0;
  pts[2].n_coinc = 0;

  std::string csv = scan_csv(pts);
  CHECK(csv.rfind(kScanCsvHeader, 0) == 0);

  auto back = parse_scan_csv(csv);
  REQUIRE(back.size() == 3);
  CHECK(back[0].tau_ps == -50.0);
  CHECK(back[0].n_coinc == 2);
  REQUIRE(back[0].g2.has_value());
  CHECK_THAT(*back[0].g2, WithinRel(16.66666666, 1e-9));
  CHECK_FALSE(back[1].g2.has_value());
  CHECK_FALSE(back[2].g2_err.has_value());
  CHECK(back[2].n1 == 3);
}

TEST_CASE("scan parser names the offending spot", "[io]") {
  CHECK_THROWS_WITH(parse_scan_csv("nonsense\n"), ContainsSubstring("header"));
  std::string short_row = std::string(kScanCsvHeader) + "\n1,2,3\n";
  CHECK_THROWS_WITH(parse_scan_csv(short_row, "s.csv"), ContainsSubstring("row 1"));
  std::string bad_field = std::string(kScanCsvHeader) + "\n0,10,abc,4,1,,\n";
  CHECK_THROWS_WITH(parse_scan_csv(bad_field), ContainsSubstring("column 3"));
  // Counts must be whole numbers.
  std::string fractional = std::string(kScanCsvHeader) + "\n0,10,3.5,4,1,,\n";
  CHECK_THROWS_AS(parse_scan_csv(fractional), FormatError);
}

TEST_CASE("scan json lines mirror the table", "[io]") {
  std::vector<ScanPoint> pts(1);
  pts[0].tau_ps = 25.0;
  pts[0].n_pulses = 100;
  pts[0].n1 = 5;
  pts[0].n2 = 6;
  pts[0].n_coinc = 1;
  pts[0].g2 = 3.3333;
  pts[0].g2_err = 3.9;
  std::string out = scan_json_lines(pts);
  CHECK_THAT(out, ContainsSubstring("\"tau_ps\":25"));
  CHECK_THAT(out, ContainsSubstring("\"g2\":3.3333"));

  pts[0].g2.reset();
  pts[0].g2_err.reset();
  CHECK_THAT(scan_json_lines(pts), ContainsSubstring("\"g2\":null"));
}

TEST_CASE("histograms round trip and accept sparse files", "[io]") {
  Histogram h;
  h.bin_width_ps = 81;
  h.origin_ps = 1620;
  h.counts = {5, 0, 7, 1};
  h.total = 13;

  std::string csv = histogram_csv(h);
  Histogram back = parse_histogram_csv(csv);
  CHECK(back.bin_width_ps == 81);
  CHECK(back.origin_ps == 1620);
  CHECK(back.counts == h.counts);
  CHECK(back.total == 13);

  // Zero rows omitted: the gap fixes the grid, missing bins become zero.
  std::string sparse = std::string(kHistogramCsvHeader) + "\n100,4\n150,9\n300,2\n";
  Histogram s = parse_histogram_csv(sparse);
  CHECK(s.bin_width_ps == 50);
  CHECK(s.origin_ps == 100);
  REQUIRE(s.counts.size() == 5);
  CHECK(s.counts[0] == 4);
  CHECK(s.counts[1] == 9);
  CHECK(s.counts[2] == 0);
  CHECK(s.counts[3] == 0);
  CHECK(s.counts[4] == 2);
}

TEST_CASE("histogram parser rejects broken grids", "[io]") {
  std::string one_row = std::string(kHistogramCsvHeader) + "\n100,4\n";
  CHECK_THROWS_AS(parse_histogram_csv(one_row), FormatError);

  std::string non_monotone = std::string(kHistogramCsvHeader) + "\n100,4\n50,1\n";
  CHECK_THROWS_WITH(parse_histogram_csv(non_monotone), ContainsSubstring("increasing"));

  // gaps 50 and 80: narrowest gap fixes the width, 130 is then mid-bin
  std::string off_grid = std::string(kHistogramCsvHeader) + "\n0,1\n50,1\n130,1\n";
  CHECK_THROWS_WITH(parse_histogram_csv(off_grid), ContainsSubstring("grid"));
}

TEST_CASE("fit reports serialize with a fixed key set", "[io]") {
  DipFit f;
  f.visibility = 0.46;
  f.visibility_err = 0.01;
  f.gamma_ps = 50.0;
  f.gamma_err_ps = 2.0;
  f.baseline = 1.0;
  f.center_ps = -1.5;
  f.chi2_red = 0.97;
  f.n_points = 21;
  f.converged = true;

  std::string txt = dip_fit_text(f);
  for (const char* key : {"visibility=", "visibility_err=", "gamma_ps=", "gamma_err_ps=",
                          "baseline=", "center_ps=", "chi2_red=", "n_points=", "converged="})
    CHECK_THAT(txt, ContainsSubstring(key));
  CHECK_THAT(txt, ContainsSubstring("converged=true"));
  CHECK_THAT(txt, ContainsSubstring("n_points=21"));

  std::string js = dip_fit_json(f);
  CHECK_THAT(js, ContainsSubstring("\"visibility\":0.46"));
  CHECK_THAT(js, ContainsSubstring("\"converged\":true"));
}

TEST_CASE("bound tables serialize both ways", "[io]") {
  DecoyBound b;
  b.tau_ps = 0.0;
  b.p_ub = 0.0377;
  b.p_ub_err = 0.009;
  b.p_cc_both = 5.5e-5;
  b.p_cc_blocked1 = 2.6e-5;
  b.p_cc_blocked2 = 2.7e-5;
  b.p_d1 = 0.01;
  b.p_d2 = 0.0101;

  std::string csv = decoy_csv({b});
  CHECK(csv.rfind(kDecoyCsvHeader, 0) == 0);
  CHECK_THAT(csv, ContainsSubstring("0.0377"));

  std::string js = decoy_json_lines({b});
  CHECK_THAT(js, ContainsSubstring("\"p_cc_mumu\":5.5e-05"));
  CHECK_THAT(js, ContainsSubstring("\"p_ub\":0.0377"));
}

TEST_CASE("configs parse with comments, defaults and overrides", "[io]") {
  std::string ini =
      "# bench setup\n"
      "[source1]\n"
      "mu = 0.02           ; brighter than stock\n"
      "pulse_fwhm_ps = 90\n"
      "rep_period_ps = 20000\n"
      "[source2]\n"
      "mu = 0.01\n"
      "rep_period_ps = 20000\n"
      "[overlap]\n"
      "gamma_ps = 60\n"
      "max_overlap = 0.9\n"
      "[detector1]\n"
      "efficiency = 0.25\n"
      "[detector2]\n"
      "dark_prob = 2e-5\n"
      "[gate]\n"
      "gate_width_ps = 4000\n"
      "dead_time_ps = 2000000\n"
      "tdc_bin_ps = 27\n"
      "afterpulse_prob = 0.02\n"
      "[response]\n"
      "sigma_ps = 30\n"
      "t1_ps = 35\n"
      "tau_decay_ps = 40\n"
      "[run]\n"
      "n_pulses = 5000\n"
      "seed = 99\n"
      "block = source2\n";

  ExperimentConfig cfg = parse_config(ini);
  CHECK(cfg.source1.mu == 0.02);
  CHECK(cfg.source1.pulse_fwhm_ps == 90.0);
  CHECK(cfg.source2.mu == 0.01);
  CHECK(cfg.overlap.gamma_ps == 60.0);
  CHECK(cfg.overlap.max_overlap == 0.9);
  CHECK(cfg.det1.efficiency == 0.25);
  CHECK(cfg.det2.dark_prob == 2e-5);
  CHECK(cfg.gate.gate_width_ps == 4000.0);
  CHECK(cfg.gate.dead_time_ps == 2000000);
  CHECK(cfg.gate.tdc_bin_ps == 27);
  CHECK(cfg.response.sigma_ps == 30.0);
  CHECK(cfg.n_pulses == 5000);
  CHECK(cfg.seed == 99);
  CHECK(cfg.block == BlockMode::block2);

  // Derived defaults follow the gate when not spelled out.
  CHECK(cfg.emission_offset_ps == 2000.0);
  CHECK(cfg.coincidence_window_ps == 4000.0);
}

TEST_CASE("config diagnostics carry origin and line", "[io]") {
  CHECK_THROWS_WITH(parse_config("[source1]\nmu = 0.01\nbogus = 3\n", "bench.ini"),
                    ContainsSubstring("bench.ini: line 3"));
  CHECK_THROWS_WITH(parse_config("[nope]\n"), ContainsSubstring("unknown section"));
  CHECK_THROWS_WITH(parse_config("[source1]\nmu 0.01\n"), ContainsSubstring("line 2"));
  CHECK_THROWS_WITH(parse_config("mu = 0.01\n"), ContainsSubstring("outside any section"));
  CHECK_THROWS_WITH(parse_config("[source1]\nmu = abc\n"), ContainsSubstring("number"));
  CHECK_THROWS_WITH(parse_config("[run]\nblock = sideways\n"), ContainsSubstring("block"));
  CHECK_THROWS_AS(parse_config("[source1]\nmu = -1\n"), ConfigError);
}

TEST_CASE("config loading reports missing files", "[io]") {
  CHECK_THROWS_WITH(load_config("/nonexistent/x.ini"), ContainsSubstring("/nonexistent/x.ini"));

  TempDir dir;
  auto file = dir.path / "ok.ini";
  atomic_write_file(file, "[run]\nn_pulses = 7\n");
  CHECK(load_config(file).n_pulses == 7);
}

TEST_CASE("atomic writes leave no temporary behind", "[io]") {
  TempDir dir;
  auto file = dir.path / "out.txt";
  atomic_write_file(file, "hello\n");
  CHECK(read_file(file) == "hello\n");
  atomic_write_file(file, "replaced\n");
  CHECK(read_file(file) == "replaced\n");

  int entries = 0;
  for ([[maybe_unused]] auto& e : fs::directory_iterator(dir.path)) ++entries;
  CHECK(entries == 1);
}

TEST_CASE("run manifests list outputs and end with the duration", "[io]") {
  RunManifest m;
  m.command = "simulate-scan";
  m.config_path = "bench.ini";
  m.seed = 77;
  m.outputs = {"scan.csv", "tags_000.homt"};
  m.duration_ms = 12.5;

  std::string t = m.text();
  CHECK(t.rfind("tool_version=1.0.0\n", 0) == 0);
  CHECK_THAT(t, ContainsSubstring("command=simulate-scan\n"));
  CHECK_THAT(t, ContainsSubstring("seed=77\n"));
  CHECK_THAT(t, ContainsSubstring("output=scan.csv\n"));
  CHECK_THAT(t, ContainsSubstring("output=tags_000.homt\n"));
  CHECK(t.find("duration_ms=12.500\n") == t.size() - 19);

  TempDir dir;
  m.write(dir.path);
  CHECK(read_file(dir.path / "manifest.txt") == t);
}
