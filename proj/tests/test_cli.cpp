#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "homsim/util.hpp"

using Catch::Matchers::ContainsSubstring;

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code;
  std::string output; // stdout and stderr combined
};

std::string binary() {
  const char* bin = std::getenv("HOMBENCH_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

RunResult run(const std::string& args) {
  std::string cmd = binary() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  int status = pclose(pipe);
  int code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
  return {code, out};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("homsim_cli_" + std::string(tag) + "_" + std::to_string(getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

// Small but realistic: unity efficiency and no dead time give thousands of
// tags from a short run.
const char* kCleanConfig =
    "[detector1]\nefficiency = 1\n"
    "[detector2]\nefficiency = 1\n"
    "[gate]\ndead_time_ps = 0\nafterpulse_prob = 0\n"
    "[overlap]\ngamma_ps = 50\nmax_overlap = 1\n"
    "[run]\nn_pulses = 100000\nseed = 5\n";

std::string write_config(const TempDir& dir, const char* text) {
  std::string p = dir / "bench.ini";
  homsim::atomic_write_file(p, text);
  return p;
}

} // namespace

TEST_CASE("missing config exits with a usage error naming the path", "[cli]") {
  TempDir dir("noconf");
  auto r = run("--config /no/such/file.ini --out " + (dir / "o") + " simulate-scan --delays 0:0:1");
  CHECK(r.exit_code == 2);
  CHECK_THAT(r.output, ContainsSubstring("/no/such/file.ini"));
}

TEST_CASE("bad flags and subcommands exit 2, help exits 0", "[cli]") {
  CHECK(run("definitely-not-a-subcommand").exit_code == 2);
  CHECK(run("fit-dip --mode sideways --input nowhere.csv").exit_code == 2);
  CHECK(run("--help").exit_code == 0);
  CHECK(run("simulate-scan --help").exit_code == 0);
}

TEST_CASE("delay grammar is validated", "[cli]") {
  TempDir dir("delays");
  std::string cfg = write_config(dir, kCleanConfig);
  std::string base = "--config " + cfg + " --out " + (dir / "o") + " simulate-scan --delays ";
  CHECK(run(base + "a:b:c").exit_code == 2);
  CHECK(run(base + "0:100").exit_code == 2);
  CHECK(run(base + "0:100:0").exit_code == 2);
  CHECK(run(base + "0:100:3:4").exit_code == 2);
}

TEST_CASE("a scan run writes the table, tags and manifest", "[cli]") {
  TempDir dir("scan");
  std::string cfg = write_config(dir, kCleanConfig);
  auto r = run("--config " + cfg + " --out " + (dir / "out") +
               " simulate-scan --delays -50:50:3 --tags");
  REQUIRE(r.exit_code == 0);

  std::string csv = homsim::read_file(dir / "out/scan.csv");
  CHECK(csv.rfind("tau_ps,n_pulses,n1,n2,n_coinc,g2,g2_err", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4); // header + 3 points

  for (const char* f : {"out/tags_000.homt", "out/tags_001.homt", "out/tags_002.homt"})
    CHECK(fs::exists(dir / f));

  std::string man = homsim::read_file(dir / "out/manifest.txt");
  CHECK_THAT(man, ContainsSubstring("command=simulate-scan"));
  CHECK_THAT(man, ContainsSubstring("output=scan.csv"));
  CHECK_THAT(man, ContainsSubstring("output=tags_002.homt"));
  CHECK_THAT(man, ContainsSubstring("seed=5"));
}

TEST_CASE("reruns and thread counts preserve every byte", "[cli]") {
  TempDir dir("determinism");
  std::string cfg = write_config(dir, kCleanConfig);
  std::string args = "--config " + cfg + " simulate-scan --delays -40:40:3 --tags";

  REQUIRE(run("--out " + (dir / "a") + " --threads 1 " + args).exit_code == 0);
  REQUIRE(run("--out " + (dir / "b") + " --threads 8 " + args).exit_code == 0);

  CHECK(homsim::read_file(dir / "a/scan.csv") == homsim::read_file(dir / "b/scan.csv"));
  for (const char* f : {"tags_000.homt", "tags_001.homt", "tags_002.homt"})
    CHECK(homsim::read_file(dir / ("a/" + std::string(f))) ==
          homsim::read_file(dir / ("b/" + std::string(f))));
}

TEST_CASE("the seed flag overrides the config", "[cli]") {
  TempDir dir("seed");
  std::string cfg = write_config(dir, kCleanConfig);
  std::string args = "--config " + cfg + " simulate-scan --delays 0:0:1";
  REQUIRE(run("--out " + (dir / "a") + " --seed 5 " + args).exit_code == 0);
  REQUIRE(run("--out " + (dir / "b") + " --seed 6 " + args).exit_code == 0);
  CHECK(homsim::read_file(dir / "a/scan.csv") != homsim::read_file(dir / "b/scan.csv"));

  std::string man = homsim::read_file(dir / "b/manifest.txt");
  CHECK_THAT(man, ContainsSubstring("seed=6"));
}

TEST_CASE("tabular format switches to json lines", "[cli]") {
  TempDir dir("format");
  std::string cfg = write_config(dir, kCleanConfig);
  auto r = run("--config " + cfg + " --out " + (dir / "o") +
               " --format json-lines simulate-scan --delays 0:0:1");
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir / "o/scan.jsonl"));
  CHECK_FALSE(fs::exists(dir / "o/scan.csv"));
  CHECK_THAT(homsim::read_file(dir / "o/scan.jsonl"), ContainsSubstring("\"tau_ps\":0"));

  CHECK(run("--config " + cfg + " --out " + (dir / "p") +
            " --format yaml simulate-scan --delays 0:0:1")
            .exit_code == 2);
}

TEST_CASE("scan, fit and report chain end to end", "[cli]") {
  TempDir dir("chain");
  std::string cfg = write_config(dir,
                                 "[detector1]\nefficiency = 1\n"
                                 "[detector2]\nefficiency = 1\n"
                                 "[gate]\ndead_time_ps = 0\nafterpulse_prob = 0\n"
                                 "[overlap]\ngamma_ps = 80\nmax_overlap = 1\n"
                                 "[run]\nn_pulses = 2000000\nseed = 31\n");
  auto sim = run("--config " + cfg + " --out " + (dir / "o") + " simulate-scan --delays -240:240:9");
  REQUIRE(sim.exit_code == 0);

  auto fit = run("--out " + (dir / "o") + " fit-dip --input " + (dir / "o/scan.csv"));
  REQUIRE(fit.exit_code == 0);

  std::string rep = homsim::read_file(dir / "o/dip_fit.txt");
  CHECK_THAT(rep, ContainsSubstring("converged=true"));
  CHECK_THAT(rep, ContainsSubstring("baseline=1"));
  CHECK_THAT(rep, ContainsSubstring("n_points=9"));

  std::string svg = homsim::read_file(dir / "o/dip.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK_THAT(svg, ContainsSubstring("polyline"));

  // Free mode reports its own baseline.
  auto fit2 = run("--out " + (dir / "p") + " fit-dip --mode free --input " + (dir / "o/scan.csv"));
  REQUIRE(fit2.exit_code == 0);
  CHECK_THAT(homsim::read_file(dir / "p/dip_fit.txt"), !ContainsSubstring("baseline=1\n"));
}

TEST_CASE("dip fitting refuses thin tables", "[cli]") {
  TempDir dir("thin");
  std::string csv = dir / "one.csv";
  homsim::atomic_write_file(csv,
                            "tau_ps,n_pulses,n1,n2,n_coinc,g2,g2_err\n"
                            "0,1000,50,40,2,1.0,0.7\n");
  auto r = run("--out " + (dir / "o") + " fit-dip --input " + csv);
  CHECK(r.exit_code == 2);
  CHECK_THAT(r.output, ContainsSubstring("5"));
}

TEST_CASE("counts utility prints key=value pairs and writes nothing", "[cli]") {
  TempDir dir("g2");
  std::string cfg = write_config(dir, kCleanConfig);
  REQUIRE(run("--config " + cfg + " --out " + (dir / "o") + " simulate-scan --delays 0:0:1 --tags")
              .exit_code == 0);

  auto before = std::distance(fs::directory_iterator(dir / "o"), fs::directory_iterator{});
  auto r = run("g2 --input " + (dir / "o/tags_000.homt") + " --gates 100000");
  REQUIRE(r.exit_code == 0);
  CHECK_THAT(r.output, ContainsSubstring("n1="));
  CHECK_THAT(r.output, ContainsSubstring("n_coinc="));
  CHECK_THAT(r.output, ContainsSubstring("g2="));
  CHECK_THAT(r.output, ContainsSubstring("n_slots=100000"));
  auto after = std::distance(fs::directory_iterator(dir / "o"), fs::directory_iterator{});
  CHECK(before == after);
}

TEST_CASE("detector fitting agrees between tag and histogram routes", "[cli]") {
  TempDir dir("det");
  std::string cfg = write_config(dir,
                                 "[detector1]\nefficiency = 1\n"
                                 "[detector2]\nefficiency = 1\n"
                                 "[gate]\ndead_time_ps = 0\nafterpulse_prob = 0\n"
                                 "[run]\nn_pulses = 1000000\nseed = 11\n");
  REQUIRE(run("--config " + cfg + " --out " + (dir / "sim") + " simulate-scan --delays 0:0:1 --tags")
              .exit_code == 0);

  auto tagfit = run("--out " + (dir / "a") + " detector-fit --input " + (dir / "sim/tags_000.homt"));
  REQUIRE(tagfit.exit_code == 0);
  std::string report_a = homsim::read_file(dir / "a/detector_fit.txt");
  CHECK_THAT(report_a, ContainsSubstring("converged=true"));
  CHECK(fs::exists(dir / "a/histogram.svg"));

  auto csvfit =
      run("--out " + (dir / "b") + " detector-fit --input " + (dir / "a/folded_histogram.csv"));
  REQUIRE(csvfit.exit_code == 0);
  CHECK(homsim::read_file(dir / "b/detector_fit.txt") == report_a);
  CHECK(homsim::read_file(dir / "b/folded_histogram.csv") ==
        homsim::read_file(dir / "a/folded_histogram.csv"));
}

TEST_CASE("bound extraction needs matching delay grids", "[cli]") {
  TempDir dir("grids");
  std::string cfg = write_config(dir, kCleanConfig);
  REQUIRE(run("--config " + cfg + " --out " + (dir / "a") + " simulate-scan --delays 0:0:1")
              .exit_code == 0);
  REQUIRE(run("--config " + cfg + " --out " + (dir / "b") + " simulate-scan --delays 10:10:1")
              .exit_code == 0);

  auto r = run("--out " + (dir / "o") + " decoy --both " + (dir / "a/scan.csv") + " --blocked1 " +
               (dir / "b/scan.csv") + " --blocked2 " + (dir / "b/scan.csv"));
  CHECK(r.exit_code == 2);
  CHECK_THAT(r.output, ContainsSubstring("10"));

  // Same grid everywhere: the bound comes out, one row per delay.
  auto ok = run("--out " + (dir / "o") + " decoy --both " + (dir / "a/scan.csv") + " --blocked1 " +
                (dir / "a/scan.csv") + " --blocked2 " + (dir / "a/scan.csv"));
  REQUIRE(ok.exit_code == 0);
  std::string csv = homsim::read_file(dir / "o/decoy.csv");
  CHECK(csv.rfind("tau_ps,p_ub,p_ub_err,p_cc_mumu,p_cc_0mu,p_cc_mu0,p_d1,p_d2", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  // Duplicated inputs force a negative numerator, reported as such.
  CHECK_THAT(csv, ContainsSubstring(",-"));
}

TEST_CASE("bound extraction validates its flag sets", "[cli]") {
  TempDir dir("decoyflags");
  std::string cfg = write_config(dir, kCleanConfig);
  REQUIRE(run("--config " + cfg + " --out " + (dir / "a") + " simulate-scan --delays 0:0:1 --tags")
              .exit_code == 0);
  std::string tags = dir / "a/tags_000.homt";

  // Tag route without the mandatory gate count.
  auto r1 = run("--out " + (dir / "o") + " decoy --both-tags " + tags + " --blocked1-tags " + tags +
                " --blocked2-tags " + tags);
  CHECK(r1.exit_code == 2);

  // Mixing table and tag routes.
  auto r2 = run("--out " + (dir / "o") + " decoy --both " + (dir / "a/scan.csv") +
                " --blocked1-tags " + tags + " --blocked2-tags " + tags + " --gates 100000");
  CHECK(r2.exit_code == 2);

  // Complete tag route works.
  auto ok = run("--out " + (dir / "o") + " decoy --both-tags " + tags + " --blocked1-tags " + tags +
                " --blocked2-tags " + tags + " --gates 100000 --tau 0");
  CHECK(ok.exit_code == 0);
  CHECK(fs::exists(dir / "o/decoy.csv"));
}
