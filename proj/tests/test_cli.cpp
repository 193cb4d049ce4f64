#include <doctest.h>

#include "dvi/csv.hpp"
#include "dvi/experiments.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

using namespace dvi;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  std::random_device rd;
  fs::path dir = fs::temp_directory_path() / ("dvi_cli_" + tag + "_" + std::to_string(rd()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    FAIL("missing column " << name);
    return 0;
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table read_csv(const fs::path& p) {
  std::ifstream in(p);
  Table t;
  std::string line;
  if (std::getline(in, line)) t.header = split(line);
  while (std::getline(in, line)) t.rows.push_back(split(line));
  return t;
}

int run(const std::string& text, const fs::path& dir, std::string* log = nullptr) {
  std::ostringstream os;
  const int code = run_experiment(parse_config(text), dir, os);
  if (log) *log = os.str();
  return code;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(DVI_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  ExperimentConfig c = parse_config("# comment\nexperiment = integrate\n\n  tau=0.5   # trailing\nsystem=double-well\n");
  CHECK(c.experiment() == "integrate");
  CHECK(c.values.at("tau") == "0.5");
  CHECK(c.values.at("system") == "double-well");
  CHECK(c.has("tau"));
  CHECK_FALSE(c.has("T"));

  try {
    parse_config("experiment=integrate\nstep_size=0.1\n");
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "step_size");
    CHECK(std::string(e.what()).find("tau") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("tau=0.1\ntau=0.2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/dvi.cfg"), ConfigError);

  ExperimentConfig s;
  CHECK_THROWS_AS(s.set("nope", "1"), ConfigError);
  s.set("seed", "3");
  CHECK(s.values.at("seed") == "3");
}

TEST_CASE("experiment listing") {
  const std::string text = list_experiments();
  CHECK(text.find("exactness") != std::string::npos);
  CHECK(text.find("fig:harmonic") != std::string::npos);
  for (const std::string& key : experiment_keys()) CHECK(text.find(key) != std::string::npos);
  CHECK(experiment_keys().size() == 6);
}

TEST_CASE("configuration errors exit with code 2") {
  fs::path dir = fresh_dir("errors");
  CHECK(run("experiment=unknown\n", dir) == kExitConfig);
  CHECK(run("", dir) == kExitConfig);
  std::string log;
  CHECK(run("experiment=integrate\ntau=abc\n", dir, &log) == kExitConfig);
  CHECK(log.find("tau") != std::string::npos);
  CHECK(run("experiment=integrate\ntau=-1\n", dir) == kExitConfig);
  CHECK(run("experiment=integrate\nsystem=heisenberg\nscheme=verlet\n", dir) == kExitConfig);
  CHECK(run("experiment=dct-energy\nscheme=verlet\n", dir) == kExitConfig);
  CHECK(run("experiment=integrate\nq0=1,2\n", dir) == kExitConfig);
  CHECK(fs::is_empty(dir));
  fs::remove_all(dir);
}

TEST_CASE("solver failures exit with code 3 and name the step") {
  fs::path dir = fresh_dir("solver");
  std::string log;
  CHECK(run("experiment=energy-conserving\nsystem=double-well\nscheme=stormer\n", dir, &log) == kExitSolver);
  CHECK(log.find("step") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "energy-conserving.csv"));
  fs::remove_all(dir);
}

TEST_CASE("every experiment runs with its defaults") {
  fs::path dir = fresh_dir("defaults");
  for (const std::string& key : experiment_keys()) {
    CAPTURE(key);
    std::string log;
    CHECK(run("experiment=" + key + "\n", dir, &log) == kExitOk);
    Table t = read_csv(dir / (key + ".csv"));
    CHECK_FALSE(t.header.empty());
    CHECK_FALSE(t.rows.empty());
    for (const auto& row : t.rows) CHECK(row.size() == t.header.size());
  }
  fs::remove_all(dir);
}

TEST_CASE("zero steps gives a header-only csv") {
  fs::path dir = fresh_dir("empty");
  CHECK(run("experiment=integrate\nn_steps=0\noutput=empty\n", dir) == kExitOk);
  const std::string text = slurp(dir / "empty.csv");
  CHECK(text.find("energy_error") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  fs::remove_all(dir);
}

TEST_CASE("harmonic midpoint energy column stays at round-off") {
  fs::path dir = fresh_dir("integrate");
  REQUIRE(run("experiment=integrate\nsystem=harmonic\nscheme=midpoint\ntau=0.01\nT=100\n", dir) == kExitOk);
  Table t = read_csv(dir / "integrate.csv");
  CHECK(t.rows.size() == 10001);
  const std::size_t e = t.col("energy_error");
  double worst = 0;
  for (const auto& row : t.rows) worst = std::max(worst, std::abs(std::stod(row[e])));
  CHECK(worst <= 1e-12);
  fs::remove_all(dir);
}

TEST_CASE("canonical rotation leaves the energy error unchanged") {
  fs::path dir = fresh_dir("dct");
  REQUIRE(run("experiment=dct-energy\ntheta=" + CsvWriter::format(std::acos(0.99)) + "\n", dir) == kExitOk);
  Table t = read_csv(dir / "dct-energy.csv");
  const std::size_t d = t.col("abs_difference");
  double worst = 0;
  for (const auto& row : t.rows) worst = std::max(worst, std::stod(row[d]));
  CHECK(t.rows.size() == 10001);
  CHECK(worst <= 1e-12);
  fs::remove_all(dir);
}

TEST_CASE("repeated runs are byte-identical") {
  fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  for (const std::string cfg : {"experiment=defect-sweep\nscheme=midpoint\nsystem=double-well\n",
                                "experiment=control-heisenberg\nsamples=16\nn_steps=40\n"}) {
    REQUIRE(run(cfg, a) == kExitOk);
    REQUIRE(run(cfg, b) == kExitOk);
  }
  for (const char* f : {"defect-sweep.csv", "control-heisenberg.csv"}) {
    CAPTURE(f);
    const std::string x = slurp(a / f);
    CHECK_FALSE(x.empty());
    CHECK(x == slurp(b / f));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("csv writer") {
  std::ostringstream os;
  CsvWriter w(os);
  w.header({"a", "b"});
  w.row(std::vector<double>{0.1, -2});
  w.row(std::vector<std::optional<double>>{std::nullopt, 3.0});
  w.cells({"x", "y"});
  CHECK(os.str() == "a,b\n0.10000000000000001,-2\n,3\nx,y\n");
  CHECK_THROWS_AS(w.row(std::vector<double>{1, 2, 3}), DimensionError);
  CHECK(CsvWriter::format(std::nan("")) == "nan");
  CHECK(CsvWriter::format(INFINITY) == "inf");
  CHECK(CsvWriter::format(-INFINITY) == "-inf");
  CHECK(std::stod(CsvWriter::format(M_PI)) == M_PI);
}

TEST_CASE("command-line front end") {
  fs::path dir = fresh_dir("binary");
  CHECK(run_binary("--list") == 0);
  CHECK(run_binary("--help") == 0);
  CHECK(run_binary("--bogus-flag") == 2);
  CHECK(run_binary("--config /nonexistent/file.cfg") == 2);
  CHECK(run_binary("--experiment nope --out " + dir.string()) == 2);

  std::ofstream(dir / "run.cfg") << "experiment=exactness\nT=1\n";
  CHECK(run_binary("--config " + (dir / "run.cfg").string() + " --experiment integrate --out " + dir.string()) ==
        0);
  CHECK(fs::exists(dir / "integrate.csv"));
  CHECK_FALSE(fs::exists(dir / "exactness.csv"));
  CHECK(read_csv(dir / "integrate.csv").rows.size() == 101);
  fs::remove_all(dir);
}
