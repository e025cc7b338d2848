#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

// End-to-end tests driving the installed binary (path in TUBEFLOW_BIN)
// through std::system in a scratch directory.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr double kPi = 3.14159265358979323846;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  fs::path dir = fs::temp_directory_path() / "tubeflow_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

RunResult run(const std::string& args) {
  const char* bin = std::getenv("TUBEFLOW_BIN");
  REQUIRE(bin != nullptr);
  fs::path dir = scratch();
  std::string cmd = "cd '" + dir.string() + "' && '" + std::string(bin) +
                    "' " + args + " > cli_stdout.txt 2> cli_stderr.txt";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "cli_stdout.txt");
  r.err = slurp(dir / "cli_stderr.txt");
  return r;
}

void write_file(const std::string& name, const std::string& body) {
  std::ofstream out(scratch() / name);
  out << body;
}

// First number following `key` in the output.
double value_after(const std::string& text, const std::string& key) {
  size_t pos = text.find(key);
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + key.size()));
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_fixtures() {
  static bool done = false;
  if (done) return;
  done = true;
  write_file("circle.json",
             R"({"family": "circle", "params": {"radius": 1.0},
                 "grid": [64], "ambient_dim": 2})");
  write_file("broken.json", "{\"family\": \"circ");
  std::ostringstream cloud;
  cloud << "x,y\n";
  for (int i = 0; i < 32; ++i) {
    double th = 2.0 * kPi * i / 32;
    cloud << fmt17(1.5 * std::cos(th)) << "," << fmt17(1.5 * std::sin(th))
          << "\n";
  }
  write_file("cloud.csv", cloud.str());
}
}  // namespace

TEST_CASE("argument errors exit with code 2") {
  write_fixtures();
  CHECK(run("").code == 2);
  CHECK(run("--help").code == 0);
  CHECK(run("analyze --spec circle.json").code == 2);          // missing --out
  CHECK(run("analyze --spec missing.json --out o").code == 2);  // no such file
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("analyze writes the report and the constants line") {
  write_fixtures();
  fs::remove_all(scratch() / "an");
  RunResult r = run("analyze --spec circle.json --out an");
  CHECK(r.code == 0);
  CHECK(value_after(r.out, "K=") == doctest::Approx(1.0).epsilon(1e-6));
  double tstar = value_after(r.out, "t_star=");
  CHECK(tstar > 0.0);
  CHECK(value_after(r.out, "epsilon=") ==
        doctest::Approx(value_after(r.out, "delta=") / 3.0).epsilon(1e-12));

  json rep = json::parse(slurp(scratch() / "an" / "report.json"));
  CHECK(rep.at("schema_version") == 1);
  CHECK(rep.at("t_star").get<double>() == doctest::Approx(tstar));
  CHECK(rep.at("grid") == json::array({64}));
  CHECK(fs::exists(scratch() / "an" / "per_point.csv"));
  CHECK_FALSE(fs::exists(scratch() / "an" / "frames.csv"));

  // frame export is opt-in; grid override shrinks the table
  fs::remove_all(scratch() / "an32");
  RunResult r32 =
      run("analyze --spec circle.json --grid 32 --out an32 --export-frames");
  CHECK(r32.code == 0);
  CHECK(fs::exists(scratch() / "an32" / "frames.csv"));
  std::istringstream pp(slurp(scratch() / "an32" / "per_point.csv"));
  int lines = 0;
  std::string row;
  while (std::getline(pp, row))
    if (!row.empty()) ++lines;
  CHECK(lines == 1 + 32 * 17);  // header + nodes x fiber samples
}

TEST_CASE("identical configs produce byte-identical reports") {
  write_fixtures();
  fs::remove_all(scratch() / "da");
  fs::remove_all(scratch() / "db");
  CHECK(run("analyze --spec circle.json --grid 48 --out da").code == 0);
  CHECK(run("analyze --spec circle.json --grid 48 --out db").code == 0);
  CHECK(slurp(scratch() / "da" / "report.json") ==
        slurp(scratch() / "db" / "report.json"));
  CHECK(slurp(scratch() / "da" / "per_point.csv") ==
        slurp(scratch() / "db" / "per_point.csv"));
  // the effective resolution is recorded, not the spec file's
  json rep = json::parse(slurp(scratch() / "da" / "report.json"));
  CHECK(rep.at("grid") == json::array({48}));
}

TEST_CASE("a broken spec leaves no partial outputs") {
  write_fixtures();
  fs::remove_all(scratch() / "partial");
  RunResult r = run("analyze --spec broken.json --out partial");
  CHECK(r.code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK_FALSE(fs::exists(scratch() / "partial" / "report.json"));
  CHECK_FALSE(fs::exists(scratch() / "partial" / "per_point.csv"));
}

TEST_CASE("linear flow snapshots an inward shrink") {
  write_fixtures();
  fs::remove_all(scratch() / "fl");
  RunResult r = run(
      "flow --spec circle.json --field inward --t 0.5 --steps 5 --out fl");
  CHECK(r.code == 0);
  CHECK(r.out.find("steps=5") != std::string::npos);
  CHECK(r.out.find("verdict=pass") != std::string::npos);

  json man = json::parse(slurp(scratch() / "fl" / "manifest.json"));
  CHECK(man.at("mode") == "linear");
  CHECK(man.at("t_values").size() == 6);
  CHECK(man.at("snapshots").size() == 6);
  for (const auto& v : man.at("verdicts")) CHECK(v.at("pass") == true);

  // final snapshot sits on the radius-0.5 circle
  std::istringstream snap(slurp(scratch() / "fl" / "snapshot_005.csv"));
  std::string line;
  std::getline(snap, line);  // header
  std::getline(snap, line);
  std::istringstream cells(line);
  std::string u, x, y;
  std::getline(cells, u, ',');
  std::getline(cells, x, ',');
  std::getline(cells, y, ',');
  CHECK(std::hypot(std::stod(x), std::stod(y)) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("flow through the collapse exits with the oracle code") {
  write_fixtures();
  fs::remove_all(scratch() / "fx");
  RunResult r = run(
      "flow --spec circle.json --field inward --t 1.5 --steps 15 --out fx");
  CHECK(r.code == 4);
  CHECK(r.out.find("verdict=fail") != std::string::npos);
  CHECK(r.out.find("final_penalty=null") != std::string::npos);
  CHECK(r.err.find("oracle failure at t=1") != std::string::npos);
}

TEST_CASE("gradient descent flow writes a decreasing run") {
  write_fixtures();
  fs::remove_all(scratch() / "gd");
  RunResult r = run(
      "flow --spec circle.json --penalty volume --step-rule tstar "
      "--steps 3 --out gd");
  CHECK(r.code == 0);
  CHECK(r.out.find("verdict=pass") != std::string::npos);
  json man = json::parse(slurp(scratch() / "gd" / "manifest.json"));
  CHECK(man.at("mode") == "gradient");
  CHECK(man.at("step_rule") == "tstar");
  auto pen = man.at("penalties").get<std::vector<double>>();
  REQUIRE(pen.size() == 4);
  for (size_t i = 1; i < pen.size(); ++i) CHECK(pen[i] < pen[i - 1]);
  CHECK(man.at("stopped_on_oracle") == false);
  CHECK(fs::exists(scratch() / "gd" / "snapshot_003.csv"));

  RunResult bad = run("flow --spec circle.json --out gd2");
  CHECK(bad.code == 2);  // neither --field nor --penalty
}

TEST_CASE("normality check on the volume penalty") {
  write_fixtures();
  RunResult r = run("check-normality --spec circle.json --penalty volume");
  CHECK(r.code == 0);
  CHECK(value_after(r.out, "normality_defect=") < 1e-3);
  CHECK(value_after(r.out, "invariance_gap=") < 1e-9);
  CHECK(r.out.find("ties=0") != std::string::npos);

  // the pinned probe is the negative control
  RunResult p = run(
      "check-normality --spec circle.json --penalty pinned --pin-axis 0");
  CHECK(p.code == 0);
  CHECK(value_after(p.out, "normality_defect=") > 0.5);
}

TEST_CASE("normality check on the distance penalty") {
  write_fixtures();
  fs::remove_all(scratch() / "nm");
  RunResult r = run(
      "check-normality --spec circle.json --penalty distance "
      "--cloud cloud.csv --out nm");
  CHECK(r.code == 0);
  CHECK(value_after(r.out, "normality_defect=") < 1e-2);
  CHECK(r.out.find("ties=0") != std::string::npos);
  json rep = json::parse(slurp(scratch() / "nm" / "normality.json"));
  CHECK(rep.at("penalty") == "distance");
  CHECK(rep.at("ties") == 0);
  CHECK(fs::exists(scratch() / "nm" / "gradient.csv"));

  RunResult miss =
      run("check-normality --spec circle.json --penalty distance");
  CHECK(miss.code == 2);  // distance requires --cloud
  RunResult unk = run("check-normality --spec circle.json --penalty banana");
  CHECK(unk.code == 2);
}

TEST_CASE("qift subcommand certifies and solves") {
  write_fixtures();
  RunResult r = run("qift --lambda 0.6,1.0,1.44");
  CHECK(r.code == 0);
  CHECK(value_after(r.out, "delta=") == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(value_after(r.out, "B_delta=") == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(value_after(r.out, "delta1=") == doctest::Approx(0.5).epsilon(1e-9));
  size_t pos = r.out.rfind("root=");
  CHECK(std::stod(r.out.substr(pos + 5)) ==
        doctest::Approx(1.2).epsilon(1e-10));
  CHECK(value_after(r.out, "residual=") < 1e-11);

  // outside the certified parameter box
  CHECK(run("qift --lambda 1.6").code == 3);

  // same branch through the generic polynomial problem
  RunResult poly = run(
      "qift --problem poly --coeffs 0,0,1 --base 1,1 --lambda 1.44");
  CHECK(poly.code == 0);
  pos = poly.out.rfind("root=");
  CHECK(std::stod(poly.out.substr(pos + 5)) ==
        doctest::Approx(1.2).epsilon(1e-10));

  fs::remove_all(scratch() / "qf");
  RunResult filed = run("qift --lambda 1.0 --out qf");
  CHECK(filed.code == 0);
  json rep = json::parse(slurp(scratch() / "qf" / "qift.json"));
  CHECK(rep.at("delta").get<double>() == doctest::Approx(0.5));
  CHECK(rep.at("roots").size() == 1);
}
