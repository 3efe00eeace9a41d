#include <doctest.h>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"

using namespace lre;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lre");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("lre_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string write_file(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << text;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const std::string fixture = std::string(LRE_TEST_DATA) + "/fixture20.csv";

std::vector<std::vector<std::string>> cells_of(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

CsvTable table_of(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

}  // namespace

TEST_CASE("simulate") {
  const Result r = run_cli({"simulate", "--preset", "smoke", "--seed", "5"});
  REQUIRE(r.code == 0);
  const CsvTable t = table_of(r.out);
  CHECK(t.values.rows() == 500);
  CHECK(t.header.size() == 3 + 6 + 20);
  CHECK(t.header[0] == "y_star");
  CHECK(t.header[1] == "y_o");
  CHECK(t.header[2] == "d");
  CHECK(t.header[3] == "x1");
  CHECK(t.header[9] == "z1");
  CHECK(run_cli({"simulate", "--preset", "smoke", "--seed", "5"}).out == r.out);
  CHECK(run_cli({"simulate", "--preset", "smoke", "--seed", "6"}).out != r.out);

  const std::string stem = (scratch() / "sim").string();
  CHECK(run_cli({"simulate", "--preset", "smoke", "--seed", "5", "--out", stem}).code == 0);
  CHECK(slurp(stem + ".csv") == r.out);
}

TEST_CASE("exit codes") {
  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"nonsense"}).code == 2);
  CHECK(run_cli({"simulate", "--preset", "table9"}).code == 2);
  CHECK(run_cli({"simulate", "--dimZ", "0"}).code == 2);
  CHECK(run_cli({"estimate"}).code == 2);
  CHECK(run_cli({"montecarlo", "--reps", "1"}).code == 2);

  const std::string no_d = write_file("no_d.csv", "y_o,x1,z1\n1,2,3\n4,5,6\n7,8,9\n");
  const std::string cfg = write_file("no_d.json", "{\"input\": \"" + no_d + "\"}");
  const Result r = run_cli({"estimate", "--config", cfg});
  CHECK(r.code == 2);
  CHECK(r.err.find("d") != std::string::npos);
  CHECK(r.err.find("file has y_o x1 z1") != std::string::npos);

  const std::string unknown = write_file("unknown.json", "{\"band\": {\"bootstrapp\": 10}}");
  const Result u = run_cli({"band", "--config", unknown});
  CHECK(u.code == 2);
  CHECK(u.err.find("band.bootstrapp") != std::string::npos);
  CHECK(run_cli({"band", "--config", write_file("type.json", "{\"seed\": \"x\"}")}).code == 2);
  CHECK(run_cli({"band", "--config", write_file("broken.json", "{")}).code == 2);

  // collinear basis columns: identification failure
  const std::string dup = write_file("dup.csv", "y_o,d,x1,x2,z1\n1,1,1,1,0.5\n2,0,2,2,-1\n3,1,3,3,0.2\n"
                                               "1,1,4,4,0.1\n2,0,5,5,0.7\n3,1,6,6,-0.3\n1,1,7,7,0.9\n2,0,8,8,-0.8\n"
                                               "3,1,9,9,0.4\n4,1,10,10,0.0\n");
  const std::string dcfg = write_file("dup.json", "{\"input\": \"" + dup + "\", \"crossfit\": {\"folds\": 2}}");
  CHECK(run_cli({"estimate", "--config", dcfg}).code == 3);

  ::setenv("LRE_THREADS", "zero", 1);
  CHECK(run_cli({"simulate", "--preset", "smoke"}).code == 2);
  ::setenv("LRE_THREADS", "1", 1);
  CHECK(run_cli({"simulate", "--preset", "smoke"}).code == 0);
  ::unsetenv("LRE_THREADS");
}

TEST_CASE("estimate matches a hand-run pipeline") {
  // With an overwhelming penalty and no refit, mu is the mean of the observed
  // outcomes in the fold complement and s the complement's presence rate.
  const std::string cfg = write_file("est.json", "{\"input\": \"" + fixture +
                                                     "\", \"seed\": 17, \"first_stage\": {\"lambda\": 1e12, "
                                                     "\"post_selection\": false}}");
  const Result r = run_cli({"estimate", "--config", cfg});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);

  std::ifstream in(fixture);
  const CsvTable t = read_csv(in);
  const Index n = t.values.rows();
  RngStream frng = RngStream(17).substream(1);
  const FoldAssignment folds = make_folds(n, 5, frng);
  const Vector y = t.values.col(t.find("y_o")), d = t.values.col(t.find("d")), x = t.values.col(t.find("x1"));
  oracle::LMat p(n, oracle::LVec(2));
  oracle::LVec signal(n);
  for (Index i = 0; i < n; ++i) {
    long double sy = 0, sd = 0, cnt = 0;
    for (Index k = 0; k < n; ++k) {
      if (folds.fold[k] == folds.fold[i]) continue;
      cnt += 1;
      sd += d(k);
      sy += d(k) * y(k);
    }
    const long double mu = sy / sd, s = std::max(0.01L, sd / cnt);
    signal[i] = mu + d(i) * (y(i) - mu) / s;
    p[i][0] = 1;
    p[i][1] = x(i);
  }
  const auto beta = oracle::weighted_normal_equations(p, signal, oracle::LVec(n, 1.0L));
  REQUIRE(j["beta"].size() == 2);
  for (int k = 0; k < 2; ++k) {
    const double ref = static_cast<double>(beta[k]);
    CHECK(std::abs(j["beta"][k].get<double>() - ref) < 1e-9 * std::max(1.0, std::abs(ref)));
  }
  CHECK(j["diagnostics"]["singular"] == false);
  CHECK(j["Omega"].size() == 2);
}

TEST_CASE("estimate is byte-identical across runs") {
  const std::string cfg = write_file("est2.json", "{\"input\": \"" + fixture + "\"}");
  const Result a = run_cli({"estimate", "--config", cfg, "--seed", "3"});
  const Result b = run_cli({"estimate", "--config", cfg, "--seed", "3"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const Json j = Json::parse(a.out);
  CHECK(j["seed"] == 3);
  CHECK(j["lambda"] == "auto");
}

TEST_CASE("band output") {
  const std::string stem = (scratch() / "band").string();
  const std::string cfg = write_file("band_cfg.json", "{\"input\": \"" + fixture + "\", \"band\": {\"grid\": {\"points\": 9}}}");
  REQUIRE(run_cli({"band", "--config", cfg, "--out", stem}).code == 0);
  const CsvTable t = table_of(slurp(stem + ".csv"));
  CHECK(t.header == std::vector<std::string>{"x", "g_hat", "e_hat", "pw_lo", "pw_hi", "unif_lo", "unif_hi"});
  CHECK(t.values.rows() == 9);
  const Json j = Json::parse(slurp(stem + ".json"));
  CHECK(j["B"] == 200);
  CHECK(j["alpha"] == 0.05);

  const Result big = run_cli({"band", "--config", cfg, "--bootstrap", "600"});
  INFO(big.err);
  REQUIRE(big.code == 0);
  const CsvTable b = table_of(big.out);
  for (Index i = 0; i < b.values.rows(); ++i) {
    const auto row = b.values.row(i);
    CHECK(row(5) <= row(3));
    CHECK(row(3) <= row(1));
    CHECK(row(1) <= row(4));
    CHECK(row(4) <= row(6));
  }

  const std::string one = write_file("band1_cfg.json", "{\"input\": \"" + fixture + "\", \"band\": {\"grid\": {\"values\": [0.1]}}}");
  const std::string stem1 = (scratch() / "band1").string();
  REQUIRE(run_cli({"band", "--config", one, "--out", stem1}).code == 0);
  const CsvTable s = table_of(slurp(stem1 + ".csv"));
  const Json js = Json::parse(slurp(stem1 + ".json"));
  REQUIRE(s.values.rows() == 1);
  const double ratio = (s.values(0, 6) - s.values(0, 1)) / (s.values(0, 4) - s.values(0, 1));
  const double expect = js["t_star"].get<double>() * std::sqrt(20.0) / js["z_crit"].get<double>();
  CHECK(ratio == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("montecarlo smoke run") {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string stem = (scratch() / "mc").string();
  const Result r = run_cli({"montecarlo", "--preset", "smoke", "--reps", "2", "--dimZ", "20", "--out", stem});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(r.code == 0);
  CHECK(secs < 10.0);
  const auto t = cells_of(slurp(stem + ".csv"));
  CHECK(t.size() == 6);
  CHECK(t[0].size() == 2 + 4 * 3);
  const Json j = Json::parse(slurp(stem + ".json"));
  CHECK(j["reps"] == 2);
  CHECK(j["design"]["dimZ"] == 20);
  CHECK(j["beta0"].size() == 6);

  const Result again = run_cli({"montecarlo", "--preset", "smoke"});
  CHECK(again.out == slurp(stem + ".csv"));
}

TEST_CASE("presets, config and flags layer in that order") {
  cli::RunConfig c;
  cli::apply_preset(c, "table2");
  CHECK(c.design.c == 20.0);
  CHECK(c.alpha == 0.1);
  CHECK(c.reps == 300);
  cli::apply_preset(c, "table1");
  CHECK(c.design.c == 0.1);
  CHECK(c.alpha == 0.05);
  CHECK(c.design.n == 500);
  CHECK(c.design.dim_z == 500);

  cli::apply_config(c, Json::parse(R"({"montecarlo": {"reps": 3, "estimators": ["LRE", "OLS"]},
                                       "design": {"N": 250, "rho": 0.2},
                                       "first_stage": {"lambda": "auto", "trim_floor": 0.05}})"));
  CHECK(c.reps == 3);
  CHECK(c.design.n == 250);
  CHECK(c.design.rho == 0.2);
  CHECK(c.estimators == std::vector<Estimator>{Estimator::ols, Estimator::lre});
  CHECK(c.first_stage.trim_floor == 0.05);
  CHECK_THROWS_AS(cli::apply_config(c, Json::parse(R"({"design": {"N": 1.5}})")), InputError);
  CHECK_THROWS_AS(cli::apply_config(c, Json::parse(R"({"first_stage": {"lambda": "big"}})")), InputError);

  const std::string cfg = write_file("layer_cfg.json", R"({"design": {"N": 120, "dimZ": 10}, "montecarlo": {"reps": 3}})");
  const std::string stem = (scratch() / "layer").string();
  REQUIRE(run_cli({"montecarlo", "--preset", "table2", "--config", cfg, "--reps", "2", "--out", stem}).code == 0);
  const Json j = Json::parse(slurp(stem + ".json"));
  CHECK(j["reps"] == 2);
  CHECK(j["design"]["N"] == 120);
  CHECK(j["design"]["c"] == 20.0);
  CHECK(j["alpha"] == 0.1);
}

TEST_CASE("installed binary") {
  const char* exe = std::getenv("LRE_CLI");
  if (!exe) return;
  const std::string out = (scratch() / "bin.csv").string();
  const std::string cmd = std::string(exe) + " simulate --preset smoke --dimZ 8 > " + out;
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(table_of(slurp(out)).header.size() == 3 + 6 + 8);
  const std::string bad = std::string(exe) + " estimate --config /nonexistent.json 2> /dev/null";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == 2);
  const std::string env = "LRE_THREADS=-3 " + std::string(exe) + " simulate --preset smoke 2> /dev/null > /dev/null";
  CHECK(WEXITSTATUS(std::system(env.c_str())) == 2);
}
