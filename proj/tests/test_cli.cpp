// End-to-end checks of the command-line binary. The build passes the binary
// location in as BGMD_CLI_PATH; every test works inside a scratch directory
// under the test working directory.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#ifdef __unix__
#include <sys/wait.h>
#endif

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + BGMD_CLI_PATH + "\" " + args;
  const int rc = std::system(cmd.c_str());
#ifdef __unix__
  if (WIFEXITED(rc)) return WEXITSTATUS(rc);
  return -1;
#else
  return rc;
#endif
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path("cli_test_tmp") / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const char* kSmallConfig =
    "[task]\n"
    "kind = quadratic\n"
    "dim = 8\n"
    "[oracle]\n"
    "batch_size = 5\n"
    "minibatch = 1\n"
    "[aggregator]\n"
    "kind = bgmd\n"
    "k = 2\n"
    "[engine]\n"
    "iterations = 20\n"
    "step_policy = quarter_inv_l\n"
    "seed = 11\n";

}  // namespace

TEST_CASE("cli run: writes outputs and reruns byte-identically") {
  const fs::path dir = fresh_dir("run");
  const fs::path cfg = dir / "exp.ini";
  write_file(cfg, kSmallConfig);

  const fs::path out1 = dir / "out1";
  const fs::path out2 = dir / "out2";
  const std::string base = "run \"" + cfg.string() + "\" --out-dir \"";
  CHECK(run_cli(base + out1.string() + "\" > \"" + (dir / "stdout1.txt").string() +
                "\"") == 0);
  CHECK(run_cli(base + out2.string() + "\" > /dev/null") == 0);

  REQUIRE(fs::exists(out1 / "metrics.jsonl"));
  REQUIRE(fs::exists(out1 / "resolved.ini"));
  const std::string metrics1 = slurp(out1 / "metrics.jsonl");
  const std::string metrics2 = slurp(out2 / "metrics.jsonl");
  CHECK(count_lines(metrics1) == 20);
  CHECK(metrics1 == metrics2);

  // Every line is valid JSON with the metric fields.
  std::stringstream ss(metrics1);
  std::string line;
  while (std::getline(ss, line)) {
    const nlohmann::json rec = nlohmann::json::parse(line);
    CHECK(rec.contains("iter"));
    CHECK(rec.contains("loss"));
    CHECK(rec.contains("dist_sq"));
    // Deterministic timings are the default for file output.
    CHECK(rec["agg_ns"] == 0);
    CHECK(rec["total_ns"] == 0);
  }

  // The resolved config echo must itself be loadable.
  const fs::path out3 = dir / "out3";
  CHECK(run_cli("run \"" + (out1 / "resolved.ini").string() + "\" --out-dir \"" +
                out3.string() + "\" > /dev/null") == 0);
  CHECK(slurp(out3 / "metrics.jsonl") == metrics1);

  const std::string console = slurp(dir / "stdout1.txt");
  CHECK(console.find("status: completed") != std::string::npos);
  CHECK(console.find("final_loss:") != std::string::npos);
}

TEST_CASE("cli run: seed override changes the trajectory") {
  const fs::path dir = fresh_dir("seed");
  const fs::path cfg = dir / "exp.ini";
  write_file(cfg, kSmallConfig);
  const fs::path out1 = dir / "a";
  const fs::path out2 = dir / "b";
  CHECK(run_cli("run \"" + cfg.string() + "\" --out-dir \"" + out1.string() +
                "\" > /dev/null") == 0);
  CHECK(run_cli("run \"" + cfg.string() + "\" --seed 99 --out-dir \"" +
                out2.string() + "\" > /dev/null") == 0);
  CHECK(slurp(out1 / "metrics.jsonl") != slurp(out2 / "metrics.jsonl"));
}

TEST_CASE("cli gm: solves a median instance from a points file") {
  const fs::path dir = fresh_dir("gm");
  const fs::path pts = dir / "points.csv";
  write_file(pts, "1\n2\n100\n");
  const fs::path out = dir / "gm.json";
  CHECK(run_cli("gm \"" + pts.string() + "\" > \"" + out.string() + "\"") == 0);
  const nlohmann::json res = nlohmann::json::parse(slurp(out));
  REQUIRE(res.contains("point"));
  REQUIRE(res["point"].is_array());
  REQUIRE(res["point"].size() == 1);
  CHECK(std::abs(res["point"][0].get<double>() - 2.0) < 1e-3);
  CHECK(std::abs(res["objective"].get<double>() - 99.0) < 1e-3);
  CHECK(res["converged"].get<bool>());
}

TEST_CASE("cli bench: emits a CSV table over block sizes") {
  const fs::path dir = fresh_dir("bench");
  const fs::path out = dir / "bench.csv";
  CHECK(run_cli("bench --d 200 --b 8 --k 20 --k 200 --trials 3 > \"" +
                out.string() + "\"") == 0);
  const std::string csv = slurp(out);
  std::stringstream ss(csv);
  std::string line;
  REQUIRE(std::getline(ss, line));
  CHECK(line == "k,bgmd_ns,gm_ns,speedup");
  std::vector<std::string> rows;
  while (std::getline(ss, line)) rows.push_back(line);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rfind("20,", 0) == 0);
  CHECK(rows[1].rfind("200,", 0) == 0);
}

TEST_CASE("cli sweep: cartesian cells land in summary.csv") {
  const fs::path dir = fresh_dir("sweep");
  const fs::path cfg = dir / "exp.ini";
  write_file(cfg, kSmallConfig);
  const fs::path out = dir / "grid";
  CHECK(run_cli("sweep \"" + cfg.string() +
                "\" --param aggregator.kind=mean,gm --seeds 2 --out-dir \"" +
                out.string() + "\" > /dev/null") == 0);
  REQUIRE(fs::exists(out / "summary.csv"));
  const std::string csv = slurp(out / "summary.csv");
  std::stringstream ss(csv);
  std::string line;
  REQUIRE(std::getline(ss, line));
  CHECK(line ==
        "aggregator.kind,seed,final_loss,final_dist_sq,"
        "final_residual_ratio,diverged");
  std::vector<std::string> rows;
  while (std::getline(ss, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);  // 2 values x 2 seeds
  CHECK(rows[0].rfind("mean,11,", 0) == 0);
  CHECK(rows[1].rfind("mean,12,", 0) == 0);
  CHECK(rows[2].rfind("gm,11,", 0) == 0);
  CHECK(rows[3].rfind("gm,12,", 0) == 0);
  // Each cell keeps its own full metrics directory.
  CHECK(fs::exists(out / "aggregator.kind-mean_seed-11" / "metrics.jsonl"));
  CHECK(fs::exists(out / "aggregator.kind-gm_seed-12" / "metrics.jsonl"));
}

TEST_CASE("cli: broken inputs exit nonzero with a diagnostic") {
  const fs::path dir = fresh_dir("errors");
  const fs::path bad = dir / "bad.ini";
  write_file(bad, "[task]\nkind = banana\n");
  const fs::path err = dir / "stderr.txt";
  CHECK(run_cli("run \"" + bad.string() + "\" 2> \"" + err.string() +
                "\" > /dev/null") != 0);
  CHECK(slurp(err).find("error:") != std::string::npos);

  CHECK(run_cli("run \"" + (dir / "missing.ini").string() +
                "\" 2> /dev/null > /dev/null") != 0);
  CHECK(run_cli("definitely-not-a-subcommand 2> /dev/null > /dev/null") != 0);
  CHECK(run_cli("2> /dev/null > /dev/null") != 0);  // subcommand required
}
