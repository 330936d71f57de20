// bgmd: command-line front end for the robust-aggregation toolkit.
//
//   bgmd run <config.ini>     execute one experiment, write metrics + config
//   bgmd gm <points.csv>      geometric median of a point cloud, as JSON
//   bgmd bench                aggregation timing table, CSV on stdout
//   bgmd sweep <config.ini>   cartesian parameter sweep with a summary CSV
//
// Exit codes: 0 on success (a diverged run is still a completed run),
// nonzero on bad configs, unreadable files, or malformed flags.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bgmd/config.hpp"
#include "bgmd/engine.hpp"
#include "bgmd/gm.hpp"

namespace fs = std::filesystem;

namespace {

// Out-dir precedence: --out-dir flag, then [output] dir in the config,
// then $BGMD_OUT_DIR, then the current directory.
fs::path resolve_out_dir(const std::string& flag_value,
                         const std::string& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (!config_value.empty()) return config_value;
  if (const char* env = std::getenv("BGMD_OUT_DIR"); env && *env) return env;
  return ".";
}

std::string shortest(double v) { return nlohmann::json(v).dump(); }

// Headerless CSV: one point per line, comma-separated floats, every line the
// same width. Used by `bgmd gm`.
bgmd::GradMatrix load_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open points file: " + path);
  std::vector<bgmd::ParamVector> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": not a number: '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().dim()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": inconsistent column count");
    }
    rows.emplace_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no points");
  return bgmd::GradMatrix::from_rows(rows);
}

struct RunSummary {
  bgmd::RunResult result;
  fs::path dir;
};

// Execute one experiment into `dir`, writing metrics.jsonl and resolved.ini.
RunSummary run_one(bgmd::ExperimentConfig cfg, const fs::path& dir) {
  fs::create_directories(dir);
  cfg.out_dir = dir.string();
  {
    std::ofstream resolved(dir / "resolved.ini");
    resolved << bgmd::echo_config(cfg);
  }
  bgmd::JsonlFileSink sink((dir / "metrics.jsonl").string(),
                           cfg.deterministic_timings);
  return RunSummary{bgmd::execute_experiment(cfg, &sink), dir};
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out_dir_flag) {
  bgmd::ExperimentConfig cfg = bgmd::parse_config_file(config_path);
  if (seed) cfg.seed = *seed;
  const fs::path dir = resolve_out_dir(out_dir_flag, cfg.out_dir);
  const RunSummary summary = run_one(std::move(cfg), dir);
  const bgmd::RunResult& r = summary.result;
  std::cout << "status: " << (r.diverged ? "diverged" : "completed") << "\n"
            << "iterations: " << r.records.size() << "\n"
            << "final_loss: " << shortest(r.final_loss) << "\n";
  if (r.final_dist_sq) {
    std::cout << "final_dist_sq: " << shortest(*r.final_dist_sq) << "\n";
  }
  std::cout << "outputs: " << summary.dir.string() << "\n";
  return 0;
}

int cmd_gm(const std::string& points_path, double tol,
           std::size_t max_iters) {
  const bgmd::GradMatrix points = load_points_csv(points_path);
  bgmd::GmConfig cfg;
  cfg.rel_tol = tol;
  cfg.max_iters = max_iters;
  const bgmd::GmResult res = bgmd::weiszfeld(points, cfg);
  nlohmann::ordered_json out;
  out["point"] = std::vector<double>(res.point.span().begin(),
                                     res.point.span().end());
  out["objective"] = res.objective;
  out["iterations"] = res.iterations;
  out["converged"] = res.converged;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_bench(std::size_t d, std::size_t b, std::vector<std::size_t> ks,
              std::size_t trials, std::uint64_t seed) {
  if (ks.empty()) ks = {d / 100, d / 10, d / 2, d};
  for (auto& k : ks) k = std::max<std::size_t>(1, std::min(k, d));
  const std::vector<bgmd::BenchRow> rows =
      bgmd::bench_aggregation(d, b, ks, trials, seed);
  std::cout << "k,bgmd_ns,gm_ns,speedup\n";
  for (const auto& row : rows) {
    std::cout << row.k << "," << row.bgmd_ns << "," << row.gm_ns << ","
              << shortest(row.speedup) << "\n";
  }
  return 0;
}

struct SweepParam {
  std::string key;                  // "section.key"
  std::vector<std::string> values;  // one per cell along this axis
};

SweepParam parse_sweep_param(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw bgmd::ConfigError("--param expects section.key=v1,v2,..., got '" +
                            text + "'");
  }
  SweepParam p;
  p.key = text.substr(0, eq);
  std::stringstream ss(text.substr(eq + 1));
  std::string v;
  while (std::getline(ss, v, ',')) p.values.push_back(v);
  if (p.values.empty()) {
    throw bgmd::ConfigError("--param '" + p.key + "' has no values");
  }
  return p;
}

std::string sanitize_for_path(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') {
      c = '_';
    }
  }
  return s;
}

int cmd_sweep(const std::string& config_path,
              const std::vector<std::string>& param_flags, std::size_t seeds,
              const std::string& out_dir_flag) {
  const bgmd::ExperimentConfig base = bgmd::parse_config_file(config_path);
  std::vector<SweepParam> params;
  params.reserve(param_flags.size());
  for (const auto& f : param_flags) params.push_back(parse_sweep_param(f));

  const fs::path root = resolve_out_dir(out_dir_flag, base.out_dir);
  fs::create_directories(root);

  std::ofstream summary(root / "summary.csv");
  for (const auto& p : params) summary << p.key << ",";
  summary << "seed,final_loss,final_dist_sq,final_residual_ratio,diverged\n";

  // Odometer over the cartesian product of parameter values.
  std::vector<std::size_t> idx(params.size(), 0);
  bool done = false;
  while (!done) {
    bgmd::ExperimentConfig cell = base;
    std::string cell_name;
    for (std::size_t a = 0; a < params.size(); ++a) {
      bgmd::set_config_value(cell, params[a].key, params[a].values[idx[a]]);
      if (!cell_name.empty()) cell_name += "_";
      cell_name += sanitize_for_path(params[a].key + "-" +
                                     params[a].values[idx[a]]);
    }
    if (cell_name.empty()) cell_name = "cell";

    for (std::size_t s = 0; s < seeds; ++s) {
      bgmd::ExperimentConfig run_cfg = cell;
      run_cfg.seed = base.seed + s;
      const fs::path dir = root / (cell_name + "_seed-" +
                                   std::to_string(run_cfg.seed));
      const RunSummary out = run_one(std::move(run_cfg), dir);
      const bgmd::RunResult& r = out.result;
      for (std::size_t a = 0; a < params.size(); ++a) {
        summary << params[a].values[idx[a]] << ",";
      }
      const double residual = r.records.empty()
                                  ? 0.0
                                  : r.records.back().residual_ratio;
      summary << (base.seed + s) << "," << shortest(r.final_loss) << ",";
      if (r.final_dist_sq) summary << shortest(*r.final_dist_sq);
      summary << "," << shortest(residual) << ","
              << (r.diverged ? "true" : "false") << "\n";
    }

    // Advance the odometer (last axis fastest).
    done = true;
    for (std::size_t a = params.size(); a-- > 0;) {
      if (++idx[a] < params[a].values.size()) {
        done = false;
        break;
      }
      idx[a] = 0;
    }
    if (params.empty()) break;  // single cell
  }
  std::cout << "summary: " << (root / "summary.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust distributed-optimization toolkit"};
  app.require_subcommand(1);

  // run
  std::string run_config;
  std::string run_out_dir;
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "Execute one experiment config");
  run->add_option("config", run_config, "Path to the experiment config")
      ->required();
  run->add_option("--seed", run_seed, "Override [engine] seed");
  run->add_option("--out-dir", run_out_dir, "Output directory");

  // gm
  std::string gm_points;
  double gm_tol = 1e-8;
  std::size_t gm_max_iters = 1000;
  auto* gm = app.add_subcommand(
      "gm", "Geometric median of a headerless points CSV");
  gm->add_option("points", gm_points, "CSV file, one point per line")
      ->required();
  gm->add_option("--tol", gm_tol, "Relative convergence tolerance");
  gm->add_option("--max-iters", gm_max_iters, "Iteration cap");

  // bench
  std::size_t bench_d = 100000;
  std::size_t bench_b = 32;
  std::vector<std::size_t> bench_ks;
  std::size_t bench_trials = 20;
  std::uint64_t bench_seed = 42;
  auto* bench = app.add_subcommand(
      "bench", "Aggregation timing table (CSV on stdout)");
  bench->add_option("--d", bench_d, "Gradient dimension");
  bench->add_option("--b", bench_b, "Number of worker rows");
  bench->add_option("--k", bench_ks, "Block sizes (default d/100,d/10,d/2,d)");
  bench->add_option("--trials", bench_trials, "Trials per timing median");
  bench->add_option("--seed", bench_seed, "Data seed");

  // sweep
  std::string sweep_config;
  std::vector<std::string> sweep_params;
  std::size_t sweep_seeds = 1;
  std::string sweep_out_dir;
  auto* sweep = app.add_subcommand(
      "sweep", "Cartesian parameter sweep over one config");
  sweep->add_option("config", sweep_config, "Path to the base config")
      ->required();
  sweep->add_option("--param", sweep_params,
                    "section.key=v1,v2,... (repeatable; cartesian product)");
  sweep->add_option("--seeds", sweep_seeds,
                    "Consecutive seeds per cell, starting at [engine] seed");
  sweep->add_option("--out-dir", sweep_out_dir, "Root output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_config, run_seed, run_out_dir);
    if (gm->parsed()) return cmd_gm(gm_points, gm_tol, gm_max_iters);
    if (bench->parsed()) {
      return cmd_bench(bench_d, bench_b, bench_ks, bench_trials, bench_seed);
    }
    if (sweep->parsed()) {
      return cmd_sweep(sweep_config, sweep_params, sweep_seeds, sweep_out_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
