#include <string>

#include "bgmd/config.hpp"
#include "bgmd/record.hpp"
#include "doctest.h"
#include "test_support.hpp"

using bgmd::ConfigError;
using bgmd::ExperimentConfig;

namespace {

bool mentions_line(const std::exception& e, const std::string& needle) {
  return std::string(e.what()).find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("echo of the defaults reparses to the identical echo") {
  const ExperimentConfig defaults;
  const std::string once = bgmd::echo_config(defaults);
  const ExperimentConfig reparsed = bgmd::parse_config_text(once);
  const std::string twice = bgmd::echo_config(reparsed);
  CHECK(once == twice);
  // Spot-check a few round-tripped values.
  CHECK(reparsed.task_kind == "least_squares");
  CHECK(reparsed.dim == 50);
  CHECK(reparsed.k_frac == 0.1);
  CHECK(reparsed.seed == 42);
  CHECK(reparsed.deterministic_timings == true);
}

TEST_CASE("parser accepts comments, blank lines, and whitespace") {
  const std::string text =
      "# leading comment\n"
      "\n"
      "; alternate comment marker\n"
      "[task]\n"
      "  kind = quadratic   \n"
      "dim = 7  \n"
      "\n"
      "[engine]\n"
      "iterations = 5\n";
  const ExperimentConfig cfg = bgmd::parse_config_text(text);
  CHECK(cfg.task_kind == "quadratic");
  CHECK(cfg.dim == 7);
  CHECK(cfg.iterations == 5);
  // Untouched sections keep their defaults.
  CHECK(cfg.batch_size == 10);
}

TEST_CASE("comment markers inside a value are taken literally") {
  // Only whole-line comments exist; anything after '=' is the value. This
  // keeps path-valued keys safe from silent truncation.
  const ExperimentConfig cfg = bgmd::parse_config_text(
      "[output]\ndir = runs;not-a-comment\n");
  CHECK(cfg.out_dir == "runs;not-a-comment");
}

TEST_CASE("parser rejects unknown sections and keys with line numbers") {
  try {
    bgmd::parse_config_text("[task]\nkind = quadratic\n[banana]\nx = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(mentions_line(e, "line 3"));
    CHECK(mentions_line(e, "banana"));
  }
  try {
    bgmd::parse_config_text("[task]\nkind = quadratic\nbogus_key = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(mentions_line(e, "line 3"));
    CHECK(mentions_line(e, "bogus_key"));
  }
}

TEST_CASE("parser rejects duplicates, orphan keys, and malformed values") {
  try {
    bgmd::parse_config_text("[task]\ndim = 5\ndim = 6\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(mentions_line(e, "line 3"));
    CHECK(mentions_line(e, "duplicate"));
  }
  // Key before any section header.
  CHECK_THROWS_AS(bgmd::parse_config_text("dim = 5\n"), ConfigError);
  // Unparseable numbers.
  CHECK_THROWS_AS(bgmd::parse_config_text("[task]\ndim = five\n"),
                  ConfigError);
  CHECK_THROWS_AS(bgmd::parse_config_text("[task]\ndim = -3\n"), ConfigError);
  CHECK_THROWS_AS(bgmd::parse_config_text("[oracle]\nadditive_std = 1.2.3\n"),
                  ConfigError);
  CHECK_THROWS_AS(
      bgmd::parse_config_text("[oracle]\nheterogeneous = maybe\n"),
      ConfigError);
  // Missing '='.
  CHECK_THROWS_AS(bgmd::parse_config_text("[task]\ndim 5\n"), ConfigError);
}

TEST_CASE("parser enforces semantic ranges") {
  CHECK_THROWS_AS(bgmd::parse_config_text("[corruption]\npsi = 0.5\n"),
                  ConfigError);
  CHECK_THROWS_AS(bgmd::parse_config_text("[corruption]\npsi = -0.1\n"),
                  ConfigError);
  CHECK_THROWS_AS(bgmd::parse_config_text("[engine]\niterations = 0\n"),
                  ConfigError);
  CHECK_THROWS_AS(bgmd::parse_config_text("[engine]\nquant_bits = 0\n"),
                  ConfigError);
  CHECK_THROWS_AS(bgmd::parse_config_text("[engine]\nmode = turbo\n"),
                  ConfigError);
  CHECK_THROWS_AS(bgmd::parse_config_text("[aggregator]\nkind = trimmed\n"),
                  ConfigError);
  CHECK_THROWS_AS(bgmd::parse_config_text("[corruption]\nattack = emp\n"),
                  ConfigError);
  // Boundary values that must be accepted.
  CHECK_NOTHROW(bgmd::parse_config_text("[corruption]\npsi = 0.49\n"));
  CHECK_NOTHROW(bgmd::parse_config_text("[engine]\nquant_bits = 1\n"));
}

TEST_CASE("dotted-path assignment mirrors the file parser") {
  ExperimentConfig cfg;
  bgmd::set_config_value(cfg, "task.dim", "12");
  CHECK(cfg.dim == 12);
  bgmd::set_config_value(cfg, "aggregator.kind", "gm");
  CHECK(cfg.agg_kind == "gm");
  bgmd::set_config_value(cfg, "engine.gamma", "0.03");
  CHECK(cfg.gamma == 0.03);
  CHECK_THROWS_AS(bgmd::set_config_value(cfg, "task.bogus", "1"), ConfigError);
  CHECK_THROWS_AS(bgmd::set_config_value(cfg, "nosection.dim", "1"),
                  ConfigError);
  CHECK_THROWS_AS(bgmd::set_config_value(cfg, "task.dim", "what"),
                  ConfigError);
  CHECK_THROWS_AS(bgmd::set_config_value(cfg, "taskdim", "1"), ConfigError);
}

TEST_CASE("block size resolution: absolute wins, fraction rounds down") {
  ExperimentConfig cfg;
  cfg.k = 7;
  CHECK(bgmd::resolve_block_size(cfg, 50) == 7);
  cfg.k = 400;  // clamped to the dimension
  CHECK(bgmd::resolve_block_size(cfg, 50) == 50);
  cfg.k = 0;
  cfg.k_frac = 0.1;
  CHECK(bgmd::resolve_block_size(cfg, 50) == 5);
  cfg.k_frac = 0.015;
  CHECK(bgmd::resolve_block_size(cfg, 50) == 1);  // floor(0.75) -> at least 1
  cfg.k_frac = 1.0;
  CHECK(bgmd::resolve_block_size(cfg, 50) == 50);
  cfg.k_frac = 0.3;
  CHECK(bgmd::resolve_block_size(cfg, 10) == 3);  // 0.3*10 rounds cleanly
}

TEST_CASE("build_task produces the advertised kinds deterministically") {
  ExperimentConfig cfg;
  cfg.task_kind = "quadratic";
  cfg.dim = 6;
  const bgmd::Task a = bgmd::build_task(cfg);
  const bgmd::Task b = bgmd::build_task(cfg);
  CHECK(a.kind() == bgmd::TaskKind::kQuadratic);
  CHECK(a.dim() == 6);
  REQUIRE(a.optimum().has_value());
  REQUIRE(b.optimum().has_value());
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK((*a.optimum())[j] == (*b.optimum())[j]);
  }

  cfg.task_kind = "least_squares";
  cfg.dim = 5;
  cfg.num_samples = 20;
  const bgmd::Task ls = bgmd::build_task(cfg);
  CHECK(ls.kind() == bgmd::TaskKind::kLeastSquares);
  CHECK(ls.num_samples() == 20);

  cfg.task_kind = "logistic";
  cfg.ridge = 0.05;
  const bgmd::Task lo = bgmd::build_task(cfg);
  CHECK(lo.kind() == bgmd::TaskKind::kLogistic);

  cfg.task_kind = "tiny_mlp";
  cfg.dim = 4;
  cfg.hidden = 3;
  cfg.num_samples = 10;
  const bgmd::Task mlp = bgmd::build_task(cfg);
  CHECK(mlp.kind() == bgmd::TaskKind::kTinyMlp);
  CHECK(mlp.dim() == 4 * 3 + 3 + 3 + 1);

  cfg.task_kind = "banana";
  CHECK_THROWS_AS(bgmd::build_task(cfg), ConfigError);
}

TEST_CASE("execute_experiment: smoke runs for both engine modes") {
  ExperimentConfig cfg;
  cfg.task_kind = "quadratic";
  cfg.dim = 8;
  cfg.agg_kind = "bgmd";
  cfg.k = 2;
  cfg.iterations = 25;
  cfg.step_policy = "quarter_inv_l";
  cfg.batch_size = 5;
  cfg.minibatch = 1;
  cfg.seed = 11;

  bgmd::VectorSink sink;
  const bgmd::RunResult r = bgmd::execute_experiment(cfg, &sink);
  CHECK(!r.diverged);
  CHECK(r.records.size() == 25);
  CHECK(sink.records().size() == 25);
  REQUIRE(r.final_dist_sq.has_value());
  REQUIRE(r.records[0].dist_to_opt_sq.has_value());
  CHECK(*r.final_dist_sq < *r.records[0].dist_to_opt_sq);

  cfg.mode = "fed";
  cfg.local_steps = 2;
  cfg.quant_bits = 4;
  const bgmd::RunResult f = bgmd::execute_experiment(cfg, nullptr);
  CHECK(!f.diverged);
  // The iteration budget counts local steps, so 25 steps fit 12 rounds of 2
  // and one record is emitted per round.
  CHECK(f.records.size() == 12);
  REQUIRE(f.final_dist_sq.has_value());
  CHECK(*f.final_dist_sq < *r.records[0].dist_to_opt_sq);
}

TEST_CASE("execute_experiment honors the aggregator and attack settings") {
  // A mean aggregator under the sign-flip attack diverges; the run must
  // report that instead of throwing.
  ExperimentConfig cfg;
  cfg.task_kind = "quadratic";
  cfg.dim = 10;
  cfg.agg_kind = "mean";
  cfg.iterations = 100;
  cfg.step_policy = "quarter_inv_l";
  cfg.batch_size = 10;
  cfg.minibatch = 1;
  cfg.psi = 0.4;
  cfg.attack = "scaled_bit_flip";
  cfg.seed = 12;
  const bgmd::RunResult r = bgmd::execute_experiment(cfg, nullptr);
  CHECK(r.diverged);
}
