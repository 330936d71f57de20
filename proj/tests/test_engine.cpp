#include <cmath>
#include <cstddef>
#include <vector>

#include "bgmd/engine.hpp"
#include "bgmd/matrix.hpp"
#include "bgmd/record.hpp"
#include "bgmd/rng.hpp"
#include "doctest.h"
#include "test_support.hpp"

using bgmd::AggregatorKind;
using bgmd::AggregatorState;
using bgmd::AttackKind;
using bgmd::FedRunConfig;
using bgmd::Oracle;
using bgmd::ParamVector;
using bgmd::RunResult;
using bgmd::StepSize;
using bgmd::SyncRunConfig;
using bgmd::Task;

namespace {

SyncRunConfig base_sync(const Task& task, AggregatorKind kind,
                        std::int64_t iters, double gamma) {
  SyncRunConfig cfg;
  cfg.task = &task;
  cfg.oracle.batch_size = 4;
  cfg.oracle.minibatch = 1;
  cfg.aggregator.kind = kind;
  cfg.iterations = iters;
  cfg.step.policy = StepSize::Policy::kConstant;
  cfg.step.gamma = gamma;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("step-size policies resolve against the task constants") {
  const Task task = Task::quadratic(ParamVector({1.0, 2.0}));  // L = 1
  StepSize s;
  s.policy = StepSize::Policy::kConstant;
  s.gamma = 0.125;
  CHECK(s.resolve(task) == 0.125);
  s.policy = StepSize::Policy::kHalfInvL;
  CHECK(s.resolve(task) == doctest::Approx(0.5).epsilon(1e-12));
  s.policy = StepSize::Policy::kQuarterInvL;
  CHECK(s.resolve(task) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("starting at the optimum stays at the optimum") {
  const ParamVector c({0.5, -1.0, 2.0});
  const Task task = Task::quadratic(c);
  SyncRunConfig cfg = base_sync(task, AggregatorKind::kMean, 50, 0.5);
  cfg.x0 = c;
  const RunResult r = bgmd::run_sync(cfg);
  CHECK(!r.diverged);
  REQUIRE(r.records.size() == 50);
  for (const auto& rec : r.records) {
    REQUIRE(rec.dist_to_opt_sq.has_value());
    CHECK(*rec.dist_to_opt_sq == 0.0);
    CHECK(rec.loss == 0.0);
    CHECK(rec.grad_norm_sq == 0.0);
  }
  for (std::size_t j = 0; j < 3; ++j) CHECK(r.final_x[j] == c[j]);
}

TEST_CASE("noise-free quadratic contracts at exactly (1 - gamma) per step") {
  bgmd::RngStream rng(71, "engine-decay");
  const ParamVector c = testsup::random_vector(10, rng);
  double c_sq = 0.0;
  for (std::size_t j = 0; j < 10; ++j) c_sq += testsup::sq(c[j]);

  const Task task = Task::quadratic(c);
  SyncRunConfig cfg = base_sync(task, AggregatorKind::kMean, 30, 0.5);
  const RunResult r = bgmd::run_sync(cfg);
  REQUIRE(r.records.size() == 30);
  double expected = c_sq;  // dist at t: (1-gamma)^(2t) ||c||^2
  for (const auto& rec : r.records) {
    REQUIRE(rec.dist_to_opt_sq.has_value());
    CHECK(*rec.dist_to_opt_sq == doctest::Approx(expected).epsilon(1e-12));
    CHECK(rec.loss == doctest::Approx(0.5 * expected).epsilon(1e-12));
    CHECK(rec.grad_norm_sq == doctest::Approx(expected).epsilon(1e-12));
    expected *= 0.25;
  }
  REQUIRE(r.final_dist_sq.has_value());
  CHECK(*r.final_dist_sq ==
        doctest::Approx(c_sq * std::pow(0.25, 30)).epsilon(1e-9));
}

TEST_CASE("identical configs replay byte-identical runs") {
  bgmd::RngStream rng(72, "engine-replay");
  const Task task = Task::random_least_squares(6, 30, 0.2, rng);
  SyncRunConfig cfg = base_sync(task, AggregatorKind::kBgmd, 40, 0.05);
  cfg.oracle.batch_size = 8;
  cfg.oracle.minibatch = 2;
  cfg.oracle.additive_std = 0.5;
  cfg.aggregator.k = 3;
  cfg.aggregator.reset_memory(6);
  cfg.corruption.psi = 0.25;
  cfg.corruption.attack = AttackKind::kAdditiveGaussian;
  cfg.corruption.additive_std = 5.0;
  cfg.seed = 99;

  const RunResult a = bgmd::run_sync(cfg);
  cfg.aggregator.reset_memory(6);  // state was mutated by the first run
  const RunResult b = bgmd::run_sync(cfg);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    CHECK(bgmd::to_jsonl(a.records[t], true) ==
          bgmd::to_jsonl(b.records[t], true));
  }
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(a.final_x[j] == b.final_x[j]);
  }
}

TEST_CASE("plain averaging diverges under the sign-flip attack") {
  bgmd::RngStream rng(73, "engine-div");
  const Task task = Task::quadratic(testsup::random_vector(20, rng));
  SyncRunConfig cfg = base_sync(task, AggregatorKind::kMean, 200, 0.25);
  cfg.oracle.batch_size = 10;
  cfg.oracle.additive_std = 0.05;
  cfg.corruption.psi = 0.4;
  cfg.corruption.attack = AttackKind::kScaledBitFlip;  // scale -100
  const RunResult r = bgmd::run_sync(cfg);
  CHECK(r.diverged);
  CHECK(r.records.size() < 200);  // halted early
}

TEST_CASE("block median survives the attack that kills averaging") {
  bgmd::RngStream rng(74, "engine-robust");
  const Task task = Task::quadratic(testsup::random_vector(20, rng));
  SyncRunConfig cfg = base_sync(task, AggregatorKind::kBgmd, 150, 0.25);
  cfg.oracle.batch_size = 10;
  cfg.oracle.additive_std = 0.1;
  cfg.aggregator.k = 2;  // 10% of the coordinates per step
  cfg.aggregator.use_memory = false;
  cfg.aggregator.reset_memory(20);
  cfg.corruption.psi = 0.4;
  cfg.corruption.attack = AttackKind::kScaledBitFlip;
  const RunResult r = bgmd::run_sync(cfg);
  CHECK(!r.diverged);
  REQUIRE(r.records.size() == 150);
  REQUIRE(r.final_dist_sq.has_value());
  REQUIRE(r.records[0].dist_to_opt_sq.has_value());
  CHECK(*r.final_dist_sq < *r.records[0].dist_to_opt_sq * 1e-2);
}

TEST_CASE("observer sees the configured corruption pattern") {
  bgmd::RngStream rng(75, "engine-observe");
  const Task task = Task::quadratic(testsup::random_vector(5, rng));
  SyncRunConfig cfg = base_sync(task, AggregatorKind::kGm, 20, 0.25);
  cfg.oracle.batch_size = 10;
  cfg.corruption.psi = 0.3;
  cfg.corruption.attack = AttackKind::kAdditiveGaussian;
  cfg.corruption.dynamic = false;

  std::vector<std::vector<std::size_t>> seen;
  cfg.observer = [&](const bgmd::StepTrace& trace) {
    seen.push_back(trace.corrupt_indices);
    CHECK(trace.gamma == 0.25);
  };
  const RunResult r = bgmd::run_sync(cfg);
  REQUIRE(seen.size() == 20);
  for (const auto& idx : seen) {
    CHECK(idx.size() == 3);
    CHECK(idx == seen[0]);  // static draw is frozen
  }
  for (const auto& rec : r.records) CHECK(rec.corrupt_count == 3);
}

TEST_CASE("streaming sink receives exactly the returned records") {
  bgmd::RngStream rng(76, "engine-sink");
  const Task task = Task::quadratic(testsup::random_vector(4, rng));
  SyncRunConfig cfg = base_sync(task, AggregatorKind::kMean, 15, 0.25);
  bgmd::VectorSink sink;
  cfg.sink = &sink;
  const RunResult r = bgmd::run_sync(cfg);
  REQUIRE(sink.records().size() == r.records.size());
  for (std::size_t t = 0; t < r.records.size(); ++t) {
    CHECK(bgmd::to_jsonl(sink.records()[t], true) ==
          bgmd::to_jsonl(r.records[t], true));
  }
}

TEST_CASE("carry vector stays bounded on pure noise") {
  // Feed the block aggregator i.i.d. noise rows forever. The carried residual
  // cannot grow without bound: with keep fraction xi = k/d the stationary
  // carry energy is at most 4 (1 - xi^2) / xi^2 * gamma^2 * E||row-mean||^2,
  // and norm-proportional selection only tightens it. Generous slack: the
  // check guards against runaway accumulation, not the exact constant.
  const std::size_t d = 100;
  const std::size_t k = 10;
  const std::size_t b = 20;
  const double gamma = 0.05;
  bgmd::RngStream data(77, "engine-carry-data");
  bgmd::RngStream sampler(77, "block-sampler");

  AggregatorState state;
  state.kind = AggregatorKind::kBgmd;
  state.k = k;
  state.use_memory = true;
  state.reset_memory(d);

  const double xi = static_cast<double>(k) / static_cast<double>(d);
  // E||row||^2 = d per row; the batch mean has energy d / b.
  const double mean_energy = static_cast<double>(d) / static_cast<double>(b);
  const double bound =
      4.0 * (1.0 - xi * xi) / (xi * xi) * gamma * gamma * mean_energy;

  std::vector<double> carry_sq;
  for (int t = 0; t < 500; ++t) {
    const bgmd::GradMatrix g = testsup::random_matrix(b, d, data);
    (void)bgmd::aggregate(state, g, gamma, sampler);
    if (t >= 100) {
      double e = 0.0;
      for (std::size_t j = 0; j < d; ++j) e += testsup::sq(state.mem.m_hat[j]);
      carry_sq.push_back(e);
    }
  }
  CHECK(testsup::mean(carry_sq) <= bound);
}

TEST_CASE("federated single-local-step run tracks the synchronous loop") {
  bgmd::RngStream rng(78, "engine-fed1");
  const Task task = Task::quadratic(testsup::random_vector(8, rng));

  SyncRunConfig sync_cfg = base_sync(task, AggregatorKind::kMean, 50, 0.25);
  sync_cfg.seed = 21;
  const RunResult sync_run = bgmd::run_sync(sync_cfg);

  FedRunConfig fed_cfg;
  fed_cfg.task = &task;
  fed_cfg.oracle.batch_size = 4;
  fed_cfg.oracle.minibatch = 1;
  fed_cfg.aggregator.kind = AggregatorKind::kMean;
  fed_cfg.iterations = 50;
  fed_cfg.local_steps = 1;
  fed_cfg.step.policy = StepSize::Policy::kConstant;
  fed_cfg.step.gamma = 0.25;
  fed_cfg.quant_bypass = true;
  fed_cfg.seed = 21;
  const RunResult fed_run = bgmd::run_fed(fed_cfg);

  REQUIRE(fed_run.records.size() == sync_run.records.size());
  for (std::size_t t = 0; t < fed_run.records.size(); ++t) {
    CHECK(fed_run.records[t].loss ==
          doctest::Approx(sync_run.records[t].loss).epsilon(1e-9));
  }
  REQUIRE(fed_run.final_dist_sq.has_value());
  REQUIRE(sync_run.final_dist_sq.has_value());
  CHECK(*fed_run.final_dist_sq ==
        doctest::Approx(*sync_run.final_dist_sq).epsilon(1e-9).scale(1e-300));
}

TEST_CASE("multi-step federated run makes clear progress") {
  bgmd::RngStream rng(79, "engine-fedh");
  const Task task = Task::random_least_squares(10, 60, 0.1, rng);
  FedRunConfig cfg;
  cfg.task = &task;
  cfg.oracle.batch_size = 8;
  cfg.oracle.minibatch = 5;
  cfg.aggregator.kind = AggregatorKind::kMean;
  cfg.iterations = 400;  // total local-step budget: 40 rounds of 10
  cfg.local_steps = 10;
  cfg.step.policy = StepSize::Policy::kQuarterInvL;
  cfg.quant_bypass = true;
  cfg.seed = 33;
  const RunResult r = bgmd::run_fed(cfg);
  CHECK(!r.diverged);
  REQUIRE(r.records.size() == 40);
  std::vector<double> early;
  std::vector<double> late;
  for (std::size_t t = 0; t < 10; ++t) early.push_back(r.records[t].loss);
  for (std::size_t t = 30; t < 40; ++t) late.push_back(r.records[t].loss);
  CHECK(testsup::median_of(late) < testsup::median_of(early));
  CHECK(r.final_loss < r.records[0].loss * 0.5);
}

TEST_CASE("federated messages live on the quantizer lattice") {
  // Single client, one local step, no oracle noise: the transmitted delta is
  // exactly gamma * (x_t - c), whose norm the test can reconstruct. Every
  // server update must then be an integer multiple of ||delta|| / (2^b w).
  bgmd::RngStream rng(80, "engine-fedq");
  const ParamVector c = testsup::random_vector(8, rng);
  const Task task = Task::quadratic(c);

  FedRunConfig cfg;
  cfg.task = &task;
  cfg.oracle.batch_size = 1;
  cfg.oracle.minibatch = 1;
  cfg.aggregator.kind = AggregatorKind::kMean;
  cfg.iterations = 20;
  cfg.local_steps = 1;
  cfg.step.policy = StepSize::Policy::kConstant;
  cfg.step.gamma = 0.25;
  cfg.quant.bits = 2;
  cfg.seed = 44;

  const double w = cfg.quant.w_for_dim(8);
  ParamVector x = ParamVector::zeros(8);
  std::size_t checked = 0;
  cfg.observer = [&](const bgmd::StepTrace& trace) {
    double delta_sq = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      delta_sq += testsup::sq(0.25 * (x[j] - c[j]));
    }
    const double unit = std::sqrt(delta_sq) / (cfg.quant.levels() * w);
    if (unit > 0.0) {
      for (std::size_t j = 0; j < 8; ++j) {
        const double m = trace.update[j] / unit;
        CHECK(std::abs(m - std::round(m)) < 1e-6 * std::max(1.0, std::abs(m)));
      }
      ++checked;
    }
    for (std::size_t j = 0; j < 8; ++j) x[j] -= trace.update[j];
  };
  const RunResult r = bgmd::run_fed(cfg);
  CHECK(!r.diverged);
  CHECK(checked == 20);
  // The observer's replayed trajectory must agree with the engine's.
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(x[j] == r.final_x[j]);
  }
}

TEST_CASE("clean-run parity: block pipeline keeps pace with full baselines") {
  // Compare mid-descent (signal well above the noise floor): with the carry
  // vector replaying dropped coordinates after a ~d/k step lag, the
  // compressed run should track the uncompressed ones within a small factor.
  bgmd::RngStream rng(81, "engine-parity");
  const Task task = Task::quadratic(testsup::random_vector(40, rng));

  auto run_with = [&](AggregatorKind kind) {
    SyncRunConfig cfg = base_sync(task, kind, 1000, 0.002);
    cfg.oracle.batch_size = 10;
    cfg.oracle.additive_std = 0.05;
    cfg.seed = 3;
    if (kind == AggregatorKind::kBgmd) {
      cfg.aggregator.k = 4;  // 10% of the coordinates
      cfg.aggregator.use_memory = true;
      cfg.aggregator.reset_memory(40);
    }
    return bgmd::run_sync(cfg);
  };
  const RunResult mean_run = run_with(AggregatorKind::kMean);
  const RunResult gm_run = run_with(AggregatorKind::kGm);
  const RunResult block_run = run_with(AggregatorKind::kBgmd);

  REQUIRE(mean_run.final_dist_sq.has_value());
  REQUIRE(gm_run.final_dist_sq.has_value());
  REQUIRE(block_run.final_dist_sq.has_value());
  REQUIRE(block_run.records[0].dist_to_opt_sq.has_value());
  // Everyone makes real progress...
  CHECK(*block_run.final_dist_sq < *block_run.records[0].dist_to_opt_sq * 0.1);
  // ...and compression costs at most a small constant factor here.
  const double floor_ref =
      std::max(*mean_run.final_dist_sq, *gm_run.final_dist_sq);
  CHECK(*block_run.final_dist_sq <= 5.0 * floor_ref + 1e-12);
}

TEST_CASE("block pipeline trains an over-parameterized model end to end") {
  bgmd::RngStream rng(82, "engine-mlp");
  const Task task = Task::random_tiny_mlp(8, 12, 12, rng);  // 121 params
  SyncRunConfig cfg = base_sync(task, AggregatorKind::kBgmd, 200, 0.0);
  cfg.step.policy = StepSize::Policy::kQuarterInvL;
  cfg.oracle.batch_size = 6;
  cfg.oracle.minibatch = 4;
  cfg.aggregator.k = 12;  // ~10% of the parameters
  cfg.aggregator.reset_memory(task.dim());
  cfg.seed = 5;
  // The all-zeros default start is a symmetry point of the network (hidden
  // activations vanish, so only the output bias has gradient); break it.
  bgmd::RngStream init(82, "engine-mlp-init");
  std::vector<double> x0(task.dim());
  for (auto& v : x0) v = 0.5 * init.next_normal();
  cfg.x0 = bgmd::ParamVector::unchecked(std::move(x0));
  const RunResult r = bgmd::run_sync(cfg);
  CHECK(!r.diverged);
  REQUIRE(r.records.size() == 200);
  // Sustained, large progress on the non-convex task through the compressed
  // robust pipeline.
  CHECK(r.final_loss < 1e-2 * r.records[0].loss);
  std::vector<double> first_q;
  std::vector<double> last_q;
  for (std::size_t t = 0; t < 50; ++t) first_q.push_back(r.records[t].loss);
  for (std::size_t t = 150; t < 200; ++t) last_q.push_back(r.records[t].loss);
  CHECK(testsup::median_of(last_q) < testsup::median_of(first_q));
  // The block really drops mass (the run is genuinely compressed), and the
  // ratio stays a valid fraction throughout.
  int positive = 0;
  for (const auto& rec : r.records) {
    CHECK(rec.residual_ratio >= 0.0);
    CHECK(rec.residual_ratio <= 1.0);
    if (rec.residual_ratio > 0.0) ++positive;
  }
  CHECK(positive >= 190);
}
