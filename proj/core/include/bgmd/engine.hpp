#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "bgmd/aggregate.hpp"
#include "bgmd/corrupt.hpp"
#include "bgmd/record.hpp"
#include "bgmd/tasks.hpp"

namespace bgmd {

struct StepSize {
  enum class Policy { kConstant, kHalfInvL, kQuarterInvL };
  Policy policy = Policy::kConstant;
  double gamma = 0.1;  // used by kConstant only

  double resolve(const Task& task) const;
};

// Everything a test might want to inspect about one engine step. The
// captured matrix inside `diag` is only present when the aggregator was
// configured with capture_detail.
struct StepTrace {
  std::int64_t iter = 0;
  double gamma = 0.0;
  std::vector<std::size_t> corrupt_indices;
  ParamVector update;
  StepDiagnostics diag;
};
using StepObserver = std::function<void(const StepTrace&)>;

struct SyncRunConfig {
  const Task* task = nullptr;
  Oracle oracle{};
  AggregatorState aggregator{};
  CorruptionSpec corruption{};
  std::int64_t iterations = 100;
  StepSize step{};
  std::uint64_t seed = 0;
  std::optional<ParamVector> x0;  // defaults to the zero vector
  // A run halts (without error) when the loss stops being finite or exceeds
  // divergence_factor times the initial loss.
  double divergence_factor = 1e6;
  MetricSink* sink = nullptr;   // optional streaming output
  StepObserver observer;        // optional per-step hook
};

struct RunResult {
  std::vector<RunRecord> records;
  ParamVector final_x;
  bool diverged = false;
  double final_loss = 0.0;
  std::optional<double> final_dist_sq;
  double gamma = 0.0;  // resolved step size
};

// Bulk-synchronous training loop: sample worker gradients at the current
// model, corrupt the configured fraction, aggregate robustly, step. Metrics
// for iteration t (loss, gradient norm, distance to optimum) are evaluated
// at x_t before the update. Reproducible: all randomness derives from
// cfg.seed through named streams.
RunResult run_sync(SyncRunConfig cfg);

struct FedRunConfig {
  const Task* task = nullptr;
  Oracle oracle{};  // batch_size = number of clients
  AggregatorState aggregator{};
  CorruptionSpec corruption{};
  std::int64_t iterations = 100;  // global iteration budget
  std::size_t local_steps = 1;    // H local SGD steps between communications
  StepSize step{};                // client-side local step size
  QuantConfig quant{};
  bool quant_bypass = false;  // send raw model deltas, skip the quantizer
  double client_scale = 1.0;  // scale applied to every transmitted message
  std::uint64_t seed = 0;
  std::optional<ParamVector> x0;
  double divergence_factor = 1e6;
  MetricSink* sink = nullptr;
  StepObserver observer;
};

// Federated loop: every round each client starts from the broadcast model,
// takes `local_steps` local SGD steps, and transmits
// client_scale * quantize(x - y_local). Corruption applies to the
// transmitted messages. The server feeds the message matrix through the
// aggregator with gamma = 1: the local step size is already inside the
// deltas, so scaling again would shrink the update twice. One record is
// emitted per communication round; `iter` is the round index, and with
// local_steps = 1 it lines up one-to-one with run_sync iterations (the two
// engines share the same per-(worker, iteration) randomness convention).
RunResult run_fed(FedRunConfig cfg);

struct BenchRow {
  std::size_t k = 0;
  std::int64_t bgmd_ns = 0;  // median over trials
  std::int64_t gm_ns = 0;    // median over trials (same for every row)
  double speedup = 0.0;      // gm_ns / bgmd_ns
};

// Median wall-clock cost of one aggregation step on a synthetic b x d
// gradient matrix: full geometric-median aggregation versus the block
// pipeline at each k. Both arms run through aggregate() with identical
// solver settings.
std::vector<BenchRow> bench_aggregation(std::size_t d, std::size_t b,
                                        const std::vector<std::size_t>& ks,
                                        std::size_t trials, std::uint64_t seed,
                                        const GmConfig& gm_cfg = {});

}  // namespace bgmd
