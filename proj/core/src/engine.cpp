#include "bgmd/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace bgmd {
namespace {

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Both engines derive their randomness from these labels; keeping them in
// one place is what makes a federated run with H=1 and no quantizer
// reproduce the synchronous trajectory.
struct EngineStreams {
  RngStream worker_root;
  RngStream victims_root;
  RngStream attack_root;
  RngStream sampler;
  RngStream quant_root;

  explicit EngineStreams(std::uint64_t seed)
      : worker_root(RngStream(seed, "workers")),
        victims_root(RngStream(seed, "victims")),
        attack_root(RngStream(seed, "attack-noise")),
        sampler(RngStream(seed, "block-sampler")),
        quant_root(RngStream(seed, "quantizer")) {}
};

double divergence_reference(double initial_loss) {
  return initial_loss > 0.0 ? initial_loss : 1.0;
}

}  // namespace

double StepSize::resolve(const Task& task) const {
  switch (policy) {
    case Policy::kConstant:
      if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument("StepSize: constant gamma must be > 0");
      }
      return gamma;
    case Policy::kHalfInvL:
      return 1.0 / (2.0 * task.smoothness_l());
    case Policy::kQuarterInvL:
      return 1.0 / (4.0 * task.smoothness_l());
  }
  throw std::logic_error("StepSize::resolve: unreachable");
}

RunResult run_sync(SyncRunConfig cfg) {
  if (cfg.task == nullptr) throw std::invalid_argument("run_sync: null task");
  if (cfg.iterations <= 0) {
    throw std::invalid_argument("run_sync: iterations must be > 0");
  }
  const Task& task = *cfg.task;
  const std::size_t d = task.dim();
  const double gamma = cfg.step.resolve(task);
  EngineStreams streams(cfg.seed);

  ParamVector x = cfg.x0.value_or(ParamVector::zeros(d));
  if (x.dim() != d) throw std::invalid_argument("run_sync: x0 dim mismatch");
  AggregatorState agg = cfg.aggregator;

  RunResult result;
  result.gamma = gamma;
  double initial_loss = 0.0;

  for (std::int64_t t = 0; t < cfg.iterations; ++t) {
    const std::int64_t tic = now_ns();
    const double loss = task.loss(x);
    if (t == 0) initial_loss = loss;
    const ParamVector g_full = task.grad(x);
    RunRecord rec;
    rec.iter = t;
    rec.loss = loss;
    rec.grad_norm_sq = g_full.norm_sq();
    if (task.optimum().has_value()) {
      rec.dist_to_opt_sq = pairwise_dist_sq(x.span(), task.optimum()->span());
    }

    if (!std::isfinite(loss) ||
        loss > cfg.divergence_factor * divergence_reference(initial_loss)) {
      rec.total_time_ns = now_ns() - tic;
      result.records.push_back(rec);
      if (cfg.sink) cfg.sink->write(rec);
      result.diverged = true;
      break;
    }

    const GradMatrix clean =
        sample_grads(task, cfg.oracle, x, t, streams.worker_root);
    const CorruptionOutcome outcome =
        choose_victims(cfg.corruption, clean.rows(), t, streams.victims_root);
    RngStream noise = streams.attack_root.fork(static_cast<std::uint64_t>(t));
    const GradMatrix delivered =
        apply_gradient_attack(clean, outcome, cfg.corruption, noise);

    StepDiagnostics diag;
    const ParamVector update =
        aggregate(agg, delivered, gamma, streams.sampler, &diag);
    for (std::size_t j = 0; j < d; ++j) x[j] -= update[j];

    rec.residual_ratio = diag.residual_ratio;
    rec.agg_time_ns = diag.agg_time_ns;
    rec.total_time_ns = now_ns() - tic;
    rec.corrupt_count =
        static_cast<std::int64_t>(outcome.corrupt_indices.size());
    result.records.push_back(rec);
    if (cfg.sink) cfg.sink->write(rec);
    if (cfg.observer) {
      cfg.observer(StepTrace{t, gamma, outcome.corrupt_indices, update,
                             std::move(diag)});
    }
  }

  result.final_x = std::move(x);
  result.final_loss = task.loss(result.final_x);
  if (task.optimum().has_value()) {
    result.final_dist_sq =
        pairwise_dist_sq(result.final_x.span(), task.optimum()->span());
  }
  return result;
}

RunResult run_fed(FedRunConfig cfg) {
  if (cfg.task == nullptr) throw std::invalid_argument("run_fed: null task");
  if (cfg.iterations <= 0 || cfg.local_steps == 0) {
    throw std::invalid_argument("run_fed: need iterations > 0 and local_steps >= 1");
  }
  if (!cfg.quant_bypass) (void)cfg.quant.levels();  // validates bits
  const Task& task = *cfg.task;
  const std::size_t d = task.dim();
  const std::size_t b = cfg.oracle.batch_size;
  if (b == 0) throw std::invalid_argument("run_fed: batch_size must be >= 1");
  const double gamma = cfg.step.resolve(task);
  const std::int64_t rounds =
      cfg.iterations / static_cast<std::int64_t>(cfg.local_steps);
  if (rounds == 0) {
    throw std::invalid_argument("run_fed: iteration budget below one round");
  }
  EngineStreams streams(cfg.seed);

  ParamVector x = cfg.x0.value_or(ParamVector::zeros(d));
  if (x.dim() != d) throw std::invalid_argument("run_fed: x0 dim mismatch");
  AggregatorState agg = cfg.aggregator;

  RunResult result;
  result.gamma = gamma;
  double initial_loss = 0.0;

  for (std::int64_t r = 0; r < rounds; ++r) {
    const std::int64_t tic = now_ns();
    const double loss = task.loss(x);
    if (r == 0) initial_loss = loss;
    const ParamVector g_full = task.grad(x);
    RunRecord rec;
    rec.iter = r;
    rec.loss = loss;
    rec.grad_norm_sq = g_full.norm_sq();
    if (task.optimum().has_value()) {
      rec.dist_to_opt_sq = pairwise_dist_sq(x.span(), task.optimum()->span());
    }

    if (!std::isfinite(loss) ||
        loss > cfg.divergence_factor * divergence_reference(initial_loss)) {
      rec.total_time_ns = now_ns() - tic;
      result.records.push_back(rec);
      if (cfg.sink) cfg.sink->write(rec);
      result.diverged = true;
      break;
    }

    // Local phase: every client walks local_steps SGD steps from the
    // broadcast model and reports a (possibly quantized) scaled delta.
    std::vector<ParamVector> messages;
    messages.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
      ParamVector y = x;
      for (std::size_t tau = 0; tau < cfg.local_steps; ++tau) {
        const std::int64_t global_t =
            r * static_cast<std::int64_t>(cfg.local_steps) +
            static_cast<std::int64_t>(tau);
        const ParamVector g = sample_grad_row(task, cfg.oracle, y, i, global_t,
                                              streams.worker_root);
        for (std::size_t j = 0; j < d; ++j) y[j] -= gamma * g[j];
      }
      std::vector<double> delta(d);
      for (std::size_t j = 0; j < d; ++j) delta[j] = x[j] - y[j];
      ParamVector msg = ParamVector::unchecked(std::move(delta));
      if (!cfg.quant_bypass) {
        RngStream qs = streams.quant_root.fork(i).fork(
            static_cast<std::uint64_t>(r));
        msg = qsgd(msg, cfg.quant, qs);
      }
      if (cfg.client_scale != 1.0) {
        for (std::size_t j = 0; j < d; ++j) msg[j] *= cfg.client_scale;
      }
      messages.push_back(std::move(msg));
    }
    const GradMatrix clean = GradMatrix::from_rows(messages);
    const CorruptionOutcome outcome =
        choose_victims(cfg.corruption, b, r, streams.victims_root);
    RngStream noise = streams.attack_root.fork(static_cast<std::uint64_t>(r));
    const GradMatrix delivered =
        apply_gradient_attack(clean, outcome, cfg.corruption, noise);

    // gamma = 1: the messages already carry the local step size.
    StepDiagnostics diag;
    const ParamVector update =
        aggregate(agg, delivered, 1.0, streams.sampler, &diag);
    for (std::size_t j = 0; j < d; ++j) x[j] -= update[j];

    rec.residual_ratio = diag.residual_ratio;
    rec.agg_time_ns = diag.agg_time_ns;
    rec.total_time_ns = now_ns() - tic;
    rec.corrupt_count =
        static_cast<std::int64_t>(outcome.corrupt_indices.size());
    result.records.push_back(rec);
    if (cfg.sink) cfg.sink->write(rec);
    if (cfg.observer) {
      cfg.observer(StepTrace{r, gamma, outcome.corrupt_indices, update,
                             std::move(diag)});
    }
  }

  result.final_x = std::move(x);
  result.final_loss = task.loss(result.final_x);
  if (task.optimum().has_value()) {
    result.final_dist_sq =
        pairwise_dist_sq(result.final_x.span(), task.optimum()->span());
  }
  return result;
}

std::vector<BenchRow> bench_aggregation(std::size_t d, std::size_t b,
                                        const std::vector<std::size_t>& ks,
                                        std::size_t trials, std::uint64_t seed,
                                        const GmConfig& gm_cfg) {
  if (d == 0 || b == 0 || ks.empty() || trials == 0) {
    throw std::invalid_argument("bench_aggregation: empty configuration");
  }
  RngStream data_stream(seed, "bench-data");
  std::vector<double> entries(b * d);
  for (auto& v : entries) v = data_stream.next_normal();
  const GradMatrix g = GradMatrix::unchecked(b, d, std::move(entries));
  RngStream sampler(seed, "bench-sampler");

  const auto median_ns = [](std::vector<std::int64_t>& xs) {
    std::sort(xs.begin(), xs.end());
    return xs[xs.size() / 2];
  };

  AggregatorState gm_state;
  gm_state.kind = AggregatorKind::kGm;
  gm_state.gm_cfg = gm_cfg;
  std::vector<std::int64_t> gm_times(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    StepDiagnostics diag;
    (void)aggregate(gm_state, g, 1.0, sampler, &diag);
    gm_times[t] = diag.agg_time_ns;
  }
  const std::int64_t gm_med = median_ns(gm_times);

  std::vector<BenchRow> rows;
  rows.reserve(ks.size());
  for (std::size_t k : ks) {
    std::vector<std::int64_t> times(trials);
    for (std::size_t t = 0; t < trials; ++t) {
      AggregatorState state;
      state.kind = AggregatorKind::kBgmd;
      state.gm_cfg = gm_cfg;
      state.k = k;
      state.reset_memory(d);
      StepDiagnostics diag;
      (void)aggregate(state, g, 1.0, sampler, &diag);
      times[t] = diag.agg_time_ns;
    }
    BenchRow row;
    row.k = k;
    row.bgmd_ns = median_ns(times);
    row.gm_ns = gm_med;
    row.speedup = static_cast<double>(gm_med) /
                  std::max<double>(1.0, static_cast<double>(row.bgmd_ns));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bgmd
