#include "bgmd/aggregate.hpp"

#include <algorithm>
#include <cassert>
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

ParamVector scale(const ParamVector& v, double gamma) {
  std::vector<double> out(v.dim());
  for (std::size_t j = 0; j < v.dim(); ++j) out[j] = gamma * v[j];
  return ParamVector::unchecked(std::move(out));
}

// ||lhs - rhs||_inf / max(||rhs||_inf, tiny)
double max_rel_err(const ParamVector& lhs, const ParamVector& rhs) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < lhs.dim(); ++j) {
    num = std::max(num, std::abs(lhs[j] - rhs[j]));
    den = std::max(den, std::abs(rhs[j]));
  }
  return num / std::max(den, 1e-300);
}

ParamVector aggregate_bgmd(AggregatorState& state, const GradMatrix& grads,
                           double gamma, RngStream& rng,
                           StepDiagnostics& diag) {
  const std::size_t b = grads.rows();
  const std::size_t d = grads.cols();
  if (state.k == 0 || state.k > d) {
    throw std::invalid_argument("aggregate: block size k must satisfy 1 <= k <= d");
  }
  if (state.mem.dim() == 0) state.reset_memory(d);
  if (state.mem.dim() != d) {
    throw std::invalid_argument("aggregate: memory dimension mismatch");
  }

  const MemoryState& applied_mem =
      state.use_memory ? state.mem : MemoryState::zeros(d);
  const GradMatrix augmented = augment(grads, applied_mem, gamma);
  std::vector<double> scores = column_norm_scores(augmented);
  const BlockSelection sel =
      select_block(std::move(scores), state.k, state.mode, rng);
  const GradMatrix kept = apply_block(augmented, sel);
  MemoryUpdate upd = memory_update(augmented, kept);

  // Conservation identity: what the block kept plus what the memory carries
  // must reproduce the augmented row mean (nothing is lost or double
  // counted). This holds to rounding error by construction.
  {
    ParamVector lhs = row_mean(kept);
    for (std::size_t j = 0; j < d; ++j) lhs[j] += upd.next.m_hat[j];
    ParamVector rhs = scale(row_mean(grads), gamma);
    for (std::size_t j = 0; j < d; ++j) rhs[j] += applied_mem.m_hat[j];
    diag.mass_conservation_rel_err = max_rel_err(lhs, rhs);
    assert(diag.mass_conservation_rel_err <= 1e-12);
  }

  const double total_mass = frobenius_norm_sq(augmented);
  const double dropped_mass = frobenius_norm_sq(upd.residual);
  diag.residual_ratio =
      total_mass > 0.0 ? std::clamp(dropped_mass / total_mass, 0.0, 1.0) : 0.0;

  if (state.use_memory) state.mem = std::move(upd.next);

  // Solve the geometric median in the k selected coordinates only; the
  // dropped coordinates are exactly zero in every row, so this matches the
  // full-dimensional solve up to summation-order rounding at O(k) cost.
  std::vector<double> sub(b * state.k);
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = kept.row(i);
    for (std::size_t c = 0; c < state.k; ++c) {
      sub[i * state.k + c] = row[sel.indices[c]];
    }
  }
  const GmResult r =
      weiszfeld(GradMatrix::unchecked(b, state.k, std::move(sub)), state.gm_cfg);
  diag.gm_iterations = r.iterations;

  std::vector<double> update(d, 0.0);
  for (std::size_t c = 0; c < state.k; ++c) {
    update[sel.indices[c]] = r.point[c];
  }
  if (state.capture_detail) diag.gm_input = kept;
  return ParamVector::unchecked(std::move(update));
}

}  // namespace

ParamVector aggregate(AggregatorState& state, const GradMatrix& grads,
                      double gamma, RngStream& rng, StepDiagnostics* diag) {
  if (grads.rows() == 0 || grads.cols() == 0) {
    throw std::invalid_argument("aggregate: empty gradient matrix");
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("aggregate: gamma must be positive and finite");
  }
  StepDiagnostics local;
  StepDiagnostics& out = diag ? *diag : local;
  out = StepDiagnostics{};
  const std::int64_t tic = now_ns();

  ParamVector update;
  switch (state.kind) {
    case AggregatorKind::kMean:
      update = scale(row_mean(grads), gamma);
      break;
    case AggregatorKind::kCoordMedian:
      update = scale(coord_median(grads), gamma);
      break;
    case AggregatorKind::kGm: {
      // Scale rows first so the solver sees the same geometry the update
      // lives in (gamma * GM(G) and GM(gamma * G) agree mathematically; the
      // latter also matches the block pipeline bit for bit at k = d).
      const GradMatrix scaled =
          augment(grads, MemoryState::zeros(grads.cols()), gamma);
      const GmResult r = weiszfeld(scaled, state.gm_cfg);
      out.gm_iterations = r.iterations;
      update = r.point;
      if (state.capture_detail) out.gm_input = scaled;
      break;
    }
    case AggregatorKind::kBgmd:
      update = aggregate_bgmd(state, grads, gamma, rng, out);
      break;
  }

  out.agg_time_ns = now_ns() - tic;
  return update;
}

}  // namespace bgmd
