#pragma once

#include <cstdint>
#include <optional>

#include "bgmd/compress.hpp"
#include "bgmd/gm.hpp"
#include "bgmd/matrix.hpp"
#include "bgmd/memory.hpp"
#include "bgmd/rng.hpp"

namespace bgmd {

enum class AggregatorKind { kMean, kCoordMedian, kGm, kBgmd };

struct StepDiagnostics {
  // ||dropped||_F^2 / ||augmented||_F^2, clamped to [0,1]; 0 for
  // non-block aggregators and for an all-zero augmented matrix.
  double residual_ratio = 0.0;
  std::int64_t agg_time_ns = 0;
  std::size_t gm_iterations = 0;
  // Max-norm relative error of the conservation identity
  //   row_mean(kept) + m_hat' = gamma * row_mean(raw) + m_hat.
  // Only meaningful for kBgmd; asserted tiny in debug builds.
  double mass_conservation_rel_err = 0.0;
  // Rows the robust step actually saw (gamma-scaled, and for kBgmd
  // memory-augmented and block-masked). Populated only when
  // AggregatorState::capture_detail is set; meant for tests.
  std::optional<GradMatrix> gm_input;
};

// All aggregator kinds return a ready-to-subtract model update: the step
// size is applied inside (for kBgmd it is folded into the memory
// augmentation, for the others it scales the robust estimate). Callers apply
// x <- x - update verbatim; scaling the update by gamma again would apply
// the step size twice.
struct AggregatorState {
  AggregatorKind kind = AggregatorKind::kMean;
  GmConfig gm_cfg{};

  // kBgmd parameters.
  std::size_t k = 0;  // block size, 1 <= k <= d
  BlockMode mode = BlockMode::kNormSample;
  bool use_memory = true;  // ablation switch; off discards the residual
  MemoryState mem{};       // lazily sized on first use

  bool capture_detail = false;

  void reset_memory(std::size_t dim) { mem = MemoryState::zeros(dim); }
};

// One aggregation step over the delivered gradient rows. `rng` feeds block
// sampling (kBgmd with kNormSample); other kinds draw nothing.
ParamVector aggregate(AggregatorState& state, const GradMatrix& grads,
                      double gamma, RngStream& rng,
                      StepDiagnostics* diag = nullptr);

}  // namespace bgmd
