#pragma once

#include <cstdint>
#include <vector>

#include "bgmd/matrix.hpp"
#include "bgmd/rng.hpp"

namespace bgmd {

enum class AttackKind {
  kNone,
  kAdditiveGaussian,  // corrupt rows += N(0, std^2) per coordinate
  kScaledBitFlip,     // corrupt rows *= scale (default -100)
  kNegSum,            // corrupt rows cancel the clean rows' sum exactly
};

struct CorruptionSpec {
  double psi = 0.0;  // corruption fraction, < 0.5
  AttackKind attack = AttackKind::kNone;
  double additive_std = 10.0;
  double flip_scale = -100.0;
  // Dynamic: victims are resampled every iteration. Static: the t=0 draw is
  // reused for the whole run.
  bool dynamic = true;
};

struct CorruptionOutcome {
  std::vector<std::size_t> corrupt_indices;  // sorted ascending
  std::vector<std::size_t> clean_indices;    // sorted ascending, complement
};

// floor(psi * b), with a tiny epsilon so that fractions like 0.3 whose
// binary representation falls just under psi*b still round to the intended
// integer. psi must lie in [0, 0.5).
std::size_t corrupt_count(double psi, std::size_t b);

// Pick floor(psi*b) victim rows out of b. The draw is keyed off
// (base stream, iter) for dynamic specs and (base stream, 0) for static
// ones, so repeated calls are reproducible without carrying state.
CorruptionOutcome choose_victims(const CorruptionSpec& spec, std::size_t b,
                                 std::int64_t iter, const RngStream& base);

// Apply the configured attack to the victim rows. Clean rows are returned
// bit-identical. `noise` supplies randomness for kAdditiveGaussian; pass a
// per-iteration fork for reproducibility.
//
// kNegSum writes v = -(sum of clean rows)/|victims| into every victim row,
// which makes the column sums of the returned matrix cancel to rounding
// error: each victim row equals minus the sum of all other rows, and the
// plain mean of the matrix is driven to zero no matter how large the clean
// gradients are.
GradMatrix apply_gradient_attack(const GradMatrix& clean,
                                 const CorruptionOutcome& outcome,
                                 const CorruptionSpec& spec, RngStream& noise);

}  // namespace bgmd
