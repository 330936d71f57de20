#pragma once

#include "bgmd/matrix.hpp"

namespace bgmd {

// Error-feedback memory: the running mean of whatever the block compressor
// dropped, re-injected into every row on the next round.
struct MemoryState {
  ParamVector m_hat;

  static MemoryState zeros(std::size_t dim) {
    return MemoryState{ParamVector::zeros(dim)};
  }
  std::size_t dim() const { return m_hat.dim(); }
};

// P[i,:] = gamma * grads[i,:] + m_hat. The step size is folded in here, once;
// downstream stages must not scale again or the update is applied twice.
GradMatrix augment(const GradMatrix& grads, const MemoryState& mem,
                   double gamma);

struct MemoryUpdate {
  MemoryState next;     // m_hat' = row_mean(residual)
  GradMatrix residual;  // M = augmented - compressed
};

// Split the augmented matrix into what the compressor kept and what carries
// over. Because `compressed` holds bit-identical copies of the kept columns
// and exact zeros elsewhere, row_mean(compressed) + m_hat' reproduces
// row_mean(augmented) coordinate for coordinate.
MemoryUpdate memory_update(const GradMatrix& augmented,
                           const GradMatrix& compressed);

}  // namespace bgmd
