#include "bgmd/memory.hpp"

#include <cmath>
#include <stdexcept>

namespace bgmd {

GradMatrix augment(const GradMatrix& grads, const MemoryState& mem,
                   double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("augment: gamma must be positive and finite");
  }
  if (mem.dim() != grads.cols()) {
    throw std::invalid_argument("augment: memory/matrix dimension mismatch");
  }
  const std::size_t b = grads.rows();
  const std::size_t d = grads.cols();
  std::vector<double> out(b * d);
  const double* m = mem.m_hat.data().data();
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = grads.row(i);
    double* out_row = out.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) out_row[j] = gamma * row[j] + m[j];
  }
  return GradMatrix::unchecked(b, d, std::move(out));
}

MemoryUpdate memory_update(const GradMatrix& augmented,
                           const GradMatrix& compressed) {
  if (augmented.rows() != compressed.rows() ||
      augmented.cols() != compressed.cols()) {
    throw std::invalid_argument("memory_update: shape mismatch");
  }
  const std::size_t b = augmented.rows();
  const std::size_t d = augmented.cols();
  std::vector<double> res(b * d);
  const auto& p = augmented.data();
  const auto& c = compressed.data();
  for (std::size_t n = 0; n < b * d; ++n) res[n] = p[n] - c[n];

  MemoryUpdate upd{MemoryState{}, GradMatrix::unchecked(b, d, std::move(res))};
  upd.next.m_hat = row_mean(upd.residual);
  return upd;
}

}  // namespace bgmd
