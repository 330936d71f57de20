#include "bgmd/corrupt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bgmd {

std::size_t corrupt_count(double psi, std::size_t b) {
  if (!(psi >= 0.0) || psi >= 0.5) {
    throw std::invalid_argument("corrupt_count: psi must lie in [0, 0.5)");
  }
  // The epsilon only absorbs representation error (0.3 * 10 = 2.999...96);
  // it can never lift a genuinely smaller product past the next integer.
  return static_cast<std::size_t>(
      std::floor(psi * static_cast<double>(b) + 1e-9));
}

CorruptionOutcome choose_victims(const CorruptionSpec& spec, std::size_t b,
                                 std::int64_t iter, const RngStream& base) {
  if (b == 0) throw std::invalid_argument("choose_victims: b must be > 0");
  const std::size_t m = corrupt_count(spec.psi, b);

  CorruptionOutcome out;
  if (m > 0) {
    const std::uint64_t draw_key =
        spec.dynamic ? static_cast<std::uint64_t>(iter) : 0u;
    RngStream stream = base.fork(draw_key);
    // Partial Fisher-Yates over the index range.
    std::vector<std::size_t> pool(b);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(stream.next_below(b - i));
      std::swap(pool[i], pool[j]);
    }
    out.corrupt_indices.assign(pool.begin(), pool.begin() + m);
    std::sort(out.corrupt_indices.begin(), out.corrupt_indices.end());
  }

  out.clean_indices.reserve(b - m);
  std::size_t next_corrupt = 0;
  for (std::size_t i = 0; i < b; ++i) {
    if (next_corrupt < out.corrupt_indices.size() &&
        out.corrupt_indices[next_corrupt] == i) {
      ++next_corrupt;
    } else {
      out.clean_indices.push_back(i);
    }
  }
  return out;
}

GradMatrix apply_gradient_attack(const GradMatrix& clean,
                                 const CorruptionOutcome& outcome,
                                 const CorruptionSpec& spec, RngStream& noise) {
  for (std::size_t idx : outcome.corrupt_indices) {
    if (idx >= clean.rows()) {
      throw std::invalid_argument("apply_gradient_attack: index out of range");
    }
  }
  GradMatrix out = clean;  // clean rows stay bit-identical
  if (outcome.corrupt_indices.empty() || spec.attack == AttackKind::kNone) {
    return out;
  }

  const std::size_t d = clean.cols();
  switch (spec.attack) {
    case AttackKind::kAdditiveGaussian: {
      for (std::size_t idx : outcome.corrupt_indices) {
        auto row = out.row_mut(idx);
        for (std::size_t j = 0; j < d; ++j) {
          row[j] += spec.additive_std * noise.next_normal();
        }
      }
      break;
    }
    case AttackKind::kScaledBitFlip: {
      for (std::size_t idx : outcome.corrupt_indices) {
        auto row = out.row_mut(idx);
        for (std::size_t j = 0; j < d; ++j) row[j] *= spec.flip_scale;
      }
      break;
    }
    case AttackKind::kNegSum: {
      const double m = static_cast<double>(outcome.corrupt_indices.size());
      std::vector<double> column(outcome.clean_indices.size());
      std::vector<double> v(d);
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < outcome.clean_indices.size(); ++i) {
          column[i] = clean.at(outcome.clean_indices[i], j);
        }
        v[j] = -pairwise_sum(column) / m;
      }
      for (std::size_t idx : outcome.corrupt_indices) {
        auto row = out.row_mut(idx);
        for (std::size_t j = 0; j < d; ++j) row[j] = v[j];
      }
      break;
    }
    case AttackKind::kNone:
      break;
  }
  return out;
}

}  // namespace bgmd
