#pragma once

#include <cstddef>
#include <vector>

#include "bgmd/matrix.hpp"
#include "bgmd/rng.hpp"

namespace bgmd {

enum class BlockMode {
  // Sample k columns without replacement with probability proportional to
  // their squared-norm scores (the default).
  kNormSample,
  // Deterministically keep the k largest scores, ties broken by lower index.
  kTopK,
};

struct BlockSelection {
  std::vector<std::size_t> indices;  // strictly increasing, size k
  std::vector<double> scores;        // the score vector the selection used
  BlockMode mode = BlockMode::kNormSample;
};

// Squared column norms: s[j] = sum_i g[i,j]^2, accumulated row by row in
// ascending order (a single linear pass over the row-major storage).
std::vector<double> column_norm_scores(const GradMatrix& g);

// Select k of scores.size() column indices.
//
// kNormSample draws an exponential race: key_j = Exp(1)/s_j, and the k
// smallest keys win. This is distributionally identical to k sequential
// draws that renormalize the remaining scores after each pick, but runs in
// one O(d) pass. Zero-score columns are only used to fill up when fewer than
// k positive scores exist, lowest index first. Consumes exactly one uniform
// per column.
BlockSelection select_block(std::vector<double> scores, std::size_t k,
                            BlockMode mode, RngStream& rng);

// Zero every column not in the selection; kept entries are bit-identical
// copies of the input.
GradMatrix apply_block(const GradMatrix& g, const BlockSelection& sel);

struct QuantConfig {
  unsigned bits = 2;  // quantization levels = 2^bits, bits >= 1

  double levels() const;
  // Normalization w = 1 + min(sqrt(d)/2^bits, d/2^(2*bits)); always >= 1.
  double w_for_dim(std::size_t dim) const;
};

// Stochastic-rounding quantizer:
//   qsgd(x)_j = sign(x_j) * ||x|| / (2^b * w) * floor(2^b * |x_j| / ||x|| + u_j)
// with u_j ~ U[0,1) i.i.d. per coordinate per call and qsgd(0) = 0 exactly.
// Every output coordinate is an exact integer multiple of ||x|| / (2^b * w).
// The 1/w normalization makes the operator a contraction:
//   E||qsgd(x) - x||^2 <= (1 - 1/w) ||x||^2,
// at the price of a deterministic 1/w scale on the mean (E qsgd(x) = x / w).
ParamVector qsgd(const ParamVector& x, const QuantConfig& cfg, RngStream& rng);

// The same stochastic rounding without the 1/w normalization. This variant
// is unbiased -- E qsgd_unbiased(x) = x -- with relative second moment
// E||.||^2 <= (1 + min(sqrt(d)/2^b, d/2^(2b))) ||x||^2.
ParamVector qsgd_unbiased(const ParamVector& x, const QuantConfig& cfg,
                          RngStream& rng);

}  // namespace bgmd
