#include "bgmd/compress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace bgmd {

std::vector<double> column_norm_scores(const GradMatrix& g) {
  const std::size_t b = g.rows();
  const std::size_t d = g.cols();
  if (b == 0 || d == 0) {
    throw std::invalid_argument("column_norm_scores: empty matrix");
  }
  std::vector<double> scores(d, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = g.row(i);
    for (std::size_t j = 0; j < d; ++j) scores[j] += row[j] * row[j];
  }
  return scores;
}

BlockSelection select_block(std::vector<double> scores, std::size_t k,
                            BlockMode mode, RngStream& rng) {
  const std::size_t d = scores.size();
  if (k == 0 || k > d) {
    throw std::invalid_argument("select_block: need 1 <= k <= d");
  }
  for (double s : scores) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("select_block: scores must be finite and >= 0");
    }
  }

  // Selection key per column; smaller wins. Zero-score columns get +inf keys
  // so they lose to every positive column and fall back to index order among
  // themselves -- exactly the fill rule for degenerate inputs.
  std::vector<std::pair<double, std::size_t>> keyed(d);
  if (mode == BlockMode::kNormSample) {
    for (std::size_t j = 0; j < d; ++j) {
      // One uniform per column regardless of score, so the stream advances
      // by the same amount on every call with a given d.
      const double u = rng.next_unit();
      const double key = scores[j] > 0.0
                             ? -std::log1p(-u) / scores[j]
                             : std::numeric_limits<double>::infinity();
      keyed[j] = {key, j};
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      // Negated score: largest score = smallest key; ties resolve by the
      // index component below.
      const double key = scores[j] > 0.0
                             ? -scores[j]
                             : std::numeric_limits<double>::infinity();
      keyed[j] = {key, j};
    }
  }

  std::nth_element(keyed.begin(), keyed.begin() + (k - 1), keyed.end());
  std::vector<std::size_t> indices(k);
  for (std::size_t i = 0; i < k; ++i) indices[i] = keyed[i].second;
  std::sort(indices.begin(), indices.end());

  BlockSelection sel;
  sel.indices = std::move(indices);
  sel.scores = std::move(scores);
  sel.mode = mode;
  return sel;
}

GradMatrix apply_block(const GradMatrix& g, const BlockSelection& sel) {
  const std::size_t b = g.rows();
  const std::size_t d = g.cols();
  if (sel.scores.size() != d) {
    throw std::invalid_argument("apply_block: selection/matrix shape mismatch");
  }
  for (std::size_t idx : sel.indices) {
    if (idx >= d) {
      throw std::invalid_argument("apply_block: selection index out of range");
    }
  }
  std::vector<double> out(b * d, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = g.row(i);
    double* out_row = out.data() + i * d;
    for (std::size_t idx : sel.indices) out_row[idx] = row[idx];
  }
  return GradMatrix::unchecked(b, d, std::move(out));
}

double QuantConfig::levels() const {
  if (bits == 0 || bits > 62) {
    throw std::invalid_argument("QuantConfig: bits must be in [1, 62]");
  }
  return std::ldexp(1.0, static_cast<int>(bits));
}

double QuantConfig::w_for_dim(std::size_t dim) const {
  const double s = levels();
  const double d = static_cast<double>(dim);
  return 1.0 + std::min(std::sqrt(d) / s, d / (s * s));
}

namespace {

// Shared stochastic-rounding core. `scale` is the value of one quantization
// level in the output.
ParamVector quantize_impl(const ParamVector& x, const QuantConfig& cfg,
                          RngStream& rng, bool apply_w) {
  const std::size_t d = x.dim();
  if (d == 0) throw std::invalid_argument("qsgd: empty vector");
  const double s = cfg.levels();
  const double norm = std::sqrt(pairwise_sum_sq(x.span()));
  if (norm == 0.0) return ParamVector::zeros(d);

  const double scale = apply_w ? norm / (s * cfg.w_for_dim(d)) : norm / s;
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double xj = x[j];
    const double u = rng.next_unit();
    const double m = std::floor(s * std::abs(xj) / norm + u);
    const double sign = xj > 0.0 ? 1.0 : (xj < 0.0 ? -1.0 : 0.0);
    out[j] = sign * m * scale;
  }
  return ParamVector::unchecked(std::move(out));
}

}  // namespace

ParamVector qsgd(const ParamVector& x, const QuantConfig& cfg, RngStream& rng) {
  return quantize_impl(x, cfg, rng, /*apply_w=*/true);
}

ParamVector qsgd_unbiased(const ParamVector& x, const QuantConfig& cfg,
                          RngStream& rng) {
  return quantize_impl(x, cfg, rng, /*apply_w=*/false);
}

}  // namespace bgmd
