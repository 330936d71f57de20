#include "bgmd/gm.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bgmd {
namespace {

// Floor for the Weiszfeld weight denominator. Only reachable when smoothing
// is zero (or degenerate) and an iterate lands exactly on an input row; the
// clamp then acts like an anchor with very large but finite weight.
constexpr double kMinDenom = 1e-150;

void fill_dist_sq(const ParamVector& y, const GradMatrix& points,
                  std::vector<double>& dist_sq) {
  for (std::size_t i = 0; i < points.rows(); ++i) {
    dist_sq[i] = pairwise_dist_sq(y.span(), points.row(i));
  }
}

double smoothed_objective(const std::vector<double>& dist_sq, double nu_sq,
                          std::vector<double>& scratch) {
  for (std::size_t i = 0; i < dist_sq.size(); ++i) {
    scratch[i] = std::sqrt(dist_sq[i] + nu_sq);
  }
  return pairwise_sum(scratch);
}

// The plain Weiszfeld map has spurious fixed points: any input row is one,
// optimal or not, because the coinciding weight swamps the average. When the
// stopping rule fires while `y` sits (numerically) on one or more rows, this
// guard checks the first-order condition for a minimizer at a data point:
// the pull of the remaining rows, R = sum_i (x_i - y)/||x_i - y||, must not
// exceed the anchoring multiplicity m. If it does, jump to the point
// (1 - m/||R||) * avg + (m/||R||) * y, where avg is the Weiszfeld average of
// the non-coinciding rows — a strict descent step for the true objective —
// and let the iteration continue. Returns true if it jumped.
bool vertex_escape(const GradMatrix& points, ParamVector& y,
                   const std::vector<double>& dist_sq, double nu,
                   std::vector<double>& scratch_num) {
  const std::size_t b = points.rows();
  const std::size_t d = points.cols();
  const double tol = 32.0 * nu;  // nu == 0: only exact coincidences count
  std::size_t m = 0;
  std::vector<double> r_vec(d, 0.0);
  std::fill(scratch_num.begin(), scratch_num.end(), 0.0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double dist = std::sqrt(dist_sq[i]);
    if (dist <= tol) {
      ++m;
      continue;
    }
    const auto row = points.row(i);
    const double w = 1.0 / dist;
    for (std::size_t j = 0; j < d; ++j) {
      r_vec[j] += (row[j] - y[j]) * w;
      scratch_num[j] += row[j] * w;
    }
    wsum += w;
  }
  if (m == 0) return false;  // ordinary stop away from all rows
  double rn_sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) rn_sq += r_vec[j] * r_vec[j];
  const double rn = std::sqrt(rn_sq);
  const double anchor = static_cast<double>(m);
  if (rn <= anchor * (1.0 + 1e-9) + 1e-12) return false;  // vertex optimal
  const double beta = 1.0 - anchor / rn;
  for (std::size_t j = 0; j < d; ++j) {
    y[j] = (1.0 - beta) * y[j] + beta * (scratch_num[j] / wsum);
  }
  return true;
}

// Lower median of all pairwise distances between rows. Returns 0 for a
// single row or when at least half of the pairs coincide.
double median_pairwise_distance(const GradMatrix& points) {
  const std::size_t b = points.rows();
  if (b < 2) return 0.0;
  std::vector<double> dists;
  dists.reserve(b * (b - 1) / 2);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      dists.push_back(std::sqrt(pairwise_dist_sq(points.row(i), points.row(j))));
    }
  }
  const std::size_t mid = (dists.size() + 1) / 2 - 1;  // lower median
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  return dists[mid];
}

}  // namespace

double gm_objective(const ParamVector& y, const GradMatrix& points) {
  if (points.rows() == 0) {
    throw std::invalid_argument("gm_objective: empty point set");
  }
  if (y.dim() != points.cols()) {
    throw std::invalid_argument("gm_objective: dimension mismatch");
  }
  std::vector<double> dists(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    dists[i] = std::sqrt(pairwise_dist_sq(y.span(), points.row(i)));
  }
  return pairwise_sum(dists);
}

GmResult weiszfeld(const GradMatrix& points, const GmConfig& cfg) {
  const std::size_t b = points.rows();
  const std::size_t d = points.cols();
  if (b == 0) throw std::invalid_argument("weiszfeld: empty point set");
  if (cfg.rel_tol < 0 || cfg.max_iters == 0) {
    throw std::invalid_argument("weiszfeld: invalid solver configuration");
  }

  GmResult res;
  if (b == 1) {
    res.point = ParamVector::unchecked(
        std::vector<double>(points.row(0).begin(), points.row(0).end()));
    res.objective = 0.0;
    res.converged = true;
    return res;
  }

  const double nu = cfg.smoothing >= 0.0
                        ? cfg.smoothing
                        : 1e-10 * median_pairwise_distance(points);
  const double nu_sq = nu * nu;

  ParamVector y = coord_median(points);
  std::vector<double> dist_sq(b);
  std::vector<double> scratch(b);
  std::vector<double> weights(b);

  fill_dist_sq(y, points, dist_sq);
  double obj = smoothed_objective(dist_sq, nu_sq, scratch);
  double best_obj = obj;
  ParamVector best_y = y;
  if (cfg.record_trace) res.trace.push_back(obj);

  std::vector<double> num(d);
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    for (std::size_t i = 0; i < b; ++i) {
      weights[i] = 1.0 / std::max(std::sqrt(dist_sq[i] + nu_sq), kMinDenom);
    }
    const double wsum = pairwise_sum(weights);
    // Weighted average accumulated row by row in ascending order; the fixed
    // traversal keeps the result reproducible.
    std::fill(num.begin(), num.end(), 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      const auto row = points.row(i);
      const double w = weights[i];
      for (std::size_t j = 0; j < d; ++j) num[j] += w * row[j];
    }
    for (std::size_t j = 0; j < d; ++j) y[j] = num[j] / wsum;

    fill_dist_sq(y, points, dist_sq);
    const double next_obj = smoothed_objective(dist_sq, nu_sq, scratch);
    res.iterations = it + 1;
    if (cfg.record_trace) res.trace.push_back(next_obj);
    // Each update is a majorize-minimize step for the smoothed objective, so
    // descent can only fail by floating-point noise.
    assert(next_obj <= obj * (1.0 + 1e-12) + 1e-300);
    if (next_obj < best_obj) {
      best_obj = next_obj;
      best_y = y;
    }
    if (obj - next_obj <=
        cfg.rel_tol * std::max(next_obj, std::numeric_limits<double>::min())) {
      if (vertex_escape(points, y, dist_sq, nu, num)) {
        // Jumped off a non-optimal spurious fixed point; refresh the state
        // and keep iterating. The jump lowers the true objective by a
        // macroscopic amount, so progress resumes immediately.
        fill_dist_sq(y, points, dist_sq);
        obj = smoothed_objective(dist_sq, nu_sq, scratch);
        if (cfg.record_trace) res.trace.push_back(obj);
        if (obj < best_obj) {
          best_obj = obj;
          best_y = y;
        }
        continue;
      }
      res.converged = true;
      obj = next_obj;
      break;
    }
    obj = next_obj;
  }

  res.point = std::move(best_y);
  res.objective = gm_objective(res.point, points);
  return res;
}

GmResult brute_force_gm(const GradMatrix& points, double grid_step,
                        const GridBounds& bounds) {
  const std::size_t b = points.rows();
  const std::size_t d = points.cols();
  if (b == 0) throw std::invalid_argument("brute_force_gm: empty point set");
  if (d == 0 || d > 3) {
    throw std::invalid_argument("brute_force_gm: only d in {1,2,3} supported");
  }
  if (!(grid_step > 0.0)) {
    throw std::invalid_argument("brute_force_gm: grid_step must be > 0");
  }
  if (bounds.lo.size() != d || bounds.hi.size() != d) {
    throw std::invalid_argument("brute_force_gm: bounds dimension mismatch");
  }

  std::size_t naxis[3] = {1, 1, 1};
  std::size_t total = 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (!std::isfinite(bounds.lo[j]) || !std::isfinite(bounds.hi[j]) ||
        bounds.hi[j] < bounds.lo[j]) {
      throw std::invalid_argument("brute_force_gm: invalid bounds");
    }
    naxis[j] =
        static_cast<std::size_t>((bounds.hi[j] - bounds.lo[j]) / grid_step) + 1;
    total *= naxis[j];
    if (total > 2'000'000'000ULL) {
      throw std::invalid_argument("brute_force_gm: grid too large");
    }
  }

  std::vector<double> y(d, 0.0);
  std::vector<double> best(d, 0.0);
  double best_obj = std::numeric_limits<double>::infinity();
  std::size_t idx[3] = {0, 0, 0};
  for (std::size_t n = 0; n < total; ++n) {
    for (std::size_t j = 0; j < d; ++j) {
      y[j] = bounds.lo[j] + static_cast<double>(idx[j]) * grid_step;
    }
    double obj = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      const auto row = points.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = y[j] - row[j];
        s += diff * diff;
      }
      obj += std::sqrt(s);
    }
    if (obj < best_obj) {  // strict <: ties keep the first grid point visited
      best_obj = obj;
      best = y;
    }
    // Odometer increment, axis 0 fastest.
    for (std::size_t j = 0; j < d; ++j) {
      if (++idx[j] < naxis[j]) break;
      idx[j] = 0;
    }
  }

  GmResult res;
  res.point = ParamVector::unchecked(std::move(best));
  res.objective = best_obj;
  res.iterations = total;
  res.converged = true;
  return res;
}

ParamVector coord_median(const GradMatrix& points) {
  const std::size_t b = points.rows();
  const std::size_t d = points.cols();
  if (b == 0) throw std::invalid_argument("coord_median: empty point set");
  std::vector<double> out(d);
  std::vector<double> column(b);
  const std::size_t mid = (b + 1) / 2 - 1;  // lower median order statistic
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < b; ++i) column[i] = points.at(i, j);
    std::nth_element(column.begin(), column.begin() + mid, column.end());
    out[j] = column[mid];
  }
  return ParamVector::unchecked(std::move(out));
}

}  // namespace bgmd
