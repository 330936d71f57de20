#pragma once

#include <cstddef>
#include <vector>

#include "bgmd/matrix.hpp"

namespace bgmd {

struct GmConfig {
  // Stop when the smoothed objective's relative decrease falls below this.
  double rel_tol = 1e-8;
  std::size_t max_iters = 1000;
  // Weiszfeld reweights by 1/sqrt(dist^2 + nu^2). A negative value selects
  // the default nu = 1e-10 * (median pairwise distance between input rows),
  // which keeps the iteration well-defined when an iterate lands on a row.
  double smoothing = -1.0;
  // Record the smoothed objective after every update (tests use this to
  // check monotone descent).
  bool record_trace = false;
};

struct GmResult {
  ParamVector point;
  // True (unsmoothed) objective sum_i ||point - x_i||, recomputed at return.
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // smoothed objective per iteration, if recorded
};

// sum_i ||y - points[i]||
double gm_objective(const ParamVector& y, const GradMatrix& points);

// Smoothed Weiszfeld iteration: starts from the coordinate-wise median,
// reweights by 1/sqrt(dist^2 + nu^2), and keeps the best iterate seen. The
// smoothed objective is non-increasing across iterations (this is a
// majorize-minimize step for it), which the implementation asserts.
GmResult weiszfeld(const GradMatrix& points, const GmConfig& cfg = {});

struct GridBounds {
  std::vector<double> lo;
  std::vector<double> hi;
};

// Exhaustive grid minimizer of gm_objective, for d <= 3 only. Deliberately
// shares no code with weiszfeld so it can serve as an independent oracle.
// `bounds` must cover the region containing the minimizer; the convex hull of
// the input rows always suffices, and when a strict majority of rows lies in
// a ball B(c, r) the minimizer provably lies in B(c, r / sqrt(1 - (m/g)^2))
// for m bad and g good rows, so a box around that ball works too.
GmResult brute_force_gm(const GradMatrix& points, double grid_step,
                        const GridBounds& bounds);

// Coordinate-wise lower median: for b rows, each output coordinate is the
// ceil(b/2)-th smallest value in its column (the lower of the two middle
// values when b is even).
ParamVector coord_median(const GradMatrix& points);

}  // namespace bgmd
