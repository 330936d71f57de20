#include "bgmd/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bgmd {
namespace {

// Below this length the recursion bottoms out into a plain loop; the compiler
// vectorizes the base case and the split points stay identical for a given n,
// which is what makes the reduction order fixed.
constexpr std::size_t kBase = 32;

double sum_range(const double* p, std::size_t n) {
  if (n <= kBase) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += p[i];
    return acc;
  }
  const std::size_t half = n / 2;
  return sum_range(p, half) + sum_range(p + half, n - half);
}

double sum_sq_range(const double* p, std::size_t n) {
  if (n <= kBase) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += p[i] * p[i];
    return acc;
  }
  const std::size_t half = n / 2;
  return sum_sq_range(p, half) + sum_sq_range(p + half, n - half);
}

double dot_range(const double* a, const double* b, std::size_t n) {
  if (n <= kBase) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
  }
  const std::size_t half = n / 2;
  return dot_range(a, b, half) + dot_range(a + half, b + half, n - half);
}

double dist_sq_range(const double* a, const double* b, std::size_t n) {
  if (n <= kBase) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = a[i] - b[i];
      acc += diff * diff;
    }
    return acc;
  }
  const std::size_t half = n / 2;
  return dist_sq_range(a, b, half) + dist_sq_range(a + half, b + half, n - half);
}

void require_finite(const std::vector<double>& xs, const char* what) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i])) {
      throw std::invalid_argument(std::string(what) +
                                  ": non-finite entry at index " +
                                  std::to_string(i));
    }
  }
}

}  // namespace

double pairwise_sum(std::span<const double> xs) {
  return sum_range(xs.data(), xs.size());
}

double pairwise_sum_sq(std::span<const double> xs) {
  return sum_sq_range(xs.data(), xs.size());
}

double pairwise_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("pairwise_dot: length mismatch");
  }
  return dot_range(a.data(), b.data(), a.size());
}

double pairwise_dist_sq(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("pairwise_dist_sq: length mismatch");
  }
  return dist_sq_range(a.data(), b.data(), a.size());
}

ParamVector::ParamVector(std::vector<double> data) : data_(std::move(data)) {
  require_finite(data_, "ParamVector");
}

ParamVector ParamVector::zeros(std::size_t dim) {
  ParamVector v;
  v.data_.assign(dim, 0.0);
  return v;
}

ParamVector ParamVector::unchecked(std::vector<double> data) {
  ParamVector v;
  v.data_ = std::move(data);
  return v;
}

double ParamVector::norm() const { return std::sqrt(norm_sq()); }

bool ParamVector::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

GradMatrix::GradMatrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("GradMatrix: data size does not match shape");
  }
  require_finite(data_, "GradMatrix");
}

GradMatrix GradMatrix::zeros(std::size_t rows, std::size_t cols) {
  GradMatrix g;
  g.rows_ = rows;
  g.cols_ = cols;
  g.data_.assign(rows * cols, 0.0);
  return g;
}

GradMatrix GradMatrix::unchecked(std::size_t rows, std::size_t cols,
                                 std::vector<double> data) {
  GradMatrix g;
  g.rows_ = rows;
  g.cols_ = cols;
  g.data_ = std::move(data);
  if (g.data_.size() != rows * cols) {
    throw std::invalid_argument("GradMatrix: data size does not match shape");
  }
  return g;
}

GradMatrix GradMatrix::from_rows(const std::vector<ParamVector>& rows) {
  if (rows.empty()) {
    throw std::invalid_argument("GradMatrix::from_rows: no rows");
  }
  const std::size_t cols = rows[0].dim();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const ParamVector& r : rows) {
    if (r.dim() != cols) {
      throw std::invalid_argument("GradMatrix::from_rows: ragged rows");
    }
    data.insert(data.end(), r.data().begin(), r.data().end());
  }
  return GradMatrix(rows.size(), cols, std::move(data));
}

bool GradMatrix::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double frobenius_norm_sq(const GradMatrix& g) {
  return pairwise_sum_sq(g.flat());
}

ParamVector row_mean(const GradMatrix& g) {
  if (g.rows() == 0) {
    throw std::invalid_argument("row_mean: empty matrix");
  }
  const std::size_t b = g.rows();
  const std::size_t d = g.cols();
  std::vector<double> out(d, 0.0);
  std::vector<double> column(b);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < b; ++i) column[i] = g.at(i, j);
    out[j] = pairwise_sum(column) / static_cast<double>(b);
  }
  return ParamVector::unchecked(std::move(out));
}

}  // namespace bgmd
