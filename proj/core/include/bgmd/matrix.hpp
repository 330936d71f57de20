#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bgmd {

// Fixed-order floating-point reductions. Every summation in the library goes
// through these kernels (recursive pairwise splitting with a small sequential
// base case) so that results are reproducible run to run and accumulated
// rounding error stays O(log n) instead of O(n).
double pairwise_sum(std::span<const double> xs);
double pairwise_sum_sq(std::span<const double> xs);
double pairwise_dot(std::span<const double> a, std::span<const double> b);
// Squared euclidean distance between two equal-length vectors.
double pairwise_dist_sq(std::span<const double> a, std::span<const double> b);

// Dense vector of model parameters (or one gradient row). Public constructors
// reject non-finite entries; `unchecked` skips the scan and is reserved for
// values produced by arithmetic on already-validated inputs.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<double> data);
  static ParamVector zeros(std::size_t dim);
  static ParamVector unchecked(std::vector<double> data);

  std::size_t dim() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  std::span<const double> span() const { return {data_.data(), data_.size()}; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  double norm_sq() const { return pairwise_sum_sq(span()); }
  double norm() const;

  bool all_finite() const;

 private:
  std::vector<double> data_;
};

// Row-major b x d matrix of per-worker gradient rows. Same validation policy
// as ParamVector.
class GradMatrix {
 public:
  GradMatrix() = default;
  GradMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static GradMatrix zeros(std::size_t rows, std::size_t cols);
  static GradMatrix unchecked(std::size_t rows, std::size_t cols,
                              std::vector<double> data);
  static GradMatrix from_rows(const std::vector<ParamVector>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<double> row_mut(std::size_t i) {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Sum of squared entries, accumulated in row-major order (pairwise).
double frobenius_norm_sq(const GradMatrix& g);

// Column-wise mean over rows: out[j] = (1/b) * sum_i g[i,j], each column
// accumulated pairwise over the rows.
ParamVector row_mean(const GradMatrix& g);

}  // namespace bgmd
