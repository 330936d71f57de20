#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bgmd/matrix.hpp"
#include "bgmd/rng.hpp"

namespace bgmd {

enum class TaskKind { kQuadratic, kLeastSquares, kLogistic, kTinyMlp };

// A finite-sum objective f(x) = (1/n) sum_s f_s(x) with whatever curvature
// constants can be certified for its kind:
//   Quadratic     f(x) = 0.5 ||x - c||^2            mu = L = 1, x* = c
//   LeastSquares  f(x) = (1/2n) ||A x - y||^2       mu, L from spec(A^T A / n),
//                                                   x* by normal equations
//   Logistic      log-loss + (ridge/2)||x||^2       L = lmax(A^T A)/(4n)+ridge,
//                                                   mu = ridge when ridge > 0
//   TinyMlp       one tanh hidden layer, squared    L is a sampled local
//                 error regression                  estimate only
// Tasks are immutable after construction.
class Task {
 public:
  TaskKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_samples() const { return n_; }
  double smoothness_l() const { return smoothness_l_; }
  std::optional<double> pl_mu() const { return pl_mu_; }
  const std::optional<ParamVector>& optimum() const { return optimum_; }
  std::optional<double> optimum_value() const { return optimum_value_; }

  double loss(const ParamVector& x) const;
  ParamVector grad(const ParamVector& x) const;
  // Gradient of the single sample term f_s.
  ParamVector sample_grad(const ParamVector& x, std::size_t sample) const;

  // Sample index drawn from worker w's shard when data is split into
  // `num_shards` label-sorted contiguous shards (heterogeneous mode).
  std::size_t shard_sample(std::size_t worker, std::size_t num_shards,
                           RngStream& rng) const;

  static Task quadratic(ParamVector center);
  static Task least_squares(GradMatrix a, std::vector<double> y);
  static Task logistic(GradMatrix features, std::vector<double> labels,
                       double ridge);
  static Task tiny_mlp(GradMatrix inputs, std::vector<double> targets,
                       std::size_t hidden, RngStream& rng);

  // Randomized instances: iid N(0,1) features; least-squares targets are
  // A x_true + noise_std * N(0,1); logistic labels are sign(a^T x_true + noise).
  static Task random_least_squares(std::size_t dim, std::size_t n,
                                   double noise_std, RngStream& rng);
  static Task random_logistic(std::size_t dim, std::size_t n, double ridge,
                              RngStream& rng);
  static Task random_tiny_mlp(std::size_t in_dim, std::size_t hidden,
                              std::size_t n, RngStream& rng);

  // Data-poisoning hooks (return modified copies; curvature constants and
  // optima are recomputed from the corrupted data):
  // additive N(0, std^2) on every feature of floor(psi*n) random samples,
  Task with_feature_noise(double psi, double noise_std, RngStream& rng) const;
  // and label sign flips on floor(psi*n) random samples (logistic only).
  Task with_flipped_labels(double psi, RngStream& rng) const;

 private:
  Task() = default;
  void finalize_least_squares();
  void finalize_logistic();
  void finalize_tiny_mlp(RngStream& rng);
  void build_label_order();

  TaskKind kind_ = TaskKind::kQuadratic;
  std::size_t dim_ = 0;
  std::size_t n_ = 1;
  double smoothness_l_ = 1.0;
  std::optional<double> pl_mu_;
  std::optional<ParamVector> optimum_;
  std::optional<double> optimum_value_;

  ParamVector center_;            // quadratic
  GradMatrix features_;           // LS / logistic / mlp inputs
  std::vector<double> targets_;   // y / labels
  double ridge_ = 0.0;            // logistic
  std::size_t hidden_ = 0;        // mlp width
  std::vector<std::size_t> label_order_;  // sample indices sorted by target
};

// Stochastic gradient oracle: each row of sample_grads is the average of
// `minibatch` uniformly drawn per-sample gradients (an unbiased estimate of
// grad f in homogeneous mode), optionally plus additive Gaussian noise with
// per-coordinate std additive_std/sqrt(d) so the added energy is
// additive_std^2 per row. In heterogeneous mode row i draws only from
// label-sorted shard i and is unbiased for that shard's local objective.
struct Oracle {
  std::size_t batch_size = 1;
  std::size_t minibatch = 1;
  double additive_std = 0.0;
  bool heterogeneous = false;
  // Declared bound on E||row||^2 used by theory checks; 0 = undeclared.
  double sigma_sq = 0.0;
};

// Row for one (worker, iter) cell. The randomness is keyed as
// worker_root.fork(worker).fork(iter), so any engine that uses the same
// convention reproduces the same draws regardless of loop structure.
ParamVector sample_grad_row(const Task& task, const Oracle& oracle,
                            const ParamVector& x, std::size_t worker,
                            std::int64_t iter, const RngStream& worker_root);

// batch_size rows for one iteration (rows = workers, in ascending order).
GradMatrix sample_grads(const Task& task, const Oracle& oracle,
                        const ParamVector& x, std::int64_t iter,
                        const RngStream& worker_root);

// Max absolute deviation between grad(x) and a central finite difference
// with step h, across all coordinates.
double finite_diff_check(const Task& task, const ParamVector& x, double h);

// CSV with a header row; each data line holds d feature floats then the
// target. Returns (features, targets).
std::pair<GradMatrix, std::vector<double>> load_regression_csv(
    const std::string& path);

}  // namespace bgmd
