#include "bgmd/tasks.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace bgmd {
namespace {

using RowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double softplus(double t) {
  // log(1 + e^t) without overflow for large |t|.
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
  return t > 0.0 ? 1.0 / (1.0 + std::exp(-t))
                 : std::exp(t) / (1.0 + std::exp(t));
}

std::vector<double> random_normals(std::size_t count, RngStream& rng,
                                   double std_dev = 1.0) {
  std::vector<double> out(count);
  for (auto& v : out) v = std_dev * rng.next_normal();
  return out;
}

// Layout of the TinyMlp parameter vector.
struct MlpShape {
  std::size_t in, hidden;
  std::size_t w1_off() const { return 0; }
  std::size_t b1_off() const { return hidden * in; }
  std::size_t w2_off() const { return hidden * in + hidden; }
  std::size_t b2_off() const { return hidden * in + 2 * hidden; }
  std::size_t dim() const { return hidden * in + 2 * hidden + 1; }
};

// Forward pass; fills activations, returns prediction.
double mlp_forward(const MlpShape& s, const double* theta, const double* input,
                   std::vector<double>& act) {
  const double* w1 = theta + s.w1_off();
  const double* b1 = theta + s.b1_off();
  const double* w2 = theta + s.w2_off();
  const double b2 = theta[s.b2_off()];
  double out = b2;
  for (std::size_t k = 0; k < s.hidden; ++k) {
    double z = b1[k];
    const double* w1_row = w1 + k * s.in;
    for (std::size_t j = 0; j < s.in; ++j) z += w1_row[j] * input[j];
    act[k] = std::tanh(z);
    out += w2[k] * act[k];
  }
  return out;
}

// Accumulates scale * d(loss_s)/d(theta) into acc for squared error
// 0.5 * (pred - target)^2.
void mlp_accumulate_grad(const MlpShape& s, const double* theta,
                         const double* input, double target, double scale,
                         std::vector<double>& act, double* acc) {
  const double pred = mlp_forward(s, theta, input, act);
  const double e = scale * (pred - target);
  const double* w2 = theta + s.w2_off();
  double* dw1 = acc + s.w1_off();
  double* db1 = acc + s.b1_off();
  double* dw2 = acc + s.w2_off();
  for (std::size_t k = 0; k < s.hidden; ++k) {
    const double dz = e * w2[k] * (1.0 - act[k] * act[k]);
    double* dw1_row = dw1 + k * s.in;
    for (std::size_t j = 0; j < s.in; ++j) dw1_row[j] += dz * input[j];
    db1[k] += dz;
    dw2[k] += e * act[k];
  }
  acc[s.b2_off()] += e;
}

}  // namespace

double Task::loss(const ParamVector& x) const {
  if (x.dim() != dim_) throw std::invalid_argument("Task::loss: dim mismatch");
  switch (kind_) {
    case TaskKind::kQuadratic:
      return 0.5 * pairwise_dist_sq(x.span(), center_.span());
    case TaskKind::kLeastSquares: {
      std::vector<double> resid(n_);
      for (std::size_t s = 0; s < n_; ++s) {
        resid[s] = pairwise_dot(features_.row(s), x.span()) - targets_[s];
      }
      return pairwise_sum_sq(resid) / (2.0 * static_cast<double>(n_));
    }
    case TaskKind::kLogistic: {
      std::vector<double> terms(n_);
      for (std::size_t s = 0; s < n_; ++s) {
        const double z = pairwise_dot(features_.row(s), x.span());
        terms[s] = softplus(-targets_[s] * z);
      }
      return pairwise_sum(terms) / static_cast<double>(n_) +
             0.5 * ridge_ * pairwise_sum_sq(x.span());
    }
    case TaskKind::kTinyMlp: {
      const MlpShape shape{features_.cols(), hidden_};
      std::vector<double> act(hidden_);
      std::vector<double> sq(n_);
      for (std::size_t s = 0; s < n_; ++s) {
        const double e = mlp_forward(shape, x.data().data(),
                                     features_.row(s).data(), act) -
                         targets_[s];
        sq[s] = e * e;
      }
      return pairwise_sum(sq) / (2.0 * static_cast<double>(n_));
    }
  }
  throw std::logic_error("Task::loss: unreachable");
}

ParamVector Task::grad(const ParamVector& x) const {
  if (x.dim() != dim_) throw std::invalid_argument("Task::grad: dim mismatch");
  switch (kind_) {
    case TaskKind::kQuadratic: {
      std::vector<double> g(dim_);
      for (std::size_t j = 0; j < dim_; ++j) g[j] = x[j] - center_[j];
      return ParamVector::unchecked(std::move(g));
    }
    case TaskKind::kLeastSquares: {
      std::vector<double> g(dim_, 0.0);
      const double inv_n = 1.0 / static_cast<double>(n_);
      for (std::size_t s = 0; s < n_; ++s) {
        const auto row = features_.row(s);
        const double coef =
            (pairwise_dot(row, x.span()) - targets_[s]) * inv_n;
        for (std::size_t j = 0; j < dim_; ++j) g[j] += coef * row[j];
      }
      return ParamVector::unchecked(std::move(g));
    }
    case TaskKind::kLogistic: {
      std::vector<double> g(dim_, 0.0);
      const double inv_n = 1.0 / static_cast<double>(n_);
      for (std::size_t s = 0; s < n_; ++s) {
        const auto row = features_.row(s);
        const double z = pairwise_dot(row, x.span());
        const double coef = -targets_[s] * sigmoid(-targets_[s] * z) * inv_n;
        for (std::size_t j = 0; j < dim_; ++j) g[j] += coef * row[j];
      }
      for (std::size_t j = 0; j < dim_; ++j) g[j] += ridge_ * x[j];
      return ParamVector::unchecked(std::move(g));
    }
    case TaskKind::kTinyMlp: {
      const MlpShape shape{features_.cols(), hidden_};
      std::vector<double> act(hidden_);
      std::vector<double> g(dim_, 0.0);
      const double inv_n = 1.0 / static_cast<double>(n_);
      for (std::size_t s = 0; s < n_; ++s) {
        mlp_accumulate_grad(shape, x.data().data(), features_.row(s).data(),
                            targets_[s], inv_n, act, g.data());
      }
      return ParamVector::unchecked(std::move(g));
    }
  }
  throw std::logic_error("Task::grad: unreachable");
}

ParamVector Task::sample_grad(const ParamVector& x, std::size_t sample) const {
  if (sample >= n_) {
    throw std::invalid_argument("Task::sample_grad: sample out of range");
  }
  switch (kind_) {
    case TaskKind::kQuadratic:
      return grad(x);
    case TaskKind::kLeastSquares: {
      const auto row = features_.row(sample);
      const double coef = pairwise_dot(row, x.span()) - targets_[sample];
      std::vector<double> g(dim_);
      for (std::size_t j = 0; j < dim_; ++j) g[j] = coef * row[j];
      return ParamVector::unchecked(std::move(g));
    }
    case TaskKind::kLogistic: {
      const auto row = features_.row(sample);
      const double z = pairwise_dot(row, x.span());
      const double coef = -targets_[sample] * sigmoid(-targets_[sample] * z);
      std::vector<double> g(dim_);
      for (std::size_t j = 0; j < dim_; ++j) {
        g[j] = coef * row[j] + ridge_ * x[j];
      }
      return ParamVector::unchecked(std::move(g));
    }
    case TaskKind::kTinyMlp: {
      const MlpShape shape{features_.cols(), hidden_};
      std::vector<double> act(hidden_);
      std::vector<double> g(dim_, 0.0);
      mlp_accumulate_grad(shape, x.data().data(), features_.row(sample).data(),
                          targets_[sample], 1.0, act, g.data());
      return ParamVector::unchecked(std::move(g));
    }
  }
  throw std::logic_error("Task::sample_grad: unreachable");
}

std::size_t Task::shard_sample(std::size_t worker, std::size_t num_shards,
                               RngStream& rng) const {
  if (num_shards == 0 || num_shards > n_) {
    throw std::invalid_argument("Task::shard_sample: bad shard count");
  }
  if (worker >= num_shards) {
    throw std::invalid_argument("Task::shard_sample: worker out of range");
  }
  const std::size_t lo = worker * n_ / num_shards;
  const std::size_t hi = (worker + 1) * n_ / num_shards;
  const std::size_t pos = lo + static_cast<std::size_t>(rng.next_below(hi - lo));
  return label_order_[pos];
}

void Task::build_label_order() {
  label_order_.resize(n_);
  std::iota(label_order_.begin(), label_order_.end(), std::size_t{0});
  if (!targets_.empty()) {
    std::stable_sort(label_order_.begin(), label_order_.end(),
                     [&](std::size_t a, std::size_t b) {
                       return targets_[a] < targets_[b];
                     });
  }
}

Task Task::quadratic(ParamVector center) {
  Task t;
  t.kind_ = TaskKind::kQuadratic;
  t.dim_ = center.dim();
  t.n_ = 1;
  t.smoothness_l_ = 1.0;
  t.pl_mu_ = 1.0;
  t.optimum_value_ = 0.0;
  t.center_ = std::move(center);
  t.optimum_ = t.center_;
  t.build_label_order();
  return t;
}

void Task::finalize_least_squares() {
  const auto n = static_cast<Eigen::Index>(n_);
  const auto d = static_cast<Eigen::Index>(dim_);
  RowMajorMap a(features_.data().data(), n, d);
  Eigen::Map<const Eigen::VectorXd> y(targets_.data(), n);
  const Eigen::MatrixXd h = (a.transpose() * a) / static_cast<double>(n_);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("least_squares: eigendecomposition failed");
  }
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  smoothness_l_ = lmax;
  if (lmin > 1e-12 * std::max(lmax, 1.0)) {
    pl_mu_ = lmin;
    const Eigen::VectorXd xstar = h.ldlt().solve(a.transpose() * y /
                                                 static_cast<double>(n_));
    optimum_ = ParamVector(
        std::vector<double>(xstar.data(), xstar.data() + xstar.size()));
    optimum_value_ = loss(*optimum_);
  }
}

Task Task::least_squares(GradMatrix a, std::vector<double> y) {
  if (a.rows() == 0 || a.rows() != y.size()) {
    throw std::invalid_argument("least_squares: shape mismatch");
  }
  Task t;
  t.kind_ = TaskKind::kLeastSquares;
  t.dim_ = a.cols();
  t.n_ = a.rows();
  t.features_ = std::move(a);
  t.targets_ = std::move(y);
  t.finalize_least_squares();
  t.build_label_order();
  return t;
}

void Task::finalize_logistic() {
  const auto n = static_cast<Eigen::Index>(n_);
  const auto d = static_cast<Eigen::Index>(dim_);
  RowMajorMap a(features_.data().data(), n, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a.transpose() * a);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("logistic: eigendecomposition failed");
  }
  // The logistic Hessian is bounded by A^T A / (4n) plus the ridge term.
  smoothness_l_ =
      eig.eigenvalues().maxCoeff() / (4.0 * static_cast<double>(n_)) + ridge_;
  if (ridge_ > 0.0) pl_mu_ = ridge_;
}

Task Task::logistic(GradMatrix features, std::vector<double> labels,
                    double ridge) {
  if (features.rows() == 0 || features.rows() != labels.size()) {
    throw std::invalid_argument("logistic: shape mismatch");
  }
  for (double l : labels) {
    if (l != 1.0 && l != -1.0) {
      throw std::invalid_argument("logistic: labels must be +/-1");
    }
  }
  if (ridge < 0.0) throw std::invalid_argument("logistic: ridge must be >= 0");
  Task t;
  t.kind_ = TaskKind::kLogistic;
  t.dim_ = features.cols();
  t.n_ = features.rows();
  t.features_ = std::move(features);
  t.targets_ = std::move(labels);
  t.ridge_ = ridge;
  t.finalize_logistic();
  t.build_label_order();
  return t;
}

void Task::finalize_tiny_mlp(RngStream& rng) {
  // No global smoothness constant exists for a tanh network; probe random
  // parameter pairs and keep a doubled local Lipschitz estimate so step-size
  // heuristics have something finite to work with.
  RngStream probe = rng.fork("smoothness-probe");
  double max_ratio = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> u = random_normals(dim_, probe);
    std::vector<double> v = random_normals(dim_, probe);
    const ParamVector pu = ParamVector::unchecked(std::move(u));
    const ParamVector pv = ParamVector::unchecked(std::move(v));
    const ParamVector gu = grad(pu);
    const ParamVector gv = grad(pv);
    const double dg = std::sqrt(pairwise_dist_sq(gu.span(), gv.span()));
    const double dx = std::sqrt(pairwise_dist_sq(pu.span(), pv.span()));
    if (dx > 0.0) max_ratio = std::max(max_ratio, dg / dx);
  }
  smoothness_l_ = std::max(2.0 * max_ratio, 1e-12);
}

Task Task::tiny_mlp(GradMatrix inputs, std::vector<double> targets,
                    std::size_t hidden, RngStream& rng) {
  if (inputs.rows() == 0 || inputs.rows() != targets.size() || hidden == 0) {
    throw std::invalid_argument("tiny_mlp: shape mismatch");
  }
  Task t;
  t.kind_ = TaskKind::kTinyMlp;
  t.hidden_ = hidden;
  const MlpShape shape{inputs.cols(), hidden};
  t.dim_ = shape.dim();
  t.n_ = inputs.rows();
  t.features_ = std::move(inputs);
  t.targets_ = std::move(targets);
  t.finalize_tiny_mlp(rng);
  t.build_label_order();
  return t;
}

Task Task::random_least_squares(std::size_t dim, std::size_t n,
                                double noise_std, RngStream& rng) {
  RngStream stream = rng.fork("least-squares-data");
  GradMatrix a(n, dim, random_normals(n * dim, stream));
  const std::vector<double> x_true = random_normals(dim, stream);
  std::vector<double> y(n);
  for (std::size_t s = 0; s < n; ++s) {
    y[s] = pairwise_dot(a.row(s), std::span<const double>(x_true)) +
           noise_std * stream.next_normal();
  }
  return least_squares(std::move(a), std::move(y));
}

Task Task::random_logistic(std::size_t dim, std::size_t n, double ridge,
                           RngStream& rng) {
  RngStream stream = rng.fork("logistic-data");
  GradMatrix a(n, dim, random_normals(n * dim, stream));
  const std::vector<double> x_true = random_normals(dim, stream);
  std::vector<double> labels(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double margin =
        pairwise_dot(a.row(s), std::span<const double>(x_true)) +
        0.5 * stream.next_normal();
    labels[s] = margin >= 0.0 ? 1.0 : -1.0;
  }
  return logistic(std::move(a), std::move(labels), ridge);
}

Task Task::random_tiny_mlp(std::size_t in_dim, std::size_t hidden,
                           std::size_t n, RngStream& rng) {
  RngStream stream = rng.fork("mlp-data");
  GradMatrix inputs(n, in_dim, random_normals(n * in_dim, stream));
  const MlpShape shape{in_dim, hidden};
  const std::vector<double> teacher =
      random_normals(shape.dim(), stream, 1.0 / std::sqrt(double(hidden)));
  std::vector<double> targets(n);
  std::vector<double> act(hidden);
  for (std::size_t s = 0; s < n; ++s) {
    targets[s] = mlp_forward(shape, teacher.data(), inputs.row(s).data(), act) +
                 0.05 * stream.next_normal();
  }
  return tiny_mlp(std::move(inputs), std::move(targets), hidden, rng);
}

Task Task::with_feature_noise(double psi, double noise_std,
                              RngStream& rng) const {
  if (kind_ == TaskKind::kQuadratic) {
    throw std::invalid_argument("with_feature_noise: task has no features");
  }
  RngStream stream = rng.fork("feature-noise");
  const std::size_t m = static_cast<std::size_t>(
      std::floor(psi * static_cast<double>(n_) + 1e-9));
  GradMatrix noisy = features_;
  std::vector<std::size_t> pool(n_);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.next_below(n_ - i));
    std::swap(pool[i], pool[j]);
  }
  for (std::size_t i = 0; i < m; ++i) {
    auto row = noisy.row_mut(pool[i]);
    for (std::size_t j = 0; j < noisy.cols(); ++j) {
      row[j] += noise_std * stream.next_normal();
    }
  }
  switch (kind_) {
    case TaskKind::kLeastSquares:
      return least_squares(std::move(noisy), targets_);
    case TaskKind::kLogistic:
      return logistic(std::move(noisy), targets_, ridge_);
    case TaskKind::kTinyMlp: {
      RngStream est = rng.fork("feature-noise-estimate");
      return tiny_mlp(std::move(noisy), targets_, hidden_, est);
    }
    default:
      throw std::logic_error("with_feature_noise: unreachable");
  }
}

Task Task::with_flipped_labels(double psi, RngStream& rng) const {
  if (kind_ != TaskKind::kLogistic) {
    throw std::invalid_argument("with_flipped_labels: logistic tasks only");
  }
  RngStream stream = rng.fork("label-flip");
  const std::size_t m = static_cast<std::size_t>(
      std::floor(psi * static_cast<double>(n_) + 1e-9));
  std::vector<double> flipped = targets_;
  std::vector<std::size_t> pool(n_);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.next_below(n_ - i));
    std::swap(pool[i], pool[j]);
  }
  for (std::size_t i = 0; i < m; ++i) flipped[pool[i]] = -flipped[pool[i]];
  return logistic(features_, std::move(flipped), ridge_);
}

ParamVector sample_grad_row(const Task& task, const Oracle& oracle,
                            const ParamVector& x, std::size_t worker,
                            std::int64_t iter, const RngStream& worker_root) {
  if (oracle.minibatch == 0) {
    throw std::invalid_argument("sample_grad_row: minibatch must be >= 1");
  }
  RngStream stream =
      worker_root.fork(worker).fork(static_cast<std::uint64_t>(iter));
  const std::size_t d = task.dim();
  const std::size_t n = task.num_samples();
  std::vector<double> acc(d, 0.0);
  for (std::size_t t = 0; t < oracle.minibatch; ++t) {
    const std::size_t s =
        oracle.heterogeneous
            ? task.shard_sample(worker, oracle.batch_size, stream)
            : static_cast<std::size_t>(stream.next_below(n));
    const ParamVector g = task.sample_grad(x, s);
    for (std::size_t j = 0; j < d; ++j) acc[j] += g[j];
  }
  const double inv_m = 1.0 / static_cast<double>(oracle.minibatch);
  for (double& v : acc) v *= inv_m;
  if (oracle.additive_std > 0.0) {
    const double coord_std = oracle.additive_std / std::sqrt(double(d));
    for (std::size_t j = 0; j < d; ++j) {
      acc[j] += coord_std * stream.next_normal();
    }
  }
  return ParamVector::unchecked(std::move(acc));
}

GradMatrix sample_grads(const Task& task, const Oracle& oracle,
                        const ParamVector& x, std::int64_t iter,
                        const RngStream& worker_root) {
  if (oracle.batch_size == 0) {
    throw std::invalid_argument("sample_grads: batch_size must be >= 1");
  }
  std::vector<ParamVector> rows;
  rows.reserve(oracle.batch_size);
  for (std::size_t w = 0; w < oracle.batch_size; ++w) {
    rows.push_back(sample_grad_row(task, oracle, x, w, iter, worker_root));
  }
  return GradMatrix::from_rows(rows);
}

double finite_diff_check(const Task& task, const ParamVector& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be > 0");
  const ParamVector g = task.grad(x);
  ParamVector probe = x;
  double max_dev = 0.0;
  for (std::size_t j = 0; j < x.dim(); ++j) {
    const double orig = probe[j];
    probe[j] = orig + h;
    const double fp = task.loss(probe);
    probe[j] = orig - h;
    const double fm = task.loss(probe);
    probe[j] = orig;
    max_dev = std::max(max_dev, std::abs((fp - fm) / (2.0 * h) - g[j]));
  }
  return max_dev;
}

std::pair<GradMatrix, std::vector<double>> load_regression_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_regression_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_regression_csv: missing header row");
  }
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> row;
    while (std::getline(ss, field, ',')) {
      try {
        row.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw std::runtime_error("load_regression_csv: bad value at line " +
                                 std::to_string(line_no));
      }
    }
    if (row.size() < 2) {
      throw std::runtime_error("load_regression_csv: need >= 2 columns, line " +
                               std::to_string(line_no));
    }
    if (cols == 0) {
      cols = row.size();
    } else if (row.size() != cols) {
      throw std::runtime_error("load_regression_csv: ragged row at line " +
                               std::to_string(line_no));
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("load_regression_csv: no data rows");

  std::vector<double> features;
  features.reserve(rows * (cols - 1));
  std::vector<double> targets;
  targets.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = values.data() + r * cols;
    features.insert(features.end(), row, row + cols - 1);
    targets.push_back(row[cols - 1]);
  }
  return {GradMatrix(rows, cols - 1, std::move(features)), std::move(targets)};
}

}  // namespace bgmd
