#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "adaqn/objective.hpp"

namespace adaqn::problems {

/// Binary logistic regression with labels in {0, 1}:
///   f_i(w) = log(1 + exp(x_i'w)) - y_i x_i'w,   ∇f_i(w) = (σ(x_i'w) - y_i) x_i
class LogisticProblem final : public StochasticObjective {
 public:
  /// Rows of X are examples.
  LogisticProblem(Eigen::MatrixXd X, Eigen::VectorXd y) : X_(std::move(X)), y_(std::move(y)) {
    if (X_.rows() != y_.size() || X_.rows() == 0) throw ConfigError("logistic: X and y disagree");
    for (Eigen::Index i = 0; i < y_.size(); ++i)
      if (y_(i) != 0.0 && y_(i) != 1.0) throw ConfigError("logistic: labels must be 0 or 1");
  }

  /// Gaussian features; labels drawn from a seeded teacher with logistic noise.
  static LogisticProblem synthetic(std::size_t examples, std::size_t features, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto m = static_cast<Eigen::Index>(examples);
    const auto d = static_cast<Eigen::Index>(features);
    Eigen::VectorXd teacher(d);
    for (Eigen::Index j = 0; j < d; ++j) teacher(j) = normal(rng);
    Eigen::MatrixXd X(m, d);
    Eigen::VectorXd y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) X(i, j) = normal(rng);
      const double p = 1.0 / (1.0 + std::exp(-X.row(i).dot(teacher)));
      y(i) = unif(rng) < p ? 1.0 : 0.0;
    }
    return LogisticProblem(std::move(X), std::move(y));
  }

  std::size_t dimension() const override { return static_cast<std::size_t>(X_.cols()); }
  std::size_t num_examples() const override { return static_cast<std::size_t>(X_.rows()); }

  double value(std::span<const double> w, Batch batch) const override {
    const auto x = map(w);
    double loss = 0.0;
    for (Index i : batch) loss += example_loss(X_.row(row(i)).dot(x), y_(row(i)));
    return loss / static_cast<double>(batch.size());
  }

  double value_and_gradient(std::span<const double> w, Batch batch, std::span<double> grad) const override {
    require_same_size(grad.size(), dimension(), "logistic gradient");
    const auto x = map(w);
    Eigen::Map<Eigen::VectorXd> g(grad.data(), X_.cols());
    g.setZero();
    double loss = 0.0;
    for (Index i : batch) {
      const Eigen::Index r = row(i);
      const double z = X_.row(r).dot(x);
      loss += example_loss(z, y_(r));
      g += (sigmoid(z) - y_(r)) * X_.row(r).transpose();
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    g *= inv;
    return loss * inv;
  }

  std::optional<double> accuracy(std::span<const double> w, Batch batch) const override {
    const auto x = map(w);
    std::size_t hits = 0;
    for (Index i : batch) {
      const double pred = X_.row(row(i)).dot(x) > 0.0 ? 1.0 : 0.0;
      hits += pred == y_(row(i)) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(batch.size());
  }

  const Eigen::MatrixXd& features() const { return X_; }
  const Eigen::VectorXd& labels() const { return y_; }

 private:
  static double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  // log(1 + e^z) - y z, stable for large |z|
  static double example_loss(double z, double y) {
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - y * z;
  }
  Eigen::Index row(Index i) const {
    if (i >= num_examples()) throw ConfigError("logistic: example index out of range");
    return static_cast<Eigen::Index>(i);
  }
  Eigen::Map<const Eigen::VectorXd> map(std::span<const double> w) const {
    require_same_size(w.size(), dimension(), "logistic");
    return Eigen::Map<const Eigen::VectorXd>(w.data(), X_.cols());
  }

  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
};

}  // namespace adaqn::problems
