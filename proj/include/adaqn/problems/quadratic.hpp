#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "adaqn/objective.hpp"

namespace adaqn::problems {

/// n eigenvalues spaced geometrically from 1 to cond.
inline std::vector<double> geometric_spectrum(std::size_t n, double cond) {
  std::vector<double> lambda(n, 1.0);
  if (n < 2) return lambda;
  for (std::size_t i = 0; i < n; ++i)
    lambda[i] = std::pow(cond, static_cast<double>(i) / static_cast<double>(n - 1));
  return lambda;
}

/// Seeded Haar-ish orthogonal matrix (Q factor of a Gaussian matrix with sign fix).
inline Eigen::MatrixXd random_orthogonal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd G(N, N);
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = 0; i < N; ++i) G(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < N; ++j)
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  return Q;
}

struct QuadraticSpec {
  std::vector<double> spectrum;  // eigenvalues of A, all > 0
  bool rotate = true;            // false: A is diagonal and never materialized
  std::size_t examples = 1;      // m
  double noise = 0.0;            // sigma
  std::uint64_t seed = 0;
  std::size_t period = 0;  // > 0 with rotate = false: b repeats with this period
};

/// f_i(w) = ½ w'Aw - b'w + sigma ξ_i'w with A = QΛQ' and seeded per-example
/// directions ξ_i centred over the m examples, so the full-batch objective is
/// exactly ½ w'Aw - b'w and its minimiser is A⁻¹b.
class QuadraticProblem final : public StochasticObjective {
 public:
  explicit QuadraticProblem(const QuadraticSpec& spec) : lambda_(spec.spectrum), rotate_(spec.rotate) {
    n_ = lambda_.size();
    m_ = spec.examples;
    if (n_ == 0 || m_ == 0) throw ConfigError("quadratic: n and m must be positive");
    for (double l : lambda_)
      if (!(l > 0.0)) throw ConfigError("quadratic: spectrum must be positive");
    const auto N = static_cast<Eigen::Index>(n_);
    std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + 17);
    std::normal_distribution<double> normal;
    b_.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) b_(i) = normal(rng);
    if (spec.period > 0 && !rotate_)
      for (Eigen::Index i = static_cast<Eigen::Index>(spec.period); i < N; ++i) b_(i) = b_(i % static_cast<Eigen::Index>(spec.period));
    if (rotate_) {
      const Eigen::MatrixXd Q = random_orthogonal(n_, spec.seed + 1);
      const Eigen::Map<const Eigen::VectorXd> lam(lambda_.data(), N);
      A_ = Q * lam.asDiagonal() * Q.transpose();
      A_ = 0.5 * (A_ + A_.transpose());
      w_star_ = Q * (lam.cwiseInverse().asDiagonal() * (Q.transpose() * b_));
    } else {
      w_star_.resize(N);
      for (Eigen::Index i = 0; i < N; ++i) w_star_(i) = b_(i) / lambda_[static_cast<std::size_t>(i)];
    }
    f_star_ = -0.5 * b_.dot(w_star_);
    if (spec.noise > 0.0) {
      xi_ = Eigen::MatrixXd(N, static_cast<Eigen::Index>(m_));
      for (Eigen::Index j = 0; j < xi_.cols(); ++j)
        for (Eigen::Index i = 0; i < N; ++i) xi_(i, j) = normal(rng);
      const Eigen::VectorXd mean = xi_.rowwise().mean();
      xi_.colwise() -= mean;
      xi_ *= spec.noise;
    }
  }

  /// Deterministic single-example quadratic with an explicit SPD matrix.
  QuadraticProblem(Eigen::MatrixXd A, Eigen::VectorXd b) : rotate_(true), A_(std::move(A)), b_(std::move(b)) {
    n_ = static_cast<std::size_t>(b_.size());
    m_ = 1;
    if (A_.rows() != b_.size() || A_.cols() != b_.size()) throw ConfigError("quadratic: A and b disagree");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A_);
    lambda_.assign(eig.eigenvalues().data(), eig.eigenvalues().data() + n_);
    for (double l : lambda_)
      if (!(l > 0.0)) throw ConfigError("quadratic: A must be positive definite");
    w_star_ = A_.ldlt().solve(b_);
    f_star_ = -0.5 * b_.dot(w_star_);
  }

  std::size_t dimension() const override { return n_; }
  std::size_t num_examples() const override { return m_; }

  double value(std::span<const double> w, Batch batch) const override {
    const auto x = map(w);
    const Eigen::VectorXd Ax = apply(x);
    return 0.5 * x.dot(Ax) - b_.dot(x) + noise_mean(batch).dot(x);
  }

  double value_and_gradient(std::span<const double> w, Batch batch, std::span<double> grad) const override {
    require_same_size(grad.size(), n_, "quadratic gradient");
    const auto x = map(w);
    const Eigen::VectorXd Ax = apply(x);
    const Eigen::VectorXd xi = noise_mean(batch);
    Eigen::Map<Eigen::VectorXd>(grad.data(), static_cast<Eigen::Index>(n_)) = Ax - b_ + xi;
    return 0.5 * x.dot(Ax) - b_.dot(x) + xi.dot(x);
  }

  /// Noise-free full objective ½ w'Aw - b'w.
  double full_value(std::span<const double> w) const {
    const auto x = map(w);
    return 0.5 * x.dot(apply(x)) - b_.dot(x);
  }

  ParamVector minimizer() const { return ParamVector(w_star_.data(), w_star_.data() + w_star_.size()); }
  /// f* = -½ b'A⁻¹b
  double min_value() const { return f_star_; }
  const std::vector<double>& spectrum() const { return lambda_; }
  /// Dense A (materialized on demand for the diagonal variant).
  Eigen::MatrixXd matrix() const {
    if (rotate_) return A_;
    const Eigen::Map<const Eigen::VectorXd> lam(lambda_.data(), static_cast<Eigen::Index>(n_));
    return lam.asDiagonal();
  }
  const Eigen::VectorXd& rhs() const { return b_; }

 private:
  Eigen::Map<const Eigen::VectorXd> map(std::span<const double> w) const {
    require_same_size(w.size(), n_, "quadratic");
    return Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(n_));
  }

  Eigen::VectorXd apply(const Eigen::Map<const Eigen::VectorXd>& x) const {
    if (rotate_) return A_ * x;
    Eigen::VectorXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = lambda_[static_cast<std::size_t>(i)] * x(i);
    return out;
  }

  Eigen::VectorXd noise_mean(Batch batch) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    if (xi_.size() == 0 || batch.empty()) return out;
    for (Index i : batch) {
      if (i >= m_) throw ConfigError("quadratic: example index out of range");
      out += xi_.col(static_cast<Eigen::Index>(i));
    }
    return out / static_cast<double>(batch.size());
  }

  std::vector<double> lambda_;
  bool rotate_;
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  Eigen::VectorXd w_star_;
  Eigen::MatrixXd xi_;
  double f_star_ = 0.0;
};

}  // namespace adaqn::problems
