#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "adaqn/data/digits.hpp"
#include "adaqn/problems/finite_diff.hpp"
#include "adaqn/problems/logistic.hpp"
#include "adaqn/problems/quadratic.hpp"
#include "adaqn/problems/rnn.hpp"

using namespace adaqn;
using namespace adaqn::problems;

namespace {

class ConstantObjective final : public StochasticObjective {
 public:
  std::size_t dimension() const override { return 4; }
  std::size_t num_examples() const override { return 1; }
  double value(std::span<const double>, Batch) const override { return 3.5; }
  double value_and_gradient(std::span<const double>, Batch, std::span<double> g) const override {
    std::fill(g.begin(), g.end(), 0.0);
    return 3.5;
  }
};

double rel_err(std::span<const double> a, std::span<const double> b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

data::TokenSequences random_tokens(std::mt19937_64& rng, std::size_t count, std::size_t T, std::size_t V) {
  data::TokenSequences d;
  d.seq_len = T;
  d.vocab_size = V;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::uint32_t> s(T + 1);
    for (auto& v : s) v = static_cast<std::uint32_t>(rng() % V);
    d.inputs.emplace_back(s.begin(), s.end() - 1);
    d.targets.emplace_back(s.begin() + 1, s.end());
  }
  return d;
}

}  // namespace

TEST(Quadratic, GradientVanishesAtMinimizer) {
  QuadraticSpec spec;
  spec.spectrum = geometric_spectrum(10, 100.0);
  spec.seed = 3;
  QuadraticProblem q(spec);
  const auto g = q.gradient(q.minimizer(), std::vector<Index>{0});
  for (double v : g) EXPECT_NEAR(v, 0.0, 1e-12);
  EXPECT_NEAR(q.full_value(q.minimizer()), q.min_value(), 1e-12);
}

TEST(Quadratic, IdentityExample) {
  QuadraticProblem q(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2));
  std::vector<double> g(2);
  EXPECT_DOUBLE_EQ(q.value_and_gradient(std::vector<double>{1, 1}, std::vector<Index>{0}, g), 1.0);
  EXPECT_EQ(g, (std::vector<double>{1, 1}));
}

TEST(Quadratic, TopEigenvectorGradientIsCondTimesBottom) {
  QuadraticSpec spec;
  spec.spectrum = geometric_spectrum(6, 1e4);
  spec.seed = 8;
  QuadraticProblem q(spec);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q.matrix());
  const auto grad_norm_along = [&](int col) {
    Eigen::VectorXd w = q.matrix().ldlt().solve(q.rhs()) + eig.eigenvectors().col(col);
    const auto g = q.gradient(std::vector<double>(w.data(), w.data() + w.size()), std::vector<Index>{0});
    return Eigen::Map<const Eigen::VectorXd>(g.data(), 6).norm();
  };
  EXPECT_NEAR(grad_norm_along(5) / grad_norm_along(0), 1e4, 1e-6);
  EXPECT_NEAR(spec.spectrum.front(), 1.0, 0.0);
  EXPECT_NEAR(spec.spectrum.back(), 1e4, 1e-8);
}

TEST(Quadratic, NoiseAveragesOutOverAllExamples) {
  QuadraticSpec spec;
  spec.spectrum = geometric_spectrum(5, 10.0);
  spec.examples = 8;
  spec.noise = 0.5;
  QuadraticProblem q(spec);
  const std::vector<double> w{0.1, 0.2, -0.3, 0.4, 0.5};
  const auto all = full_batch(q);
  EXPECT_NEAR(q.value(w, all), q.full_value(w), 1e-14);
  const auto one = q.gradient(w, std::vector<Index>{2});
  const auto mean = q.gradient(w, all);
  EXPECT_GT(rel_err(one, mean), 1e-3);
}

TEST(Quadratic, DiagonalVariantMatchesDense) {
  QuadraticSpec spec;
  spec.spectrum = {1, 2, 5};
  spec.rotate = false;
  QuadraticProblem q(spec);
  const std::vector<double> w{1, -1, 2};
  const auto g = q.gradient(w, std::vector<Index>{0});
  const Eigen::VectorXd expect = q.matrix() * Eigen::Vector3d(1, -1, 2) - q.rhs();
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g[static_cast<std::size_t>(i)], expect(i));
}

TEST(Quadratic, SmallGradientStepDecreasesLoss) {
  QuadraticSpec spec;
  spec.spectrum = geometric_spectrum(20, 1e3);
  spec.seed = 12;
  QuadraticProblem q(spec);
  std::vector<double> w(20, 0.3);
  const auto g = q.gradient(w, std::vector<Index>{0});
  const double before = q.full_value(w);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 1e-4 * g[i];
  EXPECT_LT(q.full_value(w), before);
}

TEST(Quadratic, RejectsBadSpectrum) {
  QuadraticSpec spec;
  spec.spectrum = {1.0, 0.0};
  EXPECT_THROW(QuadraticProblem{spec}, ConfigError);
  EXPECT_THROW(QuadraticProblem(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(3)), ConfigError);
}

TEST(FiniteDiff, QuadraticClosedForm) {
  QuadraticSpec spec;
  spec.spectrum = geometric_spectrum(10, 50.0);
  spec.seed = 2;
  QuadraticProblem q(spec);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  std::vector<double> w(10);
  for (auto& v : w) v = normal(rng);
  const std::vector<Index> b{0};
  const Eigen::VectorXd exact =
      q.matrix() * Eigen::Map<const Eigen::VectorXd>(w.data(), 10) - q.rhs();
  const auto fd = finite_diff_gradient(q, w, b, 1e-5);
  EXPECT_LE(rel_err(fd, std::vector<double>(exact.data(), exact.data() + 10)), 1e-8);
}

TEST(FiniteDiff, ConstantIsZero) {
  ConstantObjective c;
  const auto g = finite_diff_gradient(c, std::vector<double>{1, 2, 3, 4}, std::vector<Index>{0});
  for (double v : g) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(finite_diff_gradient(c, std::vector<double>(4), std::vector<Index>{0}, 0.0), ConfigError);
}

TEST(Logistic, OriginGradientClosedForm) {
  // balanced labels, centred features
  Eigen::MatrixXd X(4, 2);
  X << 1, 2, -1, 0.5, 2, -1.5, -2, -1;
  Eigen::VectorXd y(4);
  y << 1, 0, 1, 0;
  LogisticProblem lp(X, y);
  const auto all = full_batch(lp);
  const std::vector<double> w0(2, 0.0);
  const Eigen::VectorXd expect = -(X.transpose() * (y.array() - 0.5).matrix()) / 4.0;
  const auto g = lp.gradient(w0, all);
  const auto fd = finite_diff_gradient(lp, w0, all);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(g[static_cast<std::size_t>(i)], expect(i), 1e-15);
    EXPECT_NEAR(fd[static_cast<std::size_t>(i)], expect(i), 1e-9);
  }
  EXPECT_NEAR(lp.value(w0, all), std::log(2.0), 1e-15);
}

TEST(Logistic, StableForLargeMargins) {
  Eigen::MatrixXd X(2, 1);
  X << 1, -1;
  Eigen::VectorXd y(2);
  y << 1, 1;
  LogisticProblem lp(X, y);
  const std::vector<double> w{800.0};
  const double v = lp.value(w, full_batch(lp));
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 400.0, 1e-9);
  EXPECT_DOUBLE_EQ(*lp.accuracy(w, full_batch(lp)), 0.5);
}

TEST(Logistic, MatchesFiniteDifferences) {
  auto lp = LogisticProblem::synthetic(40, 6, 5);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int draw = 0; draw < 20; ++draw) {
    std::vector<double> w(6);
    for (auto& v : w) v = normal(rng);
    const std::vector<Index> b{rng() % 40, rng() % 40, rng() % 40};
    EXPECT_LE(rel_err(lp.gradient(w, b), finite_diff_gradient(lp, w, b)), 1e-6);
  }
}

TEST(Logistic, SyntheticIsDeterministic) {
  auto a = LogisticProblem::synthetic(30, 4, 9), b = LogisticProblem::synthetic(30, 4, 9);
  const std::vector<double> w{0.3, -0.1, 0.2, 0.0};
  EXPECT_EQ(a.value(w, full_batch(a)), b.value(w, full_batch(b)));
  EXPECT_EQ(a.gradient(w, full_batch(a)), b.gradient(w, full_batch(b)));
}

// Across every objective: batch gradient = mean of per-example gradients.
TEST(ObjectiveProperty, BatchGradientIsMeanOfPerExample) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal;
  QuadraticSpec qs;
  qs.spectrum = geometric_spectrum(7, 30.0);
  qs.examples = 10;
  qs.noise = 0.3;
  std::vector<std::unique_ptr<StochasticObjective>> objectives;
  objectives.push_back(std::make_unique<QuadraticProblem>(qs));
  objectives.push_back(std::make_unique<LogisticProblem>(LogisticProblem::synthetic(25, 5, 1)));
  objectives.push_back(std::make_unique<CharLmObjective>(4, 2, random_tokens(rng, 12, 5, 4)));
  objectives.push_back(std::make_unique<PixelSequenceObjective>(5, 1, data::synth_digits(12, 8, 3)));
  for (const auto& f : objectives) {
    for (int draw = 0; draw < 10; ++draw) {
      std::vector<double> w(f->dimension());
      for (auto& v : w) v = 0.3 * normal(rng);
      std::vector<Index> batch(1 + rng() % 5);
      for (auto& i : batch) i = rng() % f->num_examples();
      const auto g = f->gradient(w, batch);
      std::vector<double> mean(w.size(), 0.0);
      for (Index i : batch) {
        const auto gi = f->per_example_gradient(w, i);
        for (std::size_t j = 0; j < w.size(); ++j) mean[j] += gi[j];
      }
      for (auto& v : mean) v /= static_cast<double>(batch.size());
      EXPECT_LE(rel_err(g, mean), 1e-12);
      EXPECT_EQ(f->gradient(w, batch), g);
    }
  }
}
