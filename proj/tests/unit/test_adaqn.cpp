#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "adaqn/adaqn.hpp"
#include "adaqn/baselines.hpp"
#include "adaqn/problems/logistic.hpp"
#include "adaqn/problems/quadratic.hpp"

using namespace adaqn;

namespace {

// f_i(w) = ½ (a_i'w - c_i)², rows of A are examples.
class TinyLeastSquares final : public StochasticObjective {
 public:
  TinyLeastSquares(Eigen::MatrixXd A, Eigen::VectorXd c) : A_(std::move(A)), c_(std::move(c)) {}
  std::size_t dimension() const override { return static_cast<std::size_t>(A_.cols()); }
  std::size_t num_examples() const override { return static_cast<std::size_t>(A_.rows()); }
  double value(std::span<const double> w, Batch batch) const override {
    std::vector<double> g(w.size());
    return value_and_gradient(w, batch, g);
  }
  double value_and_gradient(std::span<const double> w, Batch batch, std::span<double> grad) const override {
    const Eigen::Map<const Eigen::VectorXd> x(w.data(), A_.cols());
    Eigen::Map<Eigen::VectorXd> g(grad.data(), A_.cols());
    g.setZero();
    double loss = 0.0;
    for (Index i : batch) {
      const auto r = static_cast<Eigen::Index>(i);
      const double res = A_.row(r).dot(x) - c_(r);
      loss += 0.5 * res * res;
      g += res * A_.row(r).transpose();
    }
    g /= static_cast<double>(batch.size());
    return loss / static_cast<double>(batch.size());
  }
  Eigen::MatrixXd A_;
  Eigen::VectorXd c_;
};

// Loss ½‖w - c‖² but the reported gradient points uphill, so every step raises the loss.
class RisingObjective final : public StochasticObjective {
 public:
  explicit RisingObjective(std::vector<double> c) : c_(std::move(c)) {}
  std::size_t dimension() const override { return c_.size(); }
  std::size_t num_examples() const override { return 1; }
  double value(std::span<const double> w, Batch) const override {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += 0.5 * (w[i] - c_[i]) * (w[i] - c_[i]);
    return s;
  }
  double value_and_gradient(std::span<const double> w, Batch b, std::span<double> grad) const override {
    for (std::size_t i = 0; i < w.size(); ++i) grad[i] = -(w[i] - c_[i]);
    return value(w, b);
  }
  std::vector<double> c_;
};

class NanAfter final : public StochasticObjective {
 public:
  explicit NanAfter(int calls) : left_(calls) {}
  std::size_t dimension() const override { return 2; }
  std::size_t num_examples() const override { return 1; }
  double value(std::span<const double>, Batch) const override { return 1.0; }
  double value_and_gradient(std::span<const double>, Batch, std::span<double> grad) const override {
    const double v = left_-- > 0 ? 1.0 : NAN;
    grad[0] = v;
    grad[1] = 1.0;
    return 1.0;
  }
  mutable int left_;
};

const std::vector<Index> kOne{0};

Eigen::VectorXd vec(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST(AdagradScaling, Examples) {
  const auto d = adagrad_scaling(SquaredGradAccumulator(std::vector<double>{9, 16}), 0.0);
  EXPECT_DOUBLE_EQ(d[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(d[1], 0.25);
  const auto z = adagrad_scaling(SquaredGradAccumulator(3), 1e-4);
  for (double v : z.values()) EXPECT_NEAR(v, 100.0, 1e-12);
  const auto e = adagrad_scaling(SquaredGradAccumulator(std::vector<double>{9}), 1e-4);
  EXPECT_NEAR(e[0], 1.0 / std::sqrt(9.0001), 1e-15);
  EXPECT_NEAR(e[0], 0.333331481, 1e-9);
}

TEST(Afim, Examples) {
  GradientFifo fifo;
  fifo.push({1, 0}, 1);
  fifo.push({0, 2}, 1);
  const auto y = afim_matvec(fifo, std::vector<double>{1, 1});
  ASSERT_TRUE(y);
  EXPECT_DOUBLE_EQ((*y)[0], 0.5);
  EXPECT_DOUBLE_EQ((*y)[1], 2.0);

  GradientFifo one;
  one.push({3, 4}, 2);
  const auto orth = afim_matvec(one, std::vector<double>{4, -3});
  EXPECT_EQ(*orth, (GradVector{0, 0}));
  const auto eig = afim_matvec(one, std::vector<double>{3, 4});
  EXPECT_DOUBLE_EQ((*eig)[0], 75.0);
  EXPECT_DOUBLE_EQ((*eig)[1], 100.0);

  EXPECT_FALSE(afim_matvec(GradientFifo{}, std::vector<double>{1}));
}

TEST(Afim, MatchesExplicitMatrixOnRandomFifos) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    const std::size_t count = 1 + rng() % 20;
    GradientFifo fifo;
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < count; ++j) {
      GradVector g(n);
      for (auto& v : g) v = normal(rng);
      F += vec(g) * vec(g).transpose();
      fifo.push(g, 1 + rng() % 4);
    }
    F /= static_cast<double>(count);
    std::vector<double> s(n);
    for (auto& v : s) v = normal(rng);
    const Eigen::VectorXd expect = F * vec(s);
    const auto y = afim_matvec(fifo, s);
    EXPECT_LE((vec(*y) - expect).norm(), 1e-12 * expect.norm()) << trial;
  }
}

TEST(Afim, FifoEvictsOldest) {
  GradientFifo fifo(2);
  fifo.push({1}, 1);
  fifo.push({2}, 1);
  fifo.push({3}, 1);
  ASSERT_EQ(fifo.size(), 2u);
  EXPECT_EQ(fifo[0].gradient[0], 2.0);
  GradientFifo none(0);
  none.push({1}, 1);
  EXPECT_TRUE(none.empty());
}

TEST(Efim, SingleExampleMatchesAfim) {
  auto lp = problems::LogisticProblem::synthetic(5, 3, 2);
  const std::vector<double> w{0.1, -0.2, 0.3}, s{1, 2, -1};
  const std::vector<Index> batch{3};
  GradientFifo fifo;
  fifo.push(lp.per_example_gradient(w, 3), 1);
  EXPECT_EQ(efim_matvec(lp, batch, w, s), *afim_matvec(fifo, s));
}

TEST(Efim, LeastSquaresExplicitOracle) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 10);
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 8);
    Eigen::MatrixXd A(m, n);
    Eigen::VectorXd c(m), w(n), s(n);
    for (auto& v : A.reshaped()) v = normal(rng);
    for (auto& v : c) v = normal(rng);
    for (auto& v : w) v = normal(rng);
    for (auto& v : s) v = normal(rng);
    TinyLeastSquares f(A, c);
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::VectorXd gi = A.row(i).transpose() * (A.row(i).dot(w) - c(i));
      F += gi * gi.transpose();
    }
    F /= static_cast<double>(m);
    const auto batch = full_batch(f);
    const auto y = efim_matvec(f, batch, std::vector<double>(w.data(), w.data() + n),
                               std::vector<double>(s.data(), s.data() + n));
    const Eigen::VectorXd expect = F * s;
    EXPECT_LE((vec(y) - expect).norm(), 1e-12 * std::max(1.0, expect.norm()));
  }
}

TEST(Efim, ZeroDirectionGivesZero) {
  auto lp = problems::LogisticProblem::synthetic(6, 4, 1);
  const auto y = efim_matvec(lp, full_batch(lp), std::vector<double>{1, 2, 3, 4}, std::vector<double>(4, 0.0));
  for (double v : y) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(efim_matvec(lp, {}, std::vector<double>(4), std::vector<double>(4)), ConfigError);
}

TEST(Acceptance, Examples) {
  AcceptanceRule abs;
  EXPECT_EQ(acceptance_check(1.02, 1.0, abs), Verdict::Reject);
  EXPECT_EQ(acceptance_check(1.005, 1.0, abs), Verdict::Accept);
  EXPECT_EQ(acceptance_check(NAN, 1.0, abs), Verdict::Reject);
  EXPECT_EQ(acceptance_check(INFINITY, 1.0, abs), Verdict::Reject);
  EXPECT_THROW(acceptance_check(1.0, NAN, abs), NumericalError);

  AcceptanceRule rel{AcceptanceKind::RelativeImprovement, 1.01, 0.05};
  EXPECT_EQ(acceptance_check(1.04, 1.0, rel), Verdict::Accept);
  EXPECT_EQ(acceptance_check(1.06, 1.0, rel), Verdict::Reject);
}

TEST(Acceptance, NegativeReferenceLoss) {
  AcceptanceRule abs;
  EXPECT_EQ(acceptance_check(-1.0, -1.0, abs), Verdict::Accept);
  EXPECT_EQ(acceptance_check(-0.995, -1.0, abs), Verdict::Accept);
  EXPECT_EQ(acceptance_check(-0.98, -1.0, abs), Verdict::Reject);
  EXPECT_EQ(acceptance_check(-2.0, -1.0, abs), Verdict::Accept);
}

TEST(Config, Validation) {
  AdaqnConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.memory_size, 10u);
  EXPECT_EQ(c.fifo_size, 100u);
  EXPECT_DOUBLE_EQ(c.acceptance.gamma, 1.01);
  auto bad = c;
  bad.aggregation_length = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.acceptance.gamma = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.alpha = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.eps_skip = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(AdaqnOptimizer(c, {0.0}, {}), ConfigError);
}

TEST(AverageMemory, Examples) {
  auto reports = [](std::vector<std::size_t> sizes) {
    std::vector<IterationReport> r(sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) r[i].memory_size = sizes[i];
    return r;
  };
  const std::vector<std::size_t> four{4};
  EXPECT_DOUBLE_EQ(average_memory_per_epoch(reports({0, 0, 1, 1}), four)[0], 0.5);
  EXPECT_DOUBLE_EQ(average_memory_per_epoch(reports({0, 0, 0, 0}), four)[0], 0.0);
  const std::vector<std::size_t> five{5};
  EXPECT_DOUBLE_EQ(average_memory_per_epoch(reports({1, 2, 3, 4, 5}), five)[0], 3.0);
  const std::vector<std::size_t> two_epochs{2, 5};
  const auto m = average_memory_per_epoch(reports({2, 4, 1, 1, 1}), two_epochs);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_DOUBLE_EQ(m[0], 3.0);
  EXPECT_DOUBLE_EQ(m[1], 1.0);
}

TEST(AdaqnStep, EmptyMemoryMatchesAdagradBitwise) {
  auto lp = problems::LogisticProblem::synthetic(200, 10, 7);
  AdaqnConfig c;
  c.alpha = 0.05;
  c.aggregation_length = 3;
  c.curvature_admission = false;
  c.acceptance.gamma = 1e12;
  AdaqnOptimizer opt(c, std::vector<double>(10, 0.0), {0, 1, 2});
  AdagradState ag{SquaredGradAccumulator(10), c.eps_scale};
  std::vector<double> w(10, 0.0);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 300; ++k) {
    const std::vector<Index> batch{rng() % 200, rng() % 200};
    const auto rep = opt.step(lp, batch);
    EXPECT_NE(rep.event, CycleEvent::CycleRejected);
    adagrad_step(ag, w, lp.gradient(w, batch), c.alpha);
    ASSERT_EQ(opt.iterate(), w) << "step " << k;
  }
  EXPECT_EQ(opt.memory().size(), 0u);
}

// L = 1, three iterations on a 2-D quadratic, followed against an explicit
// matrix simulation: Adagrad diagonal, dense inverse BFGS update, aFIM as a
// dense average of outer products.
TEST(AdaqnStep, HandTracedThreeIterationsL1) {
  Eigen::MatrixXd A(2, 2);
  A << 3, 1, 1, 2;
  Eigen::VectorXd b(2);
  b << 1, -1;
  problems::QuadraticProblem q(A, b);
  AdaqnConfig c;
  c.alpha = 0.1;
  c.aggregation_length = 1;
  AdaqnOptimizer opt(c, {1.0, 1.0}, kOne);

  const double eps = 1e-4;
  Eigen::VectorXd w(2), acc = Eigen::VectorXd::Zero(2);
  w << 1, 1;
  std::vector<Eigen::VectorXd> grads, iterates;
  Eigen::MatrixXd Hpairs;  // H built from stored pairs on top of the current diagonal
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
  auto f = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(A * x) - b.dot(x); };
  auto inverse_bfgs = [&](const Eigen::VectorXd& h0) {
    Eigen::MatrixXd H = h0.asDiagonal();
    for (const auto& [s, y] : pairs) {
      const double rho = 1.0 / s.dot(y);
      const Eigen::MatrixXd V = Eigen::MatrixXd::Identity(2, 2) - rho * y * s.transpose();
      H = V.transpose() * H * V + rho * s * s.transpose();
    }
    return H;
  };

  Eigen::VectorXd w_bar_old;
  double f_old = 0;
  const CycleEvent expected[3] = {CycleEvent::CycleAccepted, CycleEvent::CycleAccepted, CycleEvent::CycleAccepted};
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXd g = A * w - b;
    grads.push_back(g);
    acc += g.cwiseProduct(g);
    const Eigen::VectorXd h0 = (acc.array() + eps).rsqrt();
    w = w - c.alpha * inverse_bfgs(h0) * g;
    if (k == 0) {
      w_bar_old = w;
      f_old = f(w);
    } else {
      ASSERT_LE(f(w), 1.01 * std::abs(f_old) + f_old);
      const Eigen::VectorXd s = w - w_bar_old;
      Eigen::MatrixXd F = Eigen::MatrixXd::Zero(2, 2);
      for (const auto& gj : grads) F += gj * gj.transpose();
      F /= static_cast<double>(grads.size());
      const Eigen::VectorXd y = F * s;
      ASSERT_GT(s.dot(y), eps * s.dot(s));
      pairs.emplace_back(s, y);
      w_bar_old = w;
      f_old = f(w);
    }

    const auto rep = opt.step(q, kOne);
    EXPECT_EQ(rep.event, expected[k]);
    EXPECT_EQ(rep.memory_size, pairs.size());
    EXPECT_EQ(rep.fifo_size, grads.size());
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(opt.iterate()[static_cast<std::size_t>(i)], w(i), 1e-14);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(opt.w_bar_old()[static_cast<std::size_t>(i)], w_bar_old(i), 1e-14);
    EXPECT_NEAR(*opt.cached_monitor_loss(), f_old, 1e-14);
    EXPECT_EQ(opt.cycle(), static_cast<std::uint64_t>(k + 1));
  }
}

TEST(AdaqnStep, FirstBoundaryAfterLIterations) {
  auto lp = problems::LogisticProblem::synthetic(20, 3, 1);
  AdaqnConfig c;
  c.aggregation_length = 4;
  AdaqnOptimizer opt(c, std::vector<double>(3, 0.0), kOne);
  for (int k = 1; k <= 8; ++k) {
    const auto rep = opt.step(lp, kOne);
    EXPECT_EQ(rep.event == CycleEvent::Plain, k % 4 != 0) << k;
    EXPECT_EQ(rep.iteration, static_cast<std::uint64_t>(k));
  }
}

TEST(AdaqnStep, RejectionPostconditionsRandomized) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  int rejections = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<double> target(n), w0(n);
    for (auto& v : target) v = normal(rng);
    for (auto& v : w0) v = normal(rng);
    RisingObjective f(target);
    AdaqnConfig c;
    c.alpha = 0.05 + 0.5 * std::uniform_real_distribution<double>()(rng);
    c.aggregation_length = 1 + rng() % 5;
    AdaqnOptimizer opt(c, w0, kOne);
    bool seen = false;
    for (int k = 0; k < 40 && !seen; ++k) {
      const ParamVector before = opt.w_bar_old();
      const auto cycle = opt.cycle();
      const auto rep = opt.step(f, kOne);
      if (rep.event == CycleEvent::CycleRejected) {
        seen = true;
        EXPECT_EQ(opt.memory().size(), 0u);
        EXPECT_EQ(opt.fifo().size(), 0u);
        EXPECT_EQ(rep.memory_size, 0u);
        EXPECT_EQ(rep.fifo_size, 0u);
        EXPECT_EQ(opt.iterate(), opt.w_bar_old());
        EXPECT_EQ(opt.w_bar_old(), before);
        EXPECT_EQ(opt.cycle(), cycle);
      }
    }
    rejections += seen;
  }
  EXPECT_EQ(rejections, 100);
}

TEST(AdaqnStep, SkipPostconditionsRandomized) {
  std::mt19937_64 rng(99);
  int skips = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 6;
    problems::QuadraticSpec spec;
    spec.spectrum = problems::geometric_spectrum(n, 10.0);
    spec.seed = rng();
    problems::QuadraticProblem q(spec);
    AdaqnConfig c;
    c.alpha = 0.02;
    c.aggregation_length = 1 + rng() % 3;
    AdaqnOptimizer opt(c, ParamVector(n, 0.0), kOne);
    const std::size_t warmup = 4 * c.aggregation_length;
    for (std::size_t k = 0; k < warmup; ++k) opt.step(q, kOne);
    // Same state with an impossible curvature threshold: every further pair is refused.
    AdaqnSnapshot snap = opt.snapshot();
    snap.config.eps_skip = 1e12;
    AdaqnOptimizer strict(snap);
    for (std::size_t k = 0; k < 3 * c.aggregation_length; ++k) {
      const ParamVector before = strict.w_bar_old();
      const std::size_t mem = strict.memory().size();
      const auto cycle = strict.cycle();
      const auto rep = strict.step(q, kOne);
      if (rep.event == CycleEvent::CycleSkipped) {
        ++skips;
        EXPECT_EQ(strict.w_bar_old(), before);
        EXPECT_EQ(strict.memory().size(), mem);
        EXPECT_EQ(strict.cycle(), cycle + 1);
      }
      EXPECT_NE(rep.event, CycleEvent::CycleAccepted);
    }
  }
  EXPECT_GE(skips, 100);
}

TEST(AdaqnStep, EmptyFifoBoundaryIsSkip) {
  auto lp = problems::LogisticProblem::synthetic(20, 3, 1);
  AdaqnConfig c;
  c.aggregation_length = 2;
  c.fifo_size = 0;
  AdaqnOptimizer opt(c, std::vector<double>(3, 0.0), kOne);
  opt.step(lp, kOne);
  EXPECT_EQ(opt.step(lp, kOne).event, CycleEvent::CycleAccepted);
  for (int k = 0; k < 6; ++k) {
    const auto rep = opt.step(lp, kOne);
    if (rep.event != CycleEvent::Plain) {
      EXPECT_EQ(rep.event, CycleEvent::CycleSkipped);
    }
  }
}

TEST(AdaqnStep, AccumulatorNondecreasingAcrossRejections) {
  RisingObjective f({0.5, -1.0, 2.0});
  AdaqnConfig c;
  c.alpha = 0.3;
  c.aggregation_length = 2;
  AdaqnOptimizer opt(c, {0.0, 0.0, 0.0}, kOne);
  std::vector<double> prev(3, 0.0);
  int rejected = 0;
  for (int k = 0; k < 60; ++k) {
    rejected += opt.step(f, kOne).event == CycleEvent::CycleRejected;
    const auto sums = opt.accumulator().sums();
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_GE(sums[i], prev[i]);
      prev[i] = sums[i];
    }
  }
  EXPECT_GT(rejected, 0);
}

TEST(AdaqnStep, MemoryPairsSatisfyAdmissionThroughoutRun) {
  auto lp = problems::LogisticProblem::synthetic(300, 8, 3);
  AdaqnConfig c;
  c.alpha = 0.2;
  c.aggregation_length = 2;
  c.memory_size = 4;
  AdaqnOptimizer opt(c, std::vector<double>(8, 0.0), {0, 1, 2, 3});
  std::mt19937_64 rng(5);
  std::size_t max_mem = 0;
  for (int k = 0; k < 200; ++k) {
    const std::vector<Index> batch{rng() % 300, rng() % 300, rng() % 300, rng() % 300};
    opt.step(lp, batch);
    max_mem = std::max(max_mem, opt.memory().size());
    for (const auto& p : opt.memory()) EXPECT_GT(kernels::dot(p.s, p.y), c.eps_skip * kernels::dot(p.s, p.s));
  }
  EXPECT_EQ(max_mem, 4u);
}

TEST(AdaqnStep, DeterministicTrajectory) {
  auto lp = problems::LogisticProblem::synthetic(100, 6, 9);
  auto run = [&] {
    AdaqnConfig c;
    c.alpha = 0.1;
    c.aggregation_length = 3;
    c.rotate_monitoring = true;
    c.batch_size = 4;
    AdaqnOptimizer opt(c, std::vector<double>(6, 0.0), {0, 1, 2, 3}, 42);
    std::vector<std::string> events;
    for (int k = 0; k < 90; ++k) {
      const std::vector<Index> batch{static_cast<Index>(k % 100), static_cast<Index>((7 * k) % 100)};
      events.push_back(to_string(opt.step(lp, batch).event));
    }
    return std::make_pair(opt.iterate(), events);
  };
  EXPECT_EQ(run(), run());
}

TEST(AdaqnStep, SnapshotResumeIsBitExact) {
  auto lp = problems::LogisticProblem::synthetic(100, 6, 9);
  AdaqnConfig c;
  c.alpha = 0.1;
  c.aggregation_length = 3;
  c.rotate_monitoring = true;
  c.batch_size = 3;
  AdaqnOptimizer full(c, std::vector<double>(6, 0.0), {4, 5, 6}, 7);
  auto batch_at = [](int k) { return std::vector<Index>{static_cast<Index>((3 * k) % 100)}; };
  for (int k = 0; k < 40; ++k) full.step(lp, batch_at(k));
  AdaqnOptimizer resumed(full.snapshot());
  for (int k = 40; k < 80; ++k) {
    const auto a = full.step(lp, batch_at(k));
    const auto b = resumed.step(lp, batch_at(k));
    ASSERT_EQ(a.event, b.event);
    ASSERT_EQ(a.loss, b.loss);
    ASSERT_EQ(full.iterate(), resumed.iterate());
  }
  EXPECT_EQ(full.monitoring_set(), resumed.monitoring_set());
}

TEST(AdaqnStep, NumericalFailureNamesSubstepAndIteration) {
  NanAfter f(3);
  AdaqnOptimizer opt(AdaqnConfig{}, {0.0, 0.0}, kOne);
  for (int k = 0; k < 3; ++k) opt.step(f, kOne);
  try {
    opt.step(f, kOne);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("iteration 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("stochastic gradient"), std::string::npos) << msg;
  }
}

TEST(AdaqnStep, ZeroMemoryIsPureAdagrad) {
  auto lp = problems::LogisticProblem::synthetic(50, 4, 2);
  AdaqnConfig c;
  c.memory_size = 0;
  c.fifo_size = 0;
  c.aggregation_length = 1;
  AdaqnOptimizer opt(c, std::vector<double>(4, 0.0), kOne);
  AdagradState ag{SquaredGradAccumulator(4), c.eps_scale};
  std::vector<double> w(4, 0.0);
  for (int k = 0; k < 50; ++k) {
    const std::vector<Index> batch{static_cast<Index>(k)};
    EXPECT_EQ(opt.step(lp, batch).event, CycleEvent::Plain);
    adagrad_step(ag, w, lp.gradient(w, batch), c.alpha);
  }
  EXPECT_EQ(opt.iterate(), w);
}

TEST(AdaqnCost, CountedOpsScaleLinearlyInDimension) {
  auto per_iteration = [](std::size_t n) {
    problems::QuadraticSpec spec;
    spec.spectrum = problems::geometric_spectrum(n, 100.0);
    spec.rotate = false;
    problems::QuadraticProblem q(spec);
    AdaqnConfig c;
    c.alpha = 0.01;
    c.aggregation_length = 5;
    AdaqnOptimizer opt(c, ParamVector(n, 0.0), kOne);
    FlopCounter counter;
    FlopScope scope(counter);
    const int iters = 100;
    for (int k = 0; k < iters; ++k) opt.step(q, kOne);
    return static_cast<double>(counter.ops) / iters;
  };
  const double a = per_iteration(1000), b = per_iteration(2000);
  EXPECT_NEAR(b / a, 2.0, 0.5);
  // c1·n + 4·m_L·n + m_F·n/L + c2 with a generous c1
  EXPECT_LE(a, 20.0 * 1000 + 4.0 * 10 * 1000 + 100.0 * 1000 / 5 + 100);
}
