#pragma once

// Stochastic quasi-Newton optimizer: L-BFGS directions seeded with an
// Adagrad diagonal, curvature pairs formed every L iterations from averaged
// iterates and an accumulated Fisher matrix, and a monitoring-set test that
// flushes curvature and rewinds the iterate when an aggregated step degrades
// the loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "adaqn/kernels.hpp"
#include "adaqn/lbfgs.hpp"
#include "adaqn/objective.hpp"
#include "adaqn/types.hpp"

namespace adaqn {

// ---------------------------------------------------------------------------
// Accumulated Fisher information

struct FifoEntry {
  GradVector gradient;
  std::size_t batch_size = 1;
};

/// Bounded FIFO of recent stochastic gradients; represents the accumulated
/// Fisher matrix without forming any outer products.
class GradientFifo {
 public:
  explicit GradientFifo(std::size_t capacity = 100) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }
  const FifoEntry& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void push(GradVector g, std::size_t batch_size) {
    if (capacity_ == 0) return;
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back(FifoEntry{std::move(g), batch_size});
  }

 private:
  std::size_t capacity_;
  std::deque<FifoEntry> entries_;
};

/// y = (1/|F|) Σ g_i (g_i' s). Returns nullopt when the FIFO holds no gradients.
inline std::optional<GradVector> afim_matvec(const GradientFifo& fifo, std::span<const double> s) {
  if (fifo.empty()) return std::nullopt;
  GradVector y(s.size(), 0.0);
  for (const FifoEntry& e : fifo) {
    require_same_size(e.gradient.size(), s.size(), "afim_matvec");
    kernels::axpy(kernels::dot(e.gradient, s), e.gradient, y);
  }
  kernels::scale(1.0 / static_cast<double>(fifo.size()), y);
  return y;
}

/// y = (1/|H|) Σ_{i∈H} ∇f_i(w) (∇f_i(w)' s) with per-example gradients evaluated at w.
inline GradVector efim_matvec(const StochasticObjective& f, Batch batch, std::span<const double> w,
                              std::span<const double> s) {
  if (batch.empty()) throw ConfigError("efim_matvec: empty batch");
  require_same_size(w.size(), s.size(), "efim_matvec");
  GradVector y(s.size(), 0.0);
  for (Index i : batch) {
    const GradVector gi = f.per_example_gradient(w, i);
    kernels::axpy(kernels::dot(gi, s), gi, y);
  }
  kernels::scale(1.0 / static_cast<double>(batch.size()), y);
  return y;
}

// ---------------------------------------------------------------------------
// Adagrad diagonal

/// Running Σ_j g_j² per coordinate. Never reset during a run.
class SquaredGradAccumulator {
 public:
  SquaredGradAccumulator() = default;
  explicit SquaredGradAccumulator(std::size_t n) : sums_(n, 0.0) {}
  explicit SquaredGradAccumulator(std::vector<double> sums) : sums_(std::move(sums)) {}

  void add(std::span<const double> g) {
    require_same_size(g.size(), sums_.size(), "SquaredGradAccumulator");
    kernels::accumulate_squares(g, sums_);
  }
  std::size_t size() const { return sums_.size(); }
  std::span<const double> sums() const { return sums_; }

 private:
  std::vector<double> sums_;
};

/// diag_i = 1 / sqrt(sums_i + eps_scale)
inline DiagonalScaling adagrad_scaling(const SquaredGradAccumulator& acc, double eps_scale) {
  std::vector<double> d(acc.size());
  kernels::inverse_sqrt(acc.sums(), eps_scale, d);
  return DiagonalScaling(std::move(d));
}

// ---------------------------------------------------------------------------
// Step acceptance

enum class AcceptanceKind { AbsoluteFactor, RelativeImprovement };
enum class Verdict { Accept, Reject };

struct AcceptanceRule {
  AcceptanceKind kind = AcceptanceKind::AbsoluteFactor;
  double gamma = 1.01;               // AbsoluteFactor threshold, > 1
  double relative_threshold = 0.01;  // RelativeImprovement threshold, in (0, 1)
};

/// AbsoluteFactor rejects when f_new exceeds f_old by more than (gamma - 1)|f_old|,
/// which is f_new > gamma * f_old for the usual nonnegative losses.
/// RelativeImprovement rejects when (f_new - f_old) / |f_old| > threshold.
/// A non-finite f_new is always rejected.
inline Verdict acceptance_check(double f_new, double f_old, const AcceptanceRule& rule) {
  if (!std::isfinite(f_new)) return Verdict::Reject;
  if (!std::isfinite(f_old)) throw NumericalError("acceptance_check: reference loss is not finite");
  const double mag = std::abs(f_old);
  bool reject = false;
  switch (rule.kind) {
    case AcceptanceKind::AbsoluteFactor:
      reject = f_old >= 0.0 ? f_new > rule.gamma * f_old : f_new > f_old + (rule.gamma - 1.0) * mag;
      break;
    case AcceptanceKind::RelativeImprovement:
      reject = mag > 0.0 ? (f_new - f_old) / mag > rule.relative_threshold : f_new > f_old;
      break;
  }
  return reject ? Verdict::Reject : Verdict::Accept;
}

// ---------------------------------------------------------------------------
// Configuration and reporting

enum class CurvatureSource { AccumulatedFisher, EmpiricalFisher };

struct AdaqnConfig {
  double alpha = 0.01;
  std::size_t aggregation_length = 5;  // L
  std::size_t memory_size = 10;        // m_L
  std::size_t fifo_size = 100;         // m_F
  double eps_skip = 1e-4;
  double eps_scale = 1e-4;
  AcceptanceRule acceptance{};
  std::size_t batch_size = 1;  // b, also the monitoring-set size
  CurvatureSource curvature_source = CurvatureSource::AccumulatedFisher;
  bool curvature_admission = true;  // false: every pair attempt is skipped
  bool rotate_monitoring = false;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("adaqn: alpha must be positive");
    if (aggregation_length < 1) throw ConfigError("adaqn: L must be >= 1");
    if (!(eps_skip > 0.0)) throw ConfigError("adaqn: eps_skip must be positive");
    if (!(eps_scale > 0.0)) throw ConfigError("adaqn: eps_scale must be positive");
    if (!(acceptance.gamma > 1.0)) throw ConfigError("adaqn: gamma must exceed 1");
    if (acceptance.kind == AcceptanceKind::RelativeImprovement &&
        !(acceptance.relative_threshold > 0.0 && acceptance.relative_threshold < 1.0))
      throw ConfigError("adaqn: relative-improvement threshold must lie in (0, 1)");
    if (batch_size < 1) throw ConfigError("adaqn: batch size must be >= 1");
  }
};

enum class CycleEvent { Plain, CycleAccepted, CycleSkipped, CycleRejected };

inline const char* to_string(CycleEvent e) {
  switch (e) {
    case CycleEvent::Plain: return "plain";
    case CycleEvent::CycleAccepted: return "accepted";
    case CycleEvent::CycleSkipped: return "skipped";
    case CycleEvent::CycleRejected: return "rejected";
  }
  return "?";
}

struct IterationReport {
  std::uint64_t iteration = 0;  // 1-based count of completed iterations
  double loss = 0.0;            // mini-batch loss at the pre-step iterate
  double grad_norm = 0.0;
  std::size_t memory_size = 0;
  std::size_t fifo_size = 0;
  CycleEvent event = CycleEvent::Plain;
};

/// Mean post-iteration memory size over each epoch. `epoch_ends[e]` is the
/// exclusive end index into `reports` of epoch e; the running sum restarts at
/// zero for every epoch.
inline std::vector<double> average_memory_per_epoch(std::span<const IterationReport> reports,
                                                    std::span<const std::size_t> epoch_ends) {
  std::vector<double> out;
  std::size_t begin = 0;
  for (std::size_t end : epoch_ends) {
    end = std::min(end, reports.size());
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) sum += static_cast<double>(reports[i].memory_size);
    out.push_back(end > begin ? sum / static_cast<double>(end - begin) : 0.0);
    begin = end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer state machine

/// Plain-data image of the full optimizer state, used for checkpoints.
struct AdaqnSnapshot {
  AdaqnConfig config;
  ParamVector w;
  std::vector<CurvaturePair> pairs;
  std::vector<FifoEntry> fifo;
  std::vector<double> grad_square_sums;
  ParamVector w_sum;
  ParamVector w_bar_old;
  std::optional<double> f_old;
  std::uint64_t iteration = 0;
  std::uint64_t cycle = 0;
  std::vector<Index> monitoring;
  std::string rng_state;
};

class AdaqnOptimizer {
 public:
  AdaqnOptimizer(AdaqnConfig config, ParamVector w0, std::vector<Index> monitoring, std::uint64_t seed = 0)
      : config_(std::move(config)),
        w_(std::move(w0)),
        memory_(config_.memory_size),
        fifo_(config_.fifo_size),
        acc_(w_.size()),
        w_sum_(w_.size(), 0.0),
        w_bar_old_(w_.size(), 0.0),
        monitoring_(std::move(monitoring)),
        rng_(seed) {
    config_.validate();
    if (monitoring_.empty()) throw ConfigError("adaqn: monitoring set must be nonempty");
    if (!all_finite(w_)) throw NumericalError("adaqn: initial iterate is not finite");
  }

  explicit AdaqnOptimizer(const AdaqnSnapshot& snap)
      : AdaqnOptimizer(snap.config, snap.w, snap.monitoring) {
    for (const CurvaturePair& p : snap.pairs) memory_.restore(p);
    for (const FifoEntry& e : snap.fifo) fifo_.push(e.gradient, e.batch_size);
    acc_ = SquaredGradAccumulator(snap.grad_square_sums);
    w_sum_ = snap.w_sum;
    w_bar_old_ = snap.w_bar_old;
    f_old_ = snap.f_old;
    iteration_ = snap.iteration;
    cycle_ = snap.cycle;
    std::istringstream(snap.rng_state) >> rng_;
    const std::size_t n = w_.size();
    if (acc_.size() != n || w_sum_.size() != n || w_bar_old_.size() != n)
      throw ConfigError("adaqn: inconsistent snapshot dimensions");
  }

  /// One iteration on `batch`. Cycle bookkeeping runs after every L completed
  /// iterations. With m_L = 0 no curvature can ever be stored and the
  /// aggregation cycle is bypassed entirely, leaving plain Adagrad steps.
  IterationReport step(const StochasticObjective& f, Batch batch) {
    if (batch.empty()) throw ConfigError("adaqn: empty batch");
    require_same_size(f.dimension(), w_.size(), "adaqn::step");
    const std::uint64_t k = iteration_;
    IterationReport rep;

    GradVector g(w_.size());
    rep.loss = f.value_and_gradient(w_, batch, g);
    if (!std::isfinite(rep.loss) || !all_finite(g)) fail(k, "stochastic gradient", "non-finite loss or gradient");
    rep.grad_norm = plain_norm(g);

    acc_.add(g);
    DiagonalScaling h0;
    try {
      h0 = adagrad_scaling(acc_, config_.eps_scale);
    } catch (const NumericalError& e) {
      fail(k, "diagonal scaling", e.what());
    }

    ParamVector p(w_.size());
    try {
      two_loop_direction(g, memory_, h0, p);
    } catch (const NumericalError& e) {
      fail(k, "two-loop recursion", e.what());
    }
    kernels::axpy(config_.alpha, p, w_);
    if (!all_finite(w_)) fail(k, "iterate update", "iterate became non-finite");

    const bool cycling = config_.memory_size > 0;
    if (cycling) {
      fifo_.push(std::move(g), batch.size());
      kernels::add(w_, w_sum_);
    }
    ++iteration_;

    if (cycling && iteration_ % config_.aggregation_length == 0) rep.event = cycle_boundary(f, batch, k);

    rep.iteration = iteration_;
    rep.memory_size = memory_.size();
    rep.fifo_size = fifo_.size();
    return rep;
  }

  AdaqnSnapshot snapshot() const {
    AdaqnSnapshot s;
    s.config = config_;
    s.w = w_;
    s.pairs.assign(memory_.begin(), memory_.end());
    s.fifo.assign(fifo_.begin(), fifo_.end());
    s.grad_square_sums.assign(acc_.sums().begin(), acc_.sums().end());
    s.w_sum = w_sum_;
    s.w_bar_old = w_bar_old_;
    s.f_old = f_old_;
    s.iteration = iteration_;
    s.cycle = cycle_;
    s.monitoring = monitoring_;
    std::ostringstream os;
    os << rng_;
    s.rng_state = os.str();
    return s;
  }

  const AdaqnConfig& config() const { return config_; }
  const ParamVector& iterate() const { return w_; }
  const LbfgsMemory& memory() const { return memory_; }
  const GradientFifo& fifo() const { return fifo_; }
  const SquaredGradAccumulator& accumulator() const { return acc_; }
  const ParamVector& w_bar_old() const { return w_bar_old_; }
  const ParamVector& w_sum() const { return w_sum_; }
  std::optional<double> cached_monitor_loss() const { return f_old_; }
  std::uint64_t iteration() const { return iteration_; }
  std::uint64_t cycle() const { return cycle_; }
  const std::vector<Index>& monitoring_set() const { return monitoring_; }

 private:
  [[noreturn]] static void fail(std::uint64_t k, const char* substep, const std::string& what) {
    throw NumericalError("adaqn iteration " + std::to_string(k) + ", " + substep + ": " + what);
  }

  static double plain_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
  }

  double monitor_loss(const StochasticObjective& f, std::span<const double> w, std::uint64_t k) const {
    const double v = f.value(w, monitoring_);
    if (std::isnan(v)) fail(k, "monitoring loss", "NaN");
    return v;
  }

  void resample_monitoring(std::size_t m) {
    const std::size_t b = std::min(config_.batch_size, m);
    std::vector<Index> all(m);
    std::iota(all.begin(), all.end(), Index{0});
    for (std::size_t i = 0; i < b; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, m - 1);
      std::swap(all[i], all[pick(rng_)]);
    }
    monitoring_.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(b));
  }

  CycleEvent cycle_boundary(const StochasticObjective& f, Batch batch, std::uint64_t k) {
    ParamVector w_bar_new = w_sum_;
    kernels::scale(1.0 / static_cast<double>(config_.aggregation_length), w_bar_new);
    std::fill(w_sum_.begin(), w_sum_.end(), 0.0);

    if (cycle_ == 0) {
      w_bar_old_ = std::move(w_bar_new);
      f_old_ = monitor_loss(f, w_bar_old_, k);
      ++cycle_;
      return CycleEvent::CycleAccepted;
    }

    if (config_.rotate_monitoring) {
      resample_monitoring(f.num_examples());
      f_old_ = monitor_loss(f, w_bar_old_, k);
    }
    double f_new = std::numeric_limits<double>::quiet_NaN();
    try {
      f_new = f.value(w_bar_new, monitoring_);
    } catch (const NumericalError&) {
      // treated as a catastrophic aggregated step
    }
    if (acceptance_check(f_new, *f_old_, config_.acceptance) == Verdict::Reject) {
      memory_.clear();
      fifo_.clear();
      w_ = w_bar_old_;
      return CycleEvent::CycleRejected;
    }

    CycleEvent event = CycleEvent::CycleSkipped;
    if (config_.curvature_admission) {
      ParamVector s(w_.size());
      kernels::sub(w_bar_new, w_bar_old_, s);
      std::optional<GradVector> y;
      try {
        if (config_.curvature_source == CurvatureSource::AccumulatedFisher)
          y = afim_matvec(fifo_, s);
        else
          y = efim_matvec(f, batch, w_bar_new, s);
      } catch (const NumericalError& e) {
        fail(k, "curvature product", e.what());
      }
      if (y) {
        PushResult r = PushResult::Skipped;
        try {
          r = memory_.push(std::move(s), std::move(*y), config_.eps_skip);
        } catch (const NumericalError& e) {
          fail(k, "curvature pair admission", e.what());
        }
        if (r == PushResult::Stored) {
          w_bar_old_ = std::move(w_bar_new);
          f_old_ = f_new;
          event = CycleEvent::CycleAccepted;
        }
      }
    }
    ++cycle_;
    return event;
  }

  AdaqnConfig config_;
  ParamVector w_;
  LbfgsMemory memory_;
  GradientFifo fifo_;
  SquaredGradAccumulator acc_;
  ParamVector w_sum_;
  ParamVector w_bar_old_;
  std::optional<double> f_old_;
  std::uint64_t iteration_ = 0;
  std::uint64_t cycle_ = 0;
  std::vector<Index> monitoring_;
  std::mt19937_64 rng_;
};

}  // namespace adaqn
