#pragma once

#include <cmath>
#include <deque>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adaqn/kernels.hpp"
#include "adaqn/types.hpp"

namespace adaqn {

/// Iterate difference s, curvature product y and rho = 1 / (y's).
/// rho is fixed when the pair is admitted.
struct CurvaturePair {
  ParamVector s;
  GradVector y;
  double rho = 0.0;
};

/// Diagonal seed H0 of the recursion. Entries are strictly positive and finite.
class DiagonalScaling {
 public:
  DiagonalScaling() = default;
  explicit DiagonalScaling(std::vector<double> diag) : diag_(std::move(diag)) {
    for (std::size_t i = 0; i < diag_.size(); ++i)
      if (!(diag_[i] > 0.0) || !std::isfinite(diag_[i]))
        throw NumericalError("diagonal scaling entry " + std::to_string(i) + " is not a positive finite value");
  }
  static DiagonalScaling identity(std::size_t n) { return DiagonalScaling(std::vector<double>(n, 1.0)); }

  std::size_t size() const { return diag_.size(); }
  std::span<const double> values() const { return diag_; }
  double operator[](std::size_t i) const { return diag_[i]; }

 private:
  std::vector<double> diag_;
};

enum class PushResult { Stored, Skipped };

/// Bounded FIFO of curvature pairs. Index 0 is the oldest pair.
class LbfgsMemory {
 public:
  explicit LbfgsMemory(std::size_t capacity = 10) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const CurvaturePair& operator[](std::size_t i) const { return pairs_[i]; }
  auto begin() const { return pairs_.begin(); }
  auto end() const { return pairs_.end(); }
  void clear() { pairs_.clear(); }

  /// Admits (s, y) iff s'y > eps_skip * s's. The oldest pair is evicted when full.
  /// A zero-capacity memory never stores anything.
  PushResult push(ParamVector s, GradVector y, double eps_skip) {
    require_same_size(s.size(), y.size(), "push_pair");
    if (!all_finite(s) || !all_finite(y)) throw NumericalError("push_pair: non-finite curvature pair");
    if (!pairs_.empty()) require_same_size(s.size(), pairs_.front().s.size(), "push_pair");
    const double sy = kernels::dot(s, y);
    const double ss = kernels::dot(s, s);
    if (!(sy > eps_skip * ss) || capacity_ == 0) return PushResult::Skipped;
    const double rho = 1.0 / sy;
    if (!std::isfinite(rho)) return PushResult::Skipped;
    if (pairs_.size() == capacity_) pairs_.pop_front();
    pairs_.push_back(CurvaturePair{std::move(s), std::move(y), rho});
    return PushResult::Stored;
  }

  /// Restores a pair verbatim (checkpoint load). Admission is not re-evaluated.
  void restore(CurvaturePair pair) {
    if (pairs_.size() == capacity_) pairs_.pop_front();
    pairs_.push_back(std::move(pair));
  }

 private:
  std::size_t capacity_;
  std::deque<CurvaturePair> pairs_;
};

inline PushResult push_pair(LbfgsMemory& mem, ParamVector s, GradVector y, double eps_skip = 1e-4) {
  return mem.push(std::move(s), std::move(y), eps_skip);
}

/// Writes p = -H g into `out`, with H the limited-memory inverse Hessian built from
/// `mem` over the seed `h0`. With an empty memory this is exactly p = -(h0 ∘ g).
inline void two_loop_direction(std::span<const double> g, const LbfgsMemory& mem, const DiagonalScaling& h0,
                               std::span<double> out) {
  const std::size_t n = g.size();
  require_same_size(n, h0.size(), "two_loop_direction(h0)");
  require_same_size(n, out.size(), "two_loop_direction(out)");
  const std::size_t tau = mem.size();
  if (tau == 0) {
    kernels::neg_hadamard(h0.values(), g, out);
    return;
  }
  for (std::size_t i = 0; i < tau; ++i) require_same_size(n, mem[i].s.size(), "two_loop_direction(pair)");

  auto fail = [](std::size_t i, const char* where) {
    throw NumericalError(std::string("two_loop_direction: non-finite value in ") + where + " at pair " +
                         std::to_string(i));
  };

  std::copy(g.begin(), g.end(), out.begin());
  std::vector<double> alpha(tau);
  for (std::size_t k = tau; k-- > 0;) {
    const CurvaturePair& p = mem[k];
    alpha[k] = p.rho * kernels::dot(p.s, out);
    if (!std::isfinite(alpha[k])) fail(k, "backward loop");
    kernels::axpy(-alpha[k], p.y, out);
  }
  kernels::hadamard_inplace(h0.values(), out);
  for (std::size_t k = 0; k < tau; ++k) {
    const CurvaturePair& p = mem[k];
    const double beta = p.rho * kernels::dot(p.y, out);
    if (!std::isfinite(beta)) fail(k, "forward loop");
    kernels::axpy(alpha[k] - beta, p.s, out);
  }
  kernels::negate(out);
  if (!all_finite(out)) fail(tau - 1, "result");
}

inline ParamVector two_loop_direction(std::span<const double> g, const LbfgsMemory& mem, const DiagonalScaling& h0) {
  ParamVector out(g.size());
  two_loop_direction(g, mem, h0, out);
  return out;
}

}  // namespace adaqn
