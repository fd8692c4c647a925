#pragma once

// Vector kernels used on the optimizer side. Every kernel charges one counted
// operation per element it touches to the thread's active FlopCounter, so a
// dot product or an axpy over n entries costs n. Objective evaluation is never
// routed through here and is therefore not counted.

#include <cmath>
#include <cstdint>
#include <span>

#include "adaqn/types.hpp"

namespace adaqn {

struct FlopCounter {
  std::uint64_t ops = 0;
};

namespace detail {
inline thread_local FlopCounter* active_counter = nullptr;
}

/// Routes kernel counts on this thread into `counter` while in scope.
class FlopScope {
 public:
  explicit FlopScope(FlopCounter& counter) : previous_(detail::active_counter) {
    detail::active_counter = &counter;
  }
  ~FlopScope() { detail::active_counter = previous_; }
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;

 private:
  FlopCounter* previous_;
};

namespace kernels {

inline void charge(std::size_t n) {
  if (detail::active_counter) detail::active_counter->ops += n;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  charge(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  charge(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

/// y *= a
inline void scale(double a, std::span<double> y) {
  charge(y.size());
  for (double& v : y) v *= a;
}

/// out = -(d ∘ x)
inline void neg_hadamard(std::span<const double> d, std::span<const double> x, std::span<double> out) {
  charge(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = -(d[i] * x[i]);
}

/// y = d ∘ y
inline void hadamard_inplace(std::span<const double> d, std::span<double> y) {
  charge(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = d[i] * y[i];
}

inline void negate(std::span<double> y) {
  charge(y.size());
  for (double& v : y) v = -v;
}

/// acc += x ∘ x
inline void accumulate_squares(std::span<const double> x, std::span<double> acc) {
  charge(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) acc[i] += x[i] * x[i];
}

/// acc += x
inline void add(std::span<const double> x, std::span<double> acc) {
  charge(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) acc[i] += x[i];
}

/// out = a - b
inline void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  charge(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
}

/// out_i = 1 / sqrt(acc_i + eps)
inline void inverse_sqrt(std::span<const double> acc, double eps, std::span<double> out) {
  charge(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = 1.0 / std::sqrt(acc[i] + eps);
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace kernels
}  // namespace adaqn
