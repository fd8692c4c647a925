#pragma once

// First-order reference optimizers: SGD with optional heavy-ball momentum,
// Adagrad and Adam. All share the counted kernels so their per-step cost is
// comparable with adaQN's.

#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "adaqn/adaqn.hpp"
#include "adaqn/kernels.hpp"
#include "adaqn/types.hpp"

namespace adaqn {

namespace detail {
inline void check_step(std::span<const double> w, const char* who) {
  if (!all_finite(w)) throw NumericalError(std::string(who) + ": iterate became non-finite");
}
}  // namespace detail

/// Heavy-ball state: the previous iterate and the momentum coefficient v >= 0.
struct MomentumState {
  ParamVector previous_iterate;
  double v = 0.0;
};

/// w' = w - alpha * (g + v * (w - w_prev)). Without momentum, w' = w - alpha * g.
inline void sgd_step(std::span<double> w, std::span<const double> g, double alpha,
                     MomentumState* momentum = nullptr) {
  require_same_size(w.size(), g.size(), "sgd_step");
  if (!(alpha > 0.0)) throw ConfigError("sgd_step: alpha must be positive");
  if (momentum == nullptr) {
    kernels::axpy(-alpha, g, w);
  } else {
    require_same_size(w.size(), momentum->previous_iterate.size(), "sgd_step(momentum)");
    ParamVector direction(g.begin(), g.end());
    ParamVector delta(w.size());
    kernels::sub(w, momentum->previous_iterate, delta);
    kernels::axpy(momentum->v, delta, direction);
    momentum->previous_iterate.assign(w.begin(), w.end());
    kernels::axpy(-alpha, direction, w);
  }
  detail::check_step(w, "sgd_step");
}

struct AdagradState {
  SquaredGradAccumulator sums;
  double eps = 1e-4;
};

/// sums += g²; w_i -= alpha * g_i / sqrt(sums_i + eps). Evaluated with the same
/// kernels and operation order as an adaQN step on an empty memory.
inline void adagrad_step(AdagradState& state, std::span<double> w, std::span<const double> g, double alpha) {
  require_same_size(w.size(), g.size(), "adagrad_step");
  if (!(alpha > 0.0)) throw ConfigError("adagrad_step: alpha must be positive");
  state.sums.add(g);
  const DiagonalScaling d = adagrad_scaling(state.sums, state.eps);
  ParamVector p(w.size());
  kernels::neg_hadamard(d.values(), g, p);
  kernels::axpy(alpha, p, w);
  detail::check_step(w, "adagrad_step");
}

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  bool bias_correction = false;

  AdamState() = default;
  AdamState(std::size_t n, double b1, double b2, double e, bool correct = false)
      : first_moment(n, 0.0), second_moment(n, 0.0), beta1(b1), beta2(b2), eps(e), bias_correction(correct) {}
};

/// Exponentially weighted moments with no bias correction unless requested:
///   m <- b1 m + (1-b1) g,  r <- b2 r + (1-b2) g²,  w_i -= alpha m_i / sqrt(r_i + eps)
inline void adam_step(AdamState& s, std::span<double> w, std::span<const double> g, double alpha) {
  require_same_size(w.size(), g.size(), "adam_step");
  require_same_size(w.size(), s.first_moment.size(), "adam_step(state)");
  if (!(alpha > 0.0)) throw ConfigError("adam_step: alpha must be positive");
  if (!(s.beta1 >= 0.0 && s.beta1 < 1.0 && s.beta2 >= 0.0 && s.beta2 < 1.0))
    throw ConfigError("adam_step: betas must lie in [0, 1)");
  ++s.step;
  const std::size_t n = w.size();
  kernels::charge(3 * n);
  const double c1 = s.bias_correction ? 1.0 - std::pow(s.beta1, static_cast<double>(s.step)) : 1.0;
  const double c2 = s.bias_correction ? 1.0 - std::pow(s.beta2, static_cast<double>(s.step)) : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.first_moment[i] = s.beta1 * s.first_moment[i] + (1.0 - s.beta1) * g[i];
    s.second_moment[i] = s.beta2 * s.second_moment[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double m = s.first_moment[i] / c1;
    const double r = s.second_moment[i] / c2;
    w[i] -= alpha * m / std::sqrt(r + s.eps);
  }
  detail::check_step(w, "adam_step");
}

}  // namespace adaqn
