#pragma once

#include "adaqn/objective.hpp"

namespace adaqn::problems {

/// Central differences (f(w + h e_i) - f(w - h e_i)) / 2h for every coordinate.
inline GradVector finite_diff_gradient(const StochasticObjective& f, std::span<const double> w, Batch batch,
                                       double step = 1e-5) {
  if (!(step > 0.0)) throw ConfigError("finite_diff_gradient: step must be positive");
  ParamVector x(w.begin(), w.end());
  GradVector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f.value(x, batch);
    x[i] = orig - step;
    const double down = f.value(x, batch);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

}  // namespace adaqn::problems
