#pragma once

#include <optional>
#include <span>

#include "adaqn/types.hpp"

namespace adaqn {

/// Finite-sum objective f(w) = (1/m) Σ f_i(w), evaluated as a mean over index batches.
/// Implementations are immutable after construction and deterministic in (w, batch).
class StochasticObjective {
 public:
  virtual ~StochasticObjective() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::size_t num_examples() const = 0;

  virtual double value(std::span<const double> w, Batch batch) const = 0;

  /// Mean loss over the batch; writes the mean gradient into `grad`.
  virtual double value_and_gradient(std::span<const double> w, Batch batch, std::span<double> grad) const = 0;

  /// Fraction of correctly classified examples, for objectives that are classifiers.
  virtual std::optional<double> accuracy(std::span<const double>, Batch) const { return std::nullopt; }

  GradVector gradient(std::span<const double> w, Batch batch) const {
    GradVector g(dimension());
    value_and_gradient(w, batch, g);
    return g;
  }

  GradVector per_example_gradient(std::span<const double> w, Index i) const {
    const Index one[1] = {i};
    return gradient(w, Batch(one));
  }
};

inline std::vector<Index> full_batch(const StochasticObjective& f) {
  std::vector<Index> idx(f.num_examples());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace adaqn
