#pragma once

// Counts optimizer-side vector operations per iteration on diagonal
// quadratics of increasing dimension. The objective itself is not counted.

#include <vector>

#include "adaqn/harness/optimizers.hpp"
#include "adaqn/kernels.hpp"
#include "adaqn/problems/quadratic.hpp"

namespace adaqn::harness {

struct AuditRow {
  std::size_t n = 0;
  double ops_per_iteration = 0.0;
  double adagrad_ops_per_iteration = 0.0;
  double avg_memory = 0.0;
};

struct AuditResult {
  std::vector<AuditRow> rows;
  double slope = 0.0;         // least-squares c in ops ≈ c·n
  double max_rel_misfit = 0.0;  // max over rows of |ops - c·n| / (c·n)
};

namespace detail {

inline double counted_run(const OptimizerConfig& oc, const problems::QuadraticProblem& q, std::size_t iterations,
                          double* avg_memory) {
  const std::vector<Index> batch{0};
  auto opt = make_optimizer(oc, ParamVector(q.dimension(), 0.0), batch, 1, 0);
  FlopCounter counter;
  double mem = 0.0;
  for (std::size_t k = 0; k < iterations; ++k) {
    IterationReport rep;
    {
      FlopScope scope(counter);
      rep = opt->step(q, batch);
    }
    mem += static_cast<double>(rep.memory_size);
  }
  if (avg_memory) *avg_memory = mem / static_cast<double>(iterations);
  return static_cast<double>(counter.ops) / static_cast<double>(iterations);
}

}  // namespace detail

/// `optimizer` is used as given for the adaQN column; the Adagrad column uses
/// the same α and its own ε.
inline AuditResult flop_audit(const OptimizerConfig& optimizer, const AuditConfig& audit) {
  if (audit.sizes.empty() || audit.iterations == 0) throw ConfigError("audit: need sizes and iterations");
  AuditResult result;
  OptimizerConfig adagrad = optimizer;
  adagrad.name = "adagrad";
  for (std::size_t n : audit.sizes) {
    problems::QuadraticSpec spec;
    // One fixed block replicated to length n, so the trajectory (and with it
    // the memory occupancy) is the same at every size.
    const std::size_t period = std::min<std::size_t>(n, 100);
    const std::vector<double> block = problems::geometric_spectrum(period, audit.condition);
    for (std::size_t i = 0; i < n; ++i) spec.spectrum.push_back(block[i % period]);
    spec.period = period;
    spec.rotate = false;
    const problems::QuadraticProblem q(spec);
    AuditRow row;
    row.n = n;
    row.ops_per_iteration = detail::counted_run(optimizer, q, audit.iterations, &row.avg_memory);
    row.adagrad_ops_per_iteration = detail::counted_run(adagrad, q, audit.iterations, nullptr);
    result.rows.push_back(row);
  }
  double num = 0.0, den = 0.0;
  for (const AuditRow& r : result.rows) {
    num += r.ops_per_iteration * static_cast<double>(r.n);
    den += static_cast<double>(r.n) * static_cast<double>(r.n);
  }
  result.slope = num / den;
  for (const AuditRow& r : result.rows) {
    const double fit = result.slope * static_cast<double>(r.n);
    result.max_rel_misfit = std::max(result.max_rel_misfit, std::abs(r.ops_per_iteration - fit) / fit);
  }
  return result;
}

inline json to_json(const AuditResult& r) {
  json rows = json::array();
  for (const AuditRow& row : r.rows)
    rows.push_back({{"n", row.n},
                    {"ops_per_iteration", row.ops_per_iteration},
                    {"adagrad_ops_per_iteration", row.adagrad_ops_per_iteration},
                    {"ops_per_iteration_per_n", row.ops_per_iteration / static_cast<double>(row.n)},
                    {"avg_memory", row.avg_memory}});
  return json{{"rows", rows}, {"slope", r.slope}, {"max_relative_misfit", r.max_rel_misfit}};
}

}  // namespace adaqn::harness
