#pragma once

// Uniform stepping interface over adaQN and the baselines, with JSON state
// for checkpoints. Doubles are written by nlohmann::json in shortest
// round-trip form, so a restored state is bit-identical.

#include <memory>
#include <string>

#include "adaqn/adaqn.hpp"
#include "adaqn/baselines.hpp"
#include "adaqn/harness/config.hpp"

namespace adaqn::harness {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual IterationReport step(const StochasticObjective& f, Batch batch) = 0;
  virtual const ParamVector& iterate() const = 0;
  virtual json state() const = 0;
};

namespace detail {

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Shared gradient evaluation and reporting for the first-order methods.
class FirstOrder : public Optimizer {
 public:
  explicit FirstOrder(ParamVector w) : w_(std::move(w)) {}

  IterationReport step(const StochasticObjective& f, Batch batch) final {
    if (batch.empty()) throw ConfigError("optimizer: empty batch");
    IterationReport rep;
    GradVector g(w_.size());
    rep.loss = f.value_and_gradient(w_, batch, g);
    if (!std::isfinite(rep.loss) || !all_finite(g))
      throw NumericalError("iteration " + std::to_string(iteration_) + ", stochastic gradient: non-finite loss or gradient");
    rep.grad_norm = norm2(g);
    try {
      update(g);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(iteration_) + ", update: " + e.what());
    }
    rep.iteration = ++iteration_;
    return rep;
  }

  const ParamVector& iterate() const final { return w_; }

 protected:
  virtual void update(std::span<const double> g) = 0;
  json base_state() const { return json{{"w", w_}, {"iteration", iteration_}}; }
  void load_base(const json& j) {
    w_ = j.at("w").get<ParamVector>();
    iteration_ = j.at("iteration").get<std::uint64_t>();
  }

  ParamVector w_;
  std::uint64_t iteration_ = 0;
};

class Sgd final : public FirstOrder {
 public:
  Sgd(ParamVector w, double alpha, double momentum) : FirstOrder(std::move(w)), alpha_(alpha) {
    if (momentum > 0.0) momentum_ = MomentumState{w_, momentum};
  }
  json state() const override {
    json j = base_state();
    if (momentum_) j["previous_iterate"] = momentum_->previous_iterate;
    return j;
  }
  void load(const json& j) {
    load_base(j);
    if (momentum_) momentum_->previous_iterate = j.at("previous_iterate").get<ParamVector>();
  }

 private:
  void update(std::span<const double> g) override { sgd_step(w_, g, alpha_, momentum_ ? &*momentum_ : nullptr); }
  double alpha_;
  std::optional<MomentumState> momentum_;
};

class Adagrad final : public FirstOrder {
 public:
  Adagrad(ParamVector w, double alpha, double eps)
      : FirstOrder(std::move(w)), alpha_(alpha), state_{SquaredGradAccumulator(w_.size()), eps} {}
  json state() const override {
    json j = base_state();
    j["sums"] = std::vector<double>(state_.sums.sums().begin(), state_.sums.sums().end());
    return j;
  }
  void load(const json& j) {
    load_base(j);
    state_.sums = SquaredGradAccumulator(j.at("sums").get<std::vector<double>>());
  }

 private:
  void update(std::span<const double> g) override { adagrad_step(state_, w_, g, alpha_); }
  double alpha_;
  AdagradState state_;
};

class Adam final : public FirstOrder {
 public:
  Adam(ParamVector w, const OptimizerConfig& c)
      : FirstOrder(std::move(w)), alpha_(c.alpha), state_(w_.size(), c.beta1, c.beta2, c.eps, c.bias_correction) {}
  json state() const override {
    json j = base_state();
    j.update({{"first_moment", state_.first_moment}, {"second_moment", state_.second_moment}, {"step", state_.step}});
    return j;
  }
  void load(const json& j) {
    load_base(j);
    state_.first_moment = j.at("first_moment").get<std::vector<double>>();
    state_.second_moment = j.at("second_moment").get<std::vector<double>>();
    state_.step = j.at("step").get<std::uint64_t>();
  }

 private:
  void update(std::span<const double> g) override { adam_step(state_, w_, g, alpha_); }
  double alpha_;
  AdamState state_;
};

class Adaqn final : public Optimizer {
 public:
  explicit Adaqn(AdaqnOptimizer opt) : opt_(std::move(opt)) {}
  IterationReport step(const StochasticObjective& f, Batch batch) override { return opt_.step(f, batch); }
  const ParamVector& iterate() const override { return opt_.iterate(); }

  json state() const override {
    const AdaqnSnapshot s = opt_.snapshot();
    json pairs = json::array();
    for (const CurvaturePair& p : s.pairs) pairs.push_back(json{{"s", p.s}, {"y", p.y}, {"rho", p.rho}});
    json fifo = json::array();
    for (const FifoEntry& e : s.fifo) fifo.push_back(json{{"g", e.gradient}, {"batch_size", e.batch_size}});
    return json{{"w", s.w},
                {"pairs", pairs},
                {"fifo", fifo},
                {"grad_square_sums", s.grad_square_sums},
                {"w_sum", s.w_sum},
                {"w_bar_old", s.w_bar_old},
                {"f_old", s.f_old ? json(*s.f_old) : json(nullptr)},
                {"iteration", s.iteration},
                {"cycle", s.cycle},
                {"monitoring", s.monitoring},
                {"rng", s.rng_state}};
  }

  static AdaqnSnapshot snapshot_from(const AdaqnConfig& config, const json& j) {
    AdaqnSnapshot s;
    s.config = config;
    s.w = j.at("w").get<ParamVector>();
    for (const json& p : j.at("pairs"))
      s.pairs.push_back(CurvaturePair{p.at("s").get<ParamVector>(), p.at("y").get<GradVector>(), p.at("rho").get<double>()});
    for (const json& e : j.at("fifo"))
      s.fifo.push_back(FifoEntry{e.at("g").get<GradVector>(), e.at("batch_size").get<std::size_t>()});
    s.grad_square_sums = j.at("grad_square_sums").get<std::vector<double>>();
    s.w_sum = j.at("w_sum").get<ParamVector>();
    s.w_bar_old = j.at("w_bar_old").get<ParamVector>();
    if (!j.at("f_old").is_null()) s.f_old = j.at("f_old").get<double>();
    s.iteration = j.at("iteration").get<std::uint64_t>();
    s.cycle = j.at("cycle").get<std::uint64_t>();
    s.monitoring = j.at("monitoring").get<std::vector<Index>>();
    s.rng_state = j.at("rng").get<std::string>();
    return s;
  }

 private:
  AdaqnOptimizer opt_;
};

}  // namespace detail

inline AdaqnConfig effective_adaqn_config(const OptimizerConfig& c, std::size_t batch_size) {
  AdaqnConfig a = c.adaqn;
  a.alpha = c.alpha;
  a.batch_size = batch_size;
  return a;
}

inline std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& c, ParamVector w0,
                                                 std::vector<Index> monitoring, std::size_t batch_size,
                                                 std::uint64_t seed) {
  if (c.name == "adaqn")
    return std::make_unique<detail::Adaqn>(
        AdaqnOptimizer(effective_adaqn_config(c, batch_size), std::move(w0), std::move(monitoring), seed));
  if (c.name == "adagrad") return std::make_unique<detail::Adagrad>(std::move(w0), c.alpha, c.eps);
  if (c.name == "adam") return std::make_unique<detail::Adam>(std::move(w0), c);
  if (c.name == "sgd") return std::make_unique<detail::Sgd>(std::move(w0), c.alpha, c.momentum);
  throw ConfigError("unknown optimizer '" + c.name + "'");
}

inline std::unique_ptr<Optimizer> restore_optimizer(const OptimizerConfig& c, std::size_t batch_size,
                                                    const json& state) {
  try {
    if (c.name == "adaqn")
      return std::make_unique<detail::Adaqn>(
          AdaqnOptimizer(detail::Adaqn::snapshot_from(effective_adaqn_config(c, batch_size), state)));
    const ParamVector w = state.at("w").get<ParamVector>();
    if (c.name == "adagrad") {
      auto o = std::make_unique<detail::Adagrad>(w, c.alpha, c.eps);
      o->load(state);
      return o;
    }
    if (c.name == "adam") {
      auto o = std::make_unique<detail::Adam>(w, c);
      o->load(state);
      return o;
    }
    if (c.name == "sgd") {
      auto o = std::make_unique<detail::Sgd>(w, c.alpha, c.momentum);
      o->load(state);
      return o;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint optimizer state is malformed: ") + e.what());
  }
  throw ConfigError("unknown optimizer '" + c.name + "'");
}

}  // namespace adaqn::harness
