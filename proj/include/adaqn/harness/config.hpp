#pragma once

// Experiment configuration: one JSON document with sections "problem",
// "optimizer", "run" and optionally "grid" and "audit". Every section is
// parsed strictly: a key that does not apply to the chosen problem type or
// optimizer is an error.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaqn/adaqn.hpp"
#include "adaqn/types.hpp"

namespace adaqn::harness {

using nlohmann::json;

struct ProblemConfig {
  std::string type = "quadratic";  // quadratic | logistic | char_lm | pixel_digits
  std::uint64_t seed = 0;

  // quadratic
  std::size_t dimension = 50;
  double condition = 1e4;
  bool rotate = true;
  double noise = 0.0;

  // quadratic, logistic, pixel_digits
  std::size_t examples = 1;
  // logistic, pixel_digits
  std::size_t test_examples = 0;
  // logistic
  std::size_t features = 10;

  // char_lm
  std::string corpus;
  std::string token_mode = "char";
  std::size_t seq_len = 32;
  double split = 0.95;

  // char_lm, pixel_digits
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::string activation = "tanh";
  double init_stddev = 0.01;

  // pixel_digits
  std::size_t image_size = 8;
};

struct OptimizerConfig {
  std::string name = "adaqn";  // adaqn | adagrad | adam | sgd
  double alpha = 0.01;

  // adaqn (alpha and batch size are copied in when the optimizer is built)
  AdaqnConfig adaqn{};

  double eps = 1e-4;  // adagrad: inside the root; adam: under the root
  double beta1 = 0.9;
  double beta2 = 0.999;
  bool bias_correction = false;
  double momentum = 0.0;  // sgd heavy-ball coefficient
};

struct RunConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;        // epochs between metrics records
  std::size_t checkpoint_every = 0;  // epochs between numbered checkpoints; 0 = final only
  std::string output = "adaqn_out";
  bool csv = false;
  std::string train_eval = "monitoring";  // monitoring | full
};

struct GridConfig {
  std::vector<double> alphas;
  std::vector<std::size_t> aggregation_lengths;
  std::size_t threads = 1;
};

struct AuditConfig {
  std::vector<std::size_t> sizes{1000, 10000, 100000};
  std::size_t iterations = 1000;
  double condition = 100.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ProblemConfig problem;
  OptimizerConfig optimizer;
  RunConfig run;
  std::optional<GridConfig> grid;
  std::optional<AuditConfig> audit;
};

namespace detail {

inline bool is_nonnegative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Reads keys from one JSON object and remembers which were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
  }

  /// Consumes a key the caller reads itself.
  const json* take(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!is_nonnegative_integer(v)) throw ConfigError("");
        out = v.get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
        out = v.get<T>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
        out = v.get<std::string>();
      }
    } catch (const std::exception&) {
      throw ConfigError("key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.contains(key)) throw ConfigError("unknown key '" + name_ + "." + key + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string, std::less<>> used_;
};

template <class T>
std::vector<T> get_list(const json& j, const char* key, const std::string& section) {
  if (!j.is_array() || j.empty()) throw ConfigError("key '" + section + "." + key + "' must be a nonempty array");
  std::vector<T> out;
  for (const json& v : j) {
    if constexpr (std::is_integral_v<T>) {
      if (!is_nonnegative_integer(v)) throw ConfigError("key '" + section + "." + key + "' must hold nonnegative integers");
    } else {
      if (!v.is_number()) throw ConfigError("key '" + section + "." + key + "' must hold numbers");
    }
    out.push_back(v.get<T>());
  }
  return out;
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace detail

inline ProblemConfig parse_problem(const json& j) {
  ProblemConfig p;
  detail::Section s(j, "problem");
  s.get("type", p.type);
  s.get("seed", p.seed);
  if (p.type == "quadratic") {
    s.get("dimension", p.dimension);
    s.get("condition", p.condition);
    s.get("rotate", p.rotate);
    s.get("examples", p.examples);
    s.get("noise", p.noise);
    detail::require(p.dimension > 0, "problem.dimension must be positive");
    detail::require(p.condition >= 1.0, "problem.condition must be >= 1");
    detail::require(p.examples > 0, "problem.examples must be positive");
    detail::require(p.noise >= 0.0, "problem.noise must be nonnegative");
  } else if (p.type == "logistic") {
    p.examples = 1000;
    s.get("examples", p.examples);
    s.get("test_examples", p.test_examples);
    s.get("features", p.features);
    detail::require(p.examples > 0 && p.features > 0, "problem.examples and problem.features must be positive");
  } else if (p.type == "char_lm" || p.type == "pixel_digits") {
    s.get("hidden", p.hidden);
    s.get("layers", p.layers);
    s.get("activation", p.activation);
    s.get("init_stddev", p.init_stddev);
    detail::require(p.hidden > 0 && p.layers > 0, "problem.hidden and problem.layers must be positive");
    detail::require(p.activation == "tanh" || p.activation == "relu", "problem.activation must be tanh or relu");
    detail::require(p.init_stddev >= 0.0, "problem.init_stddev must be nonnegative");
    if (p.type == "char_lm") {
      s.get("corpus", p.corpus);
      s.get("token_mode", p.token_mode);
      s.get("seq_len", p.seq_len);
      s.get("split", p.split);
      detail::require(!p.corpus.empty(), "problem.corpus is required for char_lm");
      detail::require(p.token_mode == "char" || p.token_mode == "word", "problem.token_mode must be char or word");
      detail::require(p.seq_len > 0, "problem.seq_len must be positive");
      detail::require(p.split > 0.0 && p.split <= 1.0, "problem.split must lie in (0, 1]");
    } else {
      p.examples = 500;
      p.test_examples = 100;
      s.get("examples", p.examples);
      s.get("test_examples", p.test_examples);
      s.get("image_size", p.image_size);
      detail::require(p.examples > 0, "problem.examples must be positive");
      detail::require(p.image_size >= 8, "problem.image_size must be at least 8");
    }
  } else {
    throw ConfigError("problem.type must be one of quadratic, logistic, char_lm, pixel_digits");
  }
  s.finish();
  return p;
}

inline OptimizerConfig parse_optimizer(const json& j) {
  OptimizerConfig o;
  detail::Section s(j, "optimizer");
  s.get("name", o.name);
  s.get("alpha", o.alpha);
  detail::require(o.alpha > 0.0 && std::isfinite(o.alpha), "optimizer.alpha must be positive");
  if (o.name == "adaqn") {
    AdaqnConfig& a = o.adaqn;
    s.get("aggregation_length", a.aggregation_length);
    s.get("memory_size", a.memory_size);
    s.get("fifo_size", a.fifo_size);
    s.get("eps_skip", a.eps_skip);
    s.get("eps_scale", a.eps_scale);
    s.get("gamma", a.acceptance.gamma);
    std::string rule = "absolute";
    s.get("acceptance", rule);
    if (rule == "absolute") {
      a.acceptance.kind = AcceptanceKind::AbsoluteFactor;
    } else if (rule == "relative") {
      a.acceptance.kind = AcceptanceKind::RelativeImprovement;
    } else {
      throw ConfigError("optimizer.acceptance must be absolute or relative");
    }
    s.get("relative_threshold", a.acceptance.relative_threshold);
    std::string curvature = "afim";
    s.get("curvature", curvature);
    if (curvature == "afim") {
      a.curvature_source = CurvatureSource::AccumulatedFisher;
    } else if (curvature == "efim") {
      a.curvature_source = CurvatureSource::EmpiricalFisher;
    } else {
      throw ConfigError("optimizer.curvature must be afim or efim");
    }
    s.get("curvature_admission", a.curvature_admission);
    s.get("rotate_monitoring", a.rotate_monitoring);
    a.alpha = o.alpha;
    a.validate();
  } else if (o.name == "adagrad") {
    s.get("eps", o.eps);
    detail::require(o.eps >= 0.0, "optimizer.eps must be nonnegative");
  } else if (o.name == "adam") {
    o.eps = 1e-8;
    s.get("eps", o.eps);
    s.get("beta1", o.beta1);
    s.get("beta2", o.beta2);
    s.get("bias_correction", o.bias_correction);
    detail::require(o.eps >= 0.0, "optimizer.eps must be nonnegative");
    detail::require(o.beta1 >= 0.0 && o.beta1 < 1.0 && o.beta2 >= 0.0 && o.beta2 < 1.0,
                    "optimizer.beta1 and optimizer.beta2 must lie in [0, 1)");
  } else if (o.name == "sgd") {
    s.get("momentum", o.momentum);
    detail::require(o.momentum >= 0.0, "optimizer.momentum must be nonnegative");
  } else {
    throw ConfigError("optimizer.name must be one of adaqn, adagrad, adam, sgd");
  }
  s.finish();
  return o;
}

inline RunConfig parse_run(const json& j) {
  RunConfig r;
  detail::Section s(j, "run");
  s.get("epochs", r.epochs);
  s.get("batch_size", r.batch_size);
  s.get("seed", r.seed);
  s.get("eval_every", r.eval_every);
  s.get("checkpoint_every", r.checkpoint_every);
  s.get("output", r.output);
  s.get("csv", r.csv);
  s.get("train_eval", r.train_eval);
  s.finish();
  detail::require(r.batch_size > 0, "run.batch_size must be positive");
  detail::require(r.eval_every > 0, "run.eval_every must be positive");
  detail::require(r.train_eval == "monitoring" || r.train_eval == "full", "run.train_eval must be monitoring or full");
  return r;
}

inline GridConfig parse_grid(const json& j) {
  GridConfig g;
  detail::Section s(j, "grid");
  s.get("threads", g.threads);
  if (const json* v = s.take("alphas")) g.alphas = detail::get_list<double>(*v, "alphas", "grid");
  if (const json* v = s.take("aggregation_lengths"))
    g.aggregation_lengths = detail::get_list<std::size_t>(*v, "aggregation_lengths", "grid");
  s.finish();
  detail::require(!g.alphas.empty(), "grid.alphas is required");
  for (double a : g.alphas) detail::require(a > 0.0, "grid.alphas must be positive");
  for (std::size_t L : g.aggregation_lengths) detail::require(L > 0, "grid.aggregation_lengths must be positive");
  detail::require(g.threads > 0, "grid.threads must be positive");
  return g;
}

inline AuditConfig parse_audit(const json& j) {
  AuditConfig a;
  detail::Section s(j, "audit");
  if (const json* v = s.take("sizes")) a.sizes = detail::get_list<std::size_t>(*v, "sizes", "audit");
  s.get("iterations", a.iterations);
  s.get("condition", a.condition);
  s.finish();
  for (std::size_t n : a.sizes) detail::require(n > 0, "audit.sizes must be positive");
  detail::require(a.iterations > 0, "audit.iterations must be positive");
  detail::require(a.condition >= 1.0, "audit.condition must be >= 1");
  return a;
}

inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key != "name" && key != "problem" && key != "optimizer" && key != "run" && key != "grid" && key != "audit")
      throw ConfigError("unknown top-level key '" + key + "'");
  }
  if (j.contains("name")) {
    if (!j.at("name").is_string()) throw ConfigError("key 'name' must be a string");
    c.name = j.at("name").get<std::string>();
  }
  c.problem = parse_problem(j.value("problem", json::object()));
  c.optimizer = parse_optimizer(j.value("optimizer", json::object()));
  c.run = parse_run(j.value("run", json::object()));
  if (j.contains("grid")) c.grid = parse_grid(j.at("grid"));
  if (j.contains("audit")) c.audit = parse_audit(j.at("audit"));
  c.optimizer.adaqn.batch_size = c.run.batch_size;
  return c;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Loads a config file; a relative corpus path is taken relative to the file.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  ExperimentConfig c = parse_config(read_json_file(path));
  if (!c.problem.corpus.empty()) {
    std::filesystem::path corpus(c.problem.corpus);
    if (corpus.is_relative()) c.problem.corpus = (path.parent_path() / corpus).lexically_normal().string();
  }
  return c;
}

/// Canonical form: only the keys that apply, so parse_config(to_json(c)) == c.
inline json to_json(const ProblemConfig& p) {
  json j{{"type", p.type}, {"seed", p.seed}};
  if (p.type == "quadratic") {
    j.update({{"dimension", p.dimension}, {"condition", p.condition}, {"rotate", p.rotate},
              {"examples", p.examples}, {"noise", p.noise}});
  } else if (p.type == "logistic") {
    j.update({{"examples", p.examples}, {"test_examples", p.test_examples}, {"features", p.features}});
  } else {
    j.update({{"hidden", p.hidden}, {"layers", p.layers}, {"activation", p.activation}, {"init_stddev", p.init_stddev}});
    if (p.type == "char_lm") {
      j.update({{"corpus", p.corpus}, {"token_mode", p.token_mode}, {"seq_len", p.seq_len}, {"split", p.split}});
    } else {
      j.update({{"examples", p.examples}, {"test_examples", p.test_examples}, {"image_size", p.image_size}});
    }
  }
  return j;
}

inline json to_json(const OptimizerConfig& o) {
  json j{{"name", o.name}, {"alpha", o.alpha}};
  if (o.name == "adaqn") {
    const AdaqnConfig& a = o.adaqn;
    j.update({{"aggregation_length", a.aggregation_length},
              {"memory_size", a.memory_size},
              {"fifo_size", a.fifo_size},
              {"eps_skip", a.eps_skip},
              {"eps_scale", a.eps_scale},
              {"gamma", a.acceptance.gamma},
              {"acceptance", a.acceptance.kind == AcceptanceKind::AbsoluteFactor ? "absolute" : "relative"},
              {"relative_threshold", a.acceptance.relative_threshold},
              {"curvature", a.curvature_source == CurvatureSource::AccumulatedFisher ? "afim" : "efim"},
              {"curvature_admission", a.curvature_admission},
              {"rotate_monitoring", a.rotate_monitoring}});
  } else if (o.name == "adagrad") {
    j["eps"] = o.eps;
  } else if (o.name == "adam") {
    j.update({{"eps", o.eps}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"bias_correction", o.bias_correction}});
  } else {
    j["momentum"] = o.momentum;
  }
  return j;
}

inline json to_json(const RunConfig& r) {
  return json{{"epochs", r.epochs},         {"batch_size", r.batch_size},
              {"seed", r.seed},             {"eval_every", r.eval_every},
              {"checkpoint_every", r.checkpoint_every}, {"output", r.output},
              {"csv", r.csv},               {"train_eval", r.train_eval}};
}

inline json to_json(const ExperimentConfig& c) {
  json j{{"name", c.name}, {"problem", to_json(c.problem)}, {"optimizer", to_json(c.optimizer)}, {"run", to_json(c.run)}};
  if (c.grid) {
    json g{{"alphas", c.grid->alphas}, {"threads", c.grid->threads}};
    if (!c.grid->aggregation_lengths.empty()) g["aggregation_lengths"] = c.grid->aggregation_lengths;
    j["grid"] = g;
  }
  if (c.audit)
    j["audit"] = json{{"sizes", c.audit->sizes}, {"iterations", c.audit->iterations}, {"condition", c.audit->condition}};
  return j;
}

}  // namespace adaqn::harness
