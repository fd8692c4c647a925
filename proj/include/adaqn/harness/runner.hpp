#pragma once

// Epoch loop: draws batches from a seeded schedule, steps the optimizer under
// a flop counter, and appends one metrics record per evaluation point to a
// JSON-lines file whose first line is a header describing units and config.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "adaqn/data/batch_schedule.hpp"
#include "adaqn/harness/config.hpp"
#include "adaqn/harness/optimizers.hpp"
#include "adaqn/harness/problem_factory.hpp"
#include "adaqn/kernels.hpp"

namespace adaqn::harness {

inline constexpr const char* kMetricsFormat = "adaqn-metrics-v1";
inline constexpr const char* kCheckpointFormat = "adaqn-checkpoint-v1";

struct MetricsRecord {
  std::size_t epoch = 0;
  std::uint64_t iteration = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::optional<double> test_accuracy;
  std::optional<double> optimality_gap;
  double avg_memory = 0.0;  // mean post-iteration L-BFGS memory since the previous record
  std::uint64_t accepted = 0;
  std::uint64_t skipped = 0;
  std::uint64_t rejected = 0;
  std::uint64_t flops = 0;  // cumulative counted optimizer-side operations
  double wall_time_s = 0.0;
};

inline json to_json(const MetricsRecord& r) {
  json j{{"type", "record"},         {"epoch", r.epoch},       {"iteration", r.iteration},
         {"train_loss", r.train_loss}, {"test_loss", r.test_loss}};
  if (r.test_accuracy) j["test_accuracy"] = *r.test_accuracy;
  if (r.optimality_gap) j["optimality_gap"] = *r.optimality_gap;
  j.update({{"avg_memory", r.avg_memory},
            {"accepted", r.accepted},
            {"skipped", r.skipped},
            {"rejected", r.rejected},
            {"flops", r.flops},
            {"wall_time_s", r.wall_time_s}});
  return j;
}

inline MetricsRecord record_from_json(const json& j) {
  MetricsRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.iteration = j.at("iteration").get<std::uint64_t>();
  r.train_loss = j.at("train_loss").get<double>();
  r.test_loss = j.at("test_loss").get<double>();
  if (j.contains("test_accuracy")) r.test_accuracy = j.at("test_accuracy").get<double>();
  if (j.contains("optimality_gap")) r.optimality_gap = j.at("optimality_gap").get<double>();
  r.avg_memory = j.at("avg_memory").get<double>();
  r.accepted = j.at("accepted").get<std::uint64_t>();
  r.skipped = j.at("skipped").get<std::uint64_t>();
  r.rejected = j.at("rejected").get<std::uint64_t>();
  r.flops = j.at("flops").get<std::uint64_t>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  return r;
}

inline constexpr const char* kCsvColumns =
    "epoch,iteration,train_loss,test_loss,test_accuracy,optimality_gap,avg_memory,accepted,skipped,rejected,flops,"
    "wall_time_s";

inline std::string csv_row(const MetricsRecord& r) {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  return std::to_string(r.epoch) + "," + std::to_string(r.iteration) + "," + num(r.train_loss) + "," +
         num(r.test_loss) + "," + opt(r.test_accuracy) + "," + opt(r.optimality_gap) + "," + num(r.avg_memory) + "," +
         std::to_string(r.accepted) + "," + std::to_string(r.skipped) + "," + std::to_string(r.rejected) + "," +
         std::to_string(r.flops) + "," + num(r.wall_time_s);
}

struct RunOptions {
  std::filesystem::path out_dir;  // empty: taken from the config
  std::optional<std::filesystem::path> resume;
  bool verbose = false;
};

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 config, 3 numerical, 4 I/O
  std::string error;
  std::vector<MetricsRecord> records;
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
};

/// --out beats ADAQN_OUTPUT_DIR, which beats run.output.
inline std::filesystem::path resolve_output_dir(const ExperimentConfig& c, const std::filesystem::path& cli_out) {
  if (!cli_out.empty()) return cli_out;
  if (const char* env = std::getenv("ADAQN_OUTPUT_DIR"); env && *env) return std::filesystem::path(env) / c.name;
  return c.run.output;
}

/// Drops wall-clock fields so two metrics files can be compared for equality.
inline std::string metrics_without_wall_time(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line, out;
  while (std::getline(in, line)) {
    json j = json::parse(line);
    j.erase("wall_time_s");
    out += j.dump() + "\n";
  }
  return out;
}

namespace detail {

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

// Keys that may differ between the run that wrote a checkpoint and the run resuming it.
inline json resumable_view(json config) {
  config["run"].erase("epochs");
  config["run"].erase("output");
  config["run"].erase("checkpoint_every");
  config["run"].erase("csv");
  config.erase("grid");
  config.erase("audit");
  config.erase("name");
  return config;
}

class Experiment {
 public:
  Experiment(const ExperimentConfig& config, const RunOptions& options)
      : cfg_(config), opts_(options), problem_(make_problem(config.problem)) {
    const std::size_t m = problem_.train->num_examples();
    batch_ = std::min(cfg_.run.batch_size, m);
    schedule_.emplace(m, batch_, cfg_.run.seed);
    monitoring_ = data::sample_without_replacement(m, batch_, cfg_.run.seed);
    out_dir_ = resolve_output_dir(cfg_, opts_.out_dir);
  }

  RunResult run() {
    RunResult result;
    std::error_code ec;
    std::filesystem::create_directories(out_dir_, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir_.string() + ": " + ec.message());
    result.metrics_path = out_dir_ / "metrics.jsonl";
    result.checkpoint_path = out_dir_ / "checkpoint.json";

    if (opts_.resume) {
      load_checkpoint(*opts_.resume);
    } else {
      opt_ = make_optimizer(cfg_.optimizer, problem_.w0, monitoring_, batch_, cfg_.run.seed);
    }
    start_ = std::chrono::steady_clock::now();
    open_metrics(result.metrics_path);
    if (!opts_.resume) append(evaluate(0, 0.0));

    try {
      for (std::size_t e = epoch_ + 1; e <= cfg_.run.epochs; ++e) {
        const std::size_t per_epoch = schedule_->batches_per_epoch();
        for (std::size_t i = 0; i < per_epoch; ++i) {
          const std::vector<Index> batch = schedule_->next_batch();
          IterationReport rep;
          {
            FlopScope scope(flops_);
            rep = opt_->step(*problem_.train, batch);
          }
          ++iteration_;
          ++window_iterations_;
          window_memory_ += static_cast<double>(rep.memory_size);
          if (rep.event == CycleEvent::CycleAccepted) ++accepted_;
          if (rep.event == CycleEvent::CycleSkipped) ++skipped_;
          if (rep.event == CycleEvent::CycleRejected) ++rejected_;
        }
        epoch_ = e;
        if (e % cfg_.run.eval_every == 0 || e == cfg_.run.epochs) {
          const double avg = window_iterations_ ? window_memory_ / static_cast<double>(window_iterations_) : 0.0;
          append(evaluate(e, avg));
        }
        if (cfg_.run.checkpoint_every && e % cfg_.run.checkpoint_every == 0)
          write_checkpoint(out_dir_ / ("checkpoint_epoch_" + std::to_string(e) + ".json"));
      }
    } catch (const NumericalError& err) {
      result.exit_code = 3;
      result.error = err.what();
      result.records = records_;
      if (opts_.verbose) std::cerr << "numerical failure: " << err.what() << "\n";
      return result;
    }
    write_checkpoint(result.checkpoint_path);
    result.records = records_;
    return result;
  }

 private:
  double elapsed() const {
    return wall_offset_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  MetricsRecord evaluate(std::size_t epoch, double avg_memory) {
    MetricsRecord r;
    r.epoch = epoch;
    r.iteration = iteration_;
    const ParamVector& w = opt_->iterate();
    if (cfg_.run.train_eval == "full") {
      r.train_loss = problem_.train->value(w, full_batch(*problem_.train));
    } else {
      r.train_loss = problem_.train->value(w, monitoring_);
    }
    const std::vector<Index> test_all = full_batch(*problem_.test);
    r.test_loss = problem_.test->value(w, test_all);
    if (problem_.classification) r.test_accuracy = problem_.test->accuracy(w, test_all);
    if (problem_.min_value) r.optimality_gap = r.test_loss - *problem_.min_value;
    r.avg_memory = avg_memory;
    r.accepted = accepted_;
    r.skipped = skipped_;
    r.rejected = rejected_;
    r.flops = flops_.ops;
    r.wall_time_s = elapsed();
    accepted_ = skipped_ = rejected_ = 0;
    window_memory_ = 0.0;
    window_iterations_ = 0;
    return r;
  }

  json header() const {
    return json{{"type", "header"},
                {"format", kMetricsFormat},
                {"config", to_json(cfg_)},
                {"units",
                 {{"train_loss", problem_.loss_units},
                  {"test_loss", problem_.loss_units},
                  {"test_accuracy", "fraction correct"},
                  {"optimality_gap", problem_.loss_units},
                  {"avg_memory", "curvature pairs"},
                  {"flops", "counted optimizer-side element operations, cumulative"},
                  {"wall_time_s", "seconds"}}},
                {"train_loss_source", cfg_.run.train_eval == "full" ? "full training set" : "monitoring set"},
                {"dimension", problem_.train->dimension()},
                {"train_examples", problem_.train->num_examples()},
                {"test_examples", problem_.test->num_examples()}};
  }

  void open_metrics(const std::filesystem::path& path) {
    metrics_.open(path, std::ios::binary | std::ios::trunc);
    if (!metrics_) throw IoError("cannot write " + path.string());
    metrics_ << header().dump() << "\n";
    if (cfg_.run.csv) {
      csv_.open(out_dir_ / "metrics.csv", std::ios::binary | std::ios::trunc);
      if (!csv_) throw IoError("cannot write metrics.csv");
      csv_ << kCsvColumns << "\n";
    }
    for (const MetricsRecord& r : records_) emit(r);
  }

  void emit(const MetricsRecord& r) {
    metrics_ << to_json(r).dump() << "\n";
    metrics_.flush();
    if (csv_.is_open()) {
      csv_ << csv_row(r) << "\n";
      csv_.flush();
    }
    if (!metrics_) throw IoError("metrics write failed");
    if (opts_.verbose)
      std::cerr << "epoch " << r.epoch << "  train " << r.train_loss << "  test " << r.test_loss << "  mem "
                << r.avg_memory << "\n";
  }

  void append(const MetricsRecord& r) {
    records_.push_back(r);
    emit(r);
  }

  void write_checkpoint(const std::filesystem::path& path) const {
    json records = json::array();
    for (const MetricsRecord& r : records_) records.push_back(to_json(r));
    const json j{{"format", kCheckpointFormat},
                 {"config", to_json(cfg_)},
                 {"epoch", epoch_},
                 {"iteration", iteration_},
                 {"schedule", {{"epoch", schedule_->epoch()}, {"position", schedule_->position()}}},
                 {"optimizer", opt_->state()},
                 {"flops", flops_.ops},
                 {"wall_time_s", elapsed()},
                 {"records", records}};
    write_text_atomic(path, j.dump());
  }

  void load_checkpoint(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    try {
      if (j.at("format") != kCheckpointFormat) throw ConfigError(path.string() + " is not a checkpoint");
      if (resumable_view(j.at("config")) != resumable_view(to_json(cfg_)))
        throw ConfigError("checkpoint " + path.string() + " was written by a different configuration");
      epoch_ = j.at("epoch").get<std::size_t>();
      iteration_ = j.at("iteration").get<std::uint64_t>();
      schedule_->restore(j.at("schedule").at("epoch").get<std::uint64_t>(),
                         j.at("schedule").at("position").get<std::size_t>());
      flops_.ops = j.at("flops").get<std::uint64_t>();
      wall_offset_ = j.at("wall_time_s").get<double>();
      for (const json& r : j.at("records")) records_.push_back(record_from_json(r));
    } catch (const json::exception& e) {
      throw ConfigError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    opt_ = restore_optimizer(cfg_.optimizer, batch_, j.at("optimizer"));
  }

  ExperimentConfig cfg_;
  RunOptions opts_;
  ProblemInstance problem_;
  std::size_t batch_ = 1;
  std::optional<data::BatchSchedule> schedule_;
  std::vector<Index> monitoring_;
  std::filesystem::path out_dir_;
  std::unique_ptr<Optimizer> opt_;

  std::size_t epoch_ = 0;
  std::uint64_t iteration_ = 0;
  FlopCounter flops_;
  std::uint64_t accepted_ = 0, skipped_ = 0, rejected_ = 0;
  double window_memory_ = 0.0;
  std::size_t window_iterations_ = 0;
  std::vector<MetricsRecord> records_;
  std::chrono::steady_clock::time_point start_;
  double wall_offset_ = 0.0;
  std::ofstream metrics_;
  std::ofstream csv_;
};

}  // namespace detail

/// Runs one experiment. Configuration, numerical and I/O failures are
/// reported through the exit code rather than thrown.
inline RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
  RunResult failed;
  try {
    detail::Experiment exp(config, options);
    return exp.run();
  } catch (const ConfigError& e) {
    failed.exit_code = 2;
    failed.error = e.what();
  } catch (const NumericalError& e) {
    failed.exit_code = 3;
    failed.error = e.what();
  } catch (const IoError& e) {
    failed.exit_code = 4;
    failed.error = e.what();
  }
  if (options.verbose) std::cerr << "error: " << failed.error << "\n";
  return failed;
}

}  // namespace adaqn::harness
