#pragma once

// Step-size (and, for adaQN, aggregation-length) sweep. Each cell is an
// independent run in its own subdirectory; a failing cell is recorded and
// ranked last without affecting the others.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "adaqn/harness/runner.hpp"

namespace adaqn::harness {

struct GridCell {
  double alpha = 0.0;
  std::optional<std::size_t> aggregation_length;
  std::string directory;
  int exit_code = 0;
  std::string error;
  std::optional<double> final_test_loss;
  std::optional<double> final_train_loss;
  std::optional<double> final_test_accuracy;
  std::optional<double> final_avg_memory;
  std::vector<MetricsRecord> records;
};

struct GridResult {
  std::vector<GridCell> cells;  // ranked, best first
  std::filesystem::path summary_path;
  const GridCell* best() const {
    return !cells.empty() && cells.front().exit_code == 0 ? &cells.front() : nullptr;
  }
};

namespace detail {

inline std::string cell_name(double alpha, std::optional<std::size_t> L) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "alpha_%.6g", alpha);
  std::string s = buf;
  if (L) s += "_L_" + std::to_string(*L);
  return s;
}

inline bool cell_before(const GridCell& a, const GridCell& b) {
  const bool ok_a = a.exit_code == 0 && a.final_test_loss && std::isfinite(*a.final_test_loss);
  const bool ok_b = b.exit_code == 0 && b.final_test_loss && std::isfinite(*b.final_test_loss);
  if (ok_a != ok_b) return ok_a;
  if (ok_a && *a.final_test_loss != *b.final_test_loss) return *a.final_test_loss < *b.final_test_loss;
  if (a.alpha != b.alpha) return a.alpha < b.alpha;
  return a.aggregation_length.value_or(0) < b.aggregation_length.value_or(0);
}

inline json to_json(const GridCell& c) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j{{"alpha", c.alpha},
         {"directory", c.directory},
         {"exit_code", c.exit_code},
         {"final_test_loss", opt(c.final_test_loss)},
         {"final_train_loss", opt(c.final_train_loss)},
         {"final_test_accuracy", opt(c.final_test_accuracy)},
         {"final_avg_memory", opt(c.final_avg_memory)}};
  if (c.aggregation_length) j["aggregation_length"] = *c.aggregation_length;
  if (!c.error.empty()) j["error"] = c.error;
  return j;
}

}  // namespace detail

inline GridResult run_grid(const ExperimentConfig& base, const std::filesystem::path& out_dir, bool verbose = false) {
  if (!base.grid) throw ConfigError("grid: configuration has no \"grid\" section");
  const GridConfig& g = *base.grid;
  const bool sweep_L = base.optimizer.name == "adaqn" && !g.aggregation_lengths.empty();

  std::vector<GridCell> cells;
  std::vector<ExperimentConfig> configs;
  for (double a : g.alphas) {
    std::vector<std::optional<std::size_t>> lengths;
    if (sweep_L) {
      for (std::size_t L : g.aggregation_lengths) lengths.push_back(L);
    } else {
      lengths.push_back(std::nullopt);
    }
    for (auto L : lengths) {
      ExperimentConfig c = base;
      c.grid.reset();
      c.audit.reset();
      c.optimizer.alpha = a;
      c.optimizer.adaqn.alpha = a;
      if (L) c.optimizer.adaqn.aggregation_length = *L;
      GridCell cell;
      cell.alpha = a;
      cell.aggregation_length = L;
      cell.directory = detail::cell_name(a, L);
      c.name = base.name + "/" + cell.directory;
      cells.push_back(cell);
      configs.push_back(std::move(c));
    }
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      GridCell& cell = cells[i];
      RunOptions opts;
      opts.out_dir = out_dir / cell.directory;
      RunResult r;
      try {
        r = run_experiment(configs[i], opts);
      } catch (const std::exception& e) {
        r.exit_code = 1;
        r.error = e.what();
      }
      cell.exit_code = r.exit_code;
      cell.error = r.error;
      cell.records = r.records;
      if (r.exit_code == 0 && !r.records.empty()) {
        const MetricsRecord& last = r.records.back();
        cell.final_test_loss = last.test_loss;
        cell.final_train_loss = last.train_loss;
        cell.final_test_accuracy = last.test_accuracy;
        double mem = 0.0;
        for (std::size_t k = 1; k < r.records.size(); ++k) mem += r.records[k].avg_memory;
        cell.final_avg_memory = r.records.size() > 1 ? mem / static_cast<double>(r.records.size() - 1) : 0.0;
      }
      if (verbose) {
        std::lock_guard lock(log_mutex);
        std::cerr << cell.directory << ": ";
        if (cell.final_test_loss) {
          std::cerr << "test loss " << *cell.final_test_loss << "\n";
        } else {
          std::cerr << "failed (" << cell.error << ")\n";
        }
      }
    }
  };
  const std::size_t threads =
      std::max<std::size_t>(1, std::min(g.threads ? g.threads : std::size_t(std::thread::hardware_concurrency()),
                                        cells.size()));
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();

  std::stable_sort(cells.begin(), cells.end(), detail::cell_before);

  GridResult result;
  result.summary_path = out_dir / "summary.json";
  json ranked = json::array();
  for (const GridCell& c : cells) ranked.push_back(detail::to_json(c));
  detail::write_text_atomic(result.summary_path,
                            json{{"config", to_json(base)}, {"ranking", "final test loss, ties to smaller alpha"},
                                 {"cells", ranked}}
                                .dump(2));
  std::ofstream csv(out_dir / "summary.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write summary.csv");
  csv << "rank,alpha,aggregation_length,exit_code,final_test_loss,final_train_loss,final_test_accuracy,avg_memory\n";
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const GridCell& c = cells[i];
    csv << i + 1 << "," << num(c.alpha) << ","
        << (c.aggregation_length ? std::to_string(*c.aggregation_length) : std::string()) << "," << c.exit_code << ","
        << num(c.final_test_loss) << "," << num(c.final_train_loss) << "," << num(c.final_test_accuracy) << ","
        << num(c.final_avg_memory) << "\n";
  }
  result.cells = std::move(cells);
  return result;
}

}  // namespace adaqn::harness
