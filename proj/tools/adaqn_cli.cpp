#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "adaqn/harness/audit.hpp"
#include "adaqn/harness/grid.hpp"
#include "adaqn/harness/runner.hpp"

using namespace adaqn;
using namespace adaqn::harness;

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericalExit = 3;
constexpr int kIoExit = 4;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.run.seed = *c.seed;
  return cfg;
}

int cmd_run(const Common& c, const std::string& resume) {
  const ExperimentConfig cfg = load(c);
  RunOptions opts;
  opts.out_dir = resolve_output_dir(cfg, c.out);
  if (!resume.empty()) opts.resume = resume;
  opts.verbose = !c.quiet;
  const RunResult r = run_experiment(cfg, opts);
  if (r.exit_code != 0) {
    std::cerr << "adaqn: " << r.error << "\n";
    return r.exit_code;
  }
  if (!c.quiet) std::cerr << "metrics: " << r.metrics_path.string() << "\n";
  return 0;
}

int cmd_grid(const Common& c, std::size_t threads) {
  ExperimentConfig cfg = load(c);
  if (!cfg.grid) throw ConfigError("config has no \"grid\" section");
  if (threads) cfg.grid->threads = threads;
  const GridResult g = run_grid(cfg, resolve_output_dir(cfg, c.out), !c.quiet);
  std::cout << "rank  alpha         L    exit  final_test_loss\n";
  for (std::size_t i = 0; i < g.cells.size(); ++i) {
    const GridCell& cell = g.cells[i];
    char line[160];
    std::snprintf(line, sizeof line, "%-5zu %-13.6g %-4s %-5d %s\n", i + 1, cell.alpha,
                  cell.aggregation_length ? std::to_string(*cell.aggregation_length).c_str() : "-", cell.exit_code,
                  cell.final_test_loss ? std::to_string(*cell.final_test_loss).c_str() : cell.error.c_str());
    std::cout << line;
  }
  std::cout << "summary: " << g.summary_path.string() << "\n";
  return g.best() ? 0 : kNumericalExit;
}

int cmd_audit(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const AuditResult a = flop_audit(cfg.optimizer, cfg.audit.value_or(AuditConfig{}));
  const json j = to_json(a);
  std::cout << j.dump(2) << "\n";
  if (!c.out.empty()) {
    std::filesystem::create_directories(c.out);
    std::ofstream out(std::filesystem::path(c.out) / "audit.json");
    if (!out) throw IoError("cannot write audit.json");
    out << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_inspect(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string first;
  std::getline(in, first);
  json head;
  try {
    head = json::parse(first);
  } catch (const json::exception&) {
    in.clear();
    in.seekg(0);
    head = read_json_file(path);
  }
  if (head.value("format", "") == kCheckpointFormat) {
    const json& cfg = head.at("config");
    std::cout << "checkpoint  epoch " << head.at("epoch") << "  iteration " << head.at("iteration") << "\n"
              << "optimizer   " << cfg.at("optimizer").at("name").get<std::string>() << "  alpha "
              << cfg.at("optimizer").at("alpha") << "\n"
              << "problem     " << cfg.at("problem").at("type").get<std::string>() << "\n"
              << "flops       " << head.at("flops") << "\n";
    if (!head.at("records").empty()) std::cout << "last record " << head.at("records").back().dump() << "\n";
    return 0;
  }
  if (head.value("format", "") != kMetricsFormat) throw ConfigError(path + ": not a metrics or checkpoint file");
  std::cout << "problem   " << head.at("config").at("problem").at("type").get<std::string>() << "  optimizer "
            << head.at("config").at("optimizer").at("name").get<std::string>() << "\n";
  std::cout << "epoch  train_loss        test_loss         avg_memory  acc/skip/rej\n";
  std::string line;
  while (std::getline(in, line)) {
    const MetricsRecord r = record_from_json(json::parse(line));
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-6zu %-17.10g %-17.10g %-11.3f %llu/%llu/%llu\n", r.epoch, r.train_loss,
                  r.test_loss, r.avg_memory, static_cast<unsigned long long>(r.accepted),
                  static_cast<unsigned long long>(r.skipped), static_cast<unsigned long long>(r.rejected));
    std::cout << buf;
  }
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("config", c.config, "experiment configuration (JSON)")->required();
  sub->add_option("--out", c.out, "output directory (overrides ADAQN_OUTPUT_DIR and run.output)");
  sub->add_option("--seed", c.seed, "override run.seed");
  sub->add_flag("-q,--quiet", c.quiet, "suppress progress on stderr");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaQN experiments: run, grid search, flop audit"};
  app.require_subcommand(1);

  Common run_opts, grid_opts, audit_opts;
  std::string resume, inspect_path;
  std::size_t threads = 0;

  auto* run = app.add_subcommand("run", "train one configuration");
  add_common(run, run_opts);
  run->add_option("--resume", resume, "checkpoint to continue from");

  auto* grid = app.add_subcommand("grid", "sweep alpha (and L for adaqn) and rank by final test loss");
  add_common(grid, grid_opts);
  grid->add_option("--threads", threads, "parallel cells");

  auto* audit = app.add_subcommand("audit", "count optimizer operations per iteration across dimensions");
  add_common(audit, audit_opts);

  auto* inspect = app.add_subcommand("inspect", "summarize a metrics or checkpoint file");
  inspect->add_option("file", inspect_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  try {
    if (*run) return cmd_run(run_opts, resume);
    if (*grid) return cmd_grid(grid_opts, threads);
    if (*audit) return cmd_audit(audit_opts);
    if (*inspect) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::cerr << "adaqn: configuration error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const NumericalError& e) {
    std::cerr << "adaqn: numerical failure: " << e.what() << "\n";
    return kNumericalExit;
  } catch (const IoError& e) {
    std::cerr << "adaqn: I/O error: " << e.what() << "\n";
    return kIoExit;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "adaqn: I/O error: " << e.what() << "\n";
    return kIoExit;
  } catch (const json::exception& e) {
    std::cerr << "adaqn: malformed JSON: " << e.what() << "\n";
    return kConfigExit;
  }
  return 0;
}
