#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "knockoffs/errors.hpp"
#include "knockoffs/harness.hpp"

namespace knockoffs {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct CommonRunArgs {
  std::string config;
  std::string out_dir;
  unsigned workers = 0;
  std::optional<std::uint64_t> seed;
};

RunOptions make_options(const CommonRunArgs& args, std::ostream& err) {
  RunOptions options;
  options.workers = args.workers;
  options.seed = args.seed;
  options.progress = [&err, last = std::size_t{0}](std::size_t done, std::size_t total) mutable {
    const std::size_t decile = done * 10 / total;
    if (decile != last || done == total) {
      err << "progress: " << done << "/" << total << " replications\n";
      last = decile;
    }
  };
  return options;
}

void report_failures(const std::vector<ResultRow>& rows, std::ostream& err) {
  std::size_t failed = 0;
  const ResultRow* first = nullptr;
  for (const ResultRow& row : rows)
    if (!row.ok) {
      ++failed;
      if (!first) first = &row;
    }
  if (failed)
    err << "warning: " << failed << " method-replication rows failed (first: " << first->method << " replication "
        << first->replication << ": " << first->error << ")\n";
}

int write_outputs(const std::filesystem::path& dir, const std::vector<ResultRow>& rows, SweepVariable variable,
                  std::ostream& out, std::ostream& err) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream results(dir / "results.csv");
  std::ofstream summary(dir / "summary.csv");
  if (!results || !summary) {
    err << "error: cannot write to output directory " << dir << '\n';
    return kExitData;
  }
  auto agg = aggregate(rows);
  write_rows_csv(results, rows);
  write_aggregate_csv(summary, agg, variable);
  write_aggregate_csv(out, agg, variable);
  err << "wrote " << (dir / "results.csv").string() << " and " << (dir / "summary.csv").string() << '\n';
  return kExitOk;
}

int command_run(const CommonRunArgs& args, bool require_sweep, std::ostream& out, std::ostream& err) {
  SweepSpec spec;
  try {
    spec = load_config(args.config);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (require_sweep && !spec.explicit_sweep) {
    err << "error: " << args.config << ": sweep requires a [sweep] section\n";
    return kExitConfig;
  }
  std::vector<ResultRow> rows;
  try {
    rows = run_sweep(spec, make_options(args, err));
  } catch (const std::invalid_argument& e) {
    err << "error: " << args.config << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  report_failures(rows, err);
  if (args.out_dir.empty()) {
    write_rows_csv(out, rows);
    return kExitOk;
  }
  return write_outputs(args.out_dir, rows, spec.variable, out, err);
}

struct FilterArgs {
  std::string statistics;
  double q = 0.1;
  int offset = 1;
  std::string mode = "threshold";
  std::string prior;
  std::string out;
};

int command_filter(const FilterArgs& args, std::ostream& out, std::ostream& err) {
  FilterConfig cfg{args.q, args.offset};
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  FilterMode mode = args.mode == "adaptive" ? FilterMode::adaptive : FilterMode::threshold;
  if (mode == FilterMode::adaptive && args.prior.empty()) {
    err << "error: --mode adaptive requires --prior\n";
    return kExitConfig;
  }

  DiscoverySet set;
  try {
    std::ifstream stats_in(args.statistics);
    if (!stats_in) throw DataError("cannot open statistics file " + args.statistics);
    std::vector<double> values = read_statistics(stats_in);
    Eigen::VectorXd w = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    if (mode == FilterMode::threshold) {
      set = threshold_filter(w, cfg);
    } else {
      std::ifstream prior_in(args.prior);
      if (!prior_in) throw DataError("cannot open prior file " + args.prior);
      Eigen::MatrixXd prior = read_prior(prior_in);
      if (prior.rows() != w.size())
        throw DataError("prior has " + std::to_string(prior.rows()) + " rows but there are " +
                        std::to_string(w.size()) + " statistics");
      LogisticOrderingModel model;
      set = adaptive_filter(w, prior, model, cfg);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }

  if (args.out.empty()) {
    write_discoveries(out, set, mode);
  } else {
    std::ofstream file(args.out);
    if (!file) {
      err << "error: cannot write " << args.out << '\n';
      return kExitData;
    }
    write_discoveries(file, set, mode);
  }
  err << set.rejected.size() << " discoveries\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transfer-learning knockoff filters and multi-environment simulations", "transfer-knockoffs"};
  app.require_subcommand(1);

  CommonRunArgs run_args;
  auto* run = app.add_subcommand("run", "Run the replications described by a configuration file");
  run->add_option("config", run_args.config, "Configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_args.out_dir, "Output directory for results.csv and summary.csv")->required();
  run->add_option("--workers", run_args.workers, "Worker threads (default: hardware concurrency)");
  run->add_option("--seed", run_args.seed, "Override the configured base seed");

  CommonRunArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Run a configuration with a [sweep] section");
  sweep->add_option("config", sweep_args.config, "Configuration file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_args.out_dir, "Output directory (default: rows to standard output)");
  sweep->add_option("--workers", sweep_args.workers, "Worker threads (default: hardware concurrency)");
  sweep->add_option("--seed", sweep_args.seed, "Override the configured base seed");

  FilterArgs filter_args;
  auto* filter = app.add_subcommand("filter", "Apply a knockoff filter to precomputed statistics");
  filter->add_option("statistics", filter_args.statistics, "One statistic per line")->required();
  filter->add_option("--q", filter_args.q, "Target FDR level")->required();
  filter->add_option("--offset", filter_args.offset, "Offset in the FDR estimate (0 or 1)")
      ->check(CLI::IsMember({0, 1}));
  filter->add_option("--mode", filter_args.mode, "threshold or adaptive")
      ->check(CLI::IsMember({"threshold", "adaptive"}));
  filter->add_option("--prior", filter_args.prior, "Prior rows (adaptive mode), whitespace or comma separated");
  filter->add_option("--out", filter_args.out, "Write discoveries here instead of standard output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  if (*run) return command_run(run_args, false, out, err);
  if (*sweep) return command_run(sweep_args, true, out, err);
  return command_filter(filter_args, out, err);
}

}  // namespace knockoffs
