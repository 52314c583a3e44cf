#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "knockoffs/filters.hpp"
#include "knockoffs/simulation.hpp"

namespace knockoffs {

// Invalid configuration. `line` is 1-based, 0 when the problem is not tied to
// one line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class SweepVariable { overlap, theta, amplitude };

const char* to_string(SweepVariable v);

struct SweepSpec {
  ExperimentConfig base;
  SweepVariable variable = SweepVariable::overlap;
  std::vector<double> values;
  bool explicit_sweep = false;  // a [sweep] section was present

  void validate() const;
  // Base config with the sweep variable set to values[index].
  ExperimentConfig at(std::size_t index) const;
};

// Flat key = value text with [experiment], [cv] and [sweep] sections. Keys
// before the first header belong to [experiment]. '#' and ';' start comments.
SweepSpec parse_config(std::istream& in, const std::string& source = "<config>");
SweepSpec load_config(const std::filesystem::path& path);

struct ResultRow {
  std::string method;
  std::size_t method_index = 0;
  double sweep_value = 0.0;
  std::size_t value_index = 0;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double fdp = 0.0;
  double power = 0.0;
  std::size_t n_discoveries = 0;
  std::string error;
};

struct AggregateRow {
  std::string method;
  double sweep_value = 0.0;
  std::size_t replications = 0;
  std::size_t failed = 0;
  double mean_fdp = 0.0;
  double se_fdp = 0.0;
  double mean_power = 0.0;
  double se_power = 0.0;
  double mean_discoveries = 0.0;
};

struct RunOptions {
  unsigned workers = 0;  // 0: hardware concurrency
  std::optional<std::uint64_t> seed;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

// Seed of replication `replication` at sweep position `value_index`.
std::uint64_t replication_seed(std::uint64_t base, std::size_t value_index, std::size_t replication);

// All replications of every (value, method) pair. Rows are ordered by
// (method position in the config, sweep value position, replication), which
// does not depend on the worker count.
std::vector<ResultRow> run_sweep(const SweepSpec& spec, const RunOptions& options = {});

// Metrics of one replication for every method; failures are recorded per row.
std::vector<ResultRow> run_replication(const ExperimentConfig& cfg, const Simulator& simulator,
                                       std::optional<double> theta, double sweep_value, std::size_t value_index,
                                       std::size_t replication, std::uint64_t seed);

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows);

void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows, SweepVariable variable);

// One finite real per non-blank line. Throws DataError.
std::vector<double> read_statistics(std::istream& in);
// One row per non-blank line, values separated by whitespace or commas.
Eigen::MatrixXd read_prior(std::istream& in);

enum class FilterMode { threshold, adaptive };

// key=value header (threshold, stop_index, rejected as 1-based indices)
// followed by a blank line and the FDR-hat trace as CSV.
void write_discoveries(std::ostream& out, const DiscoverySet& set, FilterMode mode);

// Command-line entry point; returns the process exit code
// (0 success, 2 configuration error, 3 data error).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace knockoffs
