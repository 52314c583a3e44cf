#include "knockoffs/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "knockoffs/errors.hpp"

namespace knockoffs {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t at = s.find(sep, start);
    parts.push_back(trim(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start)));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return parts;
}

std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string format_value(double v, int precision) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

class ConfigReader {
 public:
  ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(std::size_t line, const std::string& message) const {
    throw ConfigError(source_, line, message);
  }

  double real(const std::string& v, std::size_t line, const std::string& key) const {
    auto d = to_double(v);
    if (!d || !std::isfinite(*d)) fail(line, "key '" + key + "' expects a real number, got '" + v + "'");
    return *d;
  }

  long long integer(const std::string& v, std::size_t line, const std::string& key, long long min) const {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
      fail(line, "key '" + key + "' expects an integer, got '" + v + "'");
    if (out < min) fail(line, "key '" + key + "' must be at least " + std::to_string(min));
    return out;
  }

  bool boolean(const std::string& v, std::size_t line, const std::string& key) const {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(line, "key '" + key + "' expects true or false, got '" + v + "'");
  }

  std::vector<double> reals(const std::string& v, std::size_t line, const std::string& key) const {
    std::vector<double> out;
    for (const std::string& part : split(v, ',')) out.push_back(real(part, line, key));
    return out;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

}  // namespace

ConfigError::ConfigError(const std::string& source, std::size_t line, const std::string& message)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + message : source + ": " + message),
      line_(line) {}

const char* to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::overlap: return "overlap";
    case SweepVariable::theta: return "theta";
    case SweepVariable::amplitude: return "amplitude";
  }
  return "unknown";
}

void SweepSpec::validate() const {
  if (values.empty()) throw std::invalid_argument("sweep has no values");
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig cfg = at(i);
    cfg.validate();
    if (variable == SweepVariable::theta && !(values[i] >= 0.0 && values[i] <= 1.0))
      throw std::invalid_argument("theta sweep values must lie in [0, 1]");
  }
  bool needs_theta = std::any_of(base.methods.begin(), base.methods.end(),
                                 [](const Method& m) { return m.kind == MethodKind::lro && !m.theta; });
  if (needs_theta && variable != SweepVariable::theta)
    throw std::invalid_argument("method 'lro' without a theta requires a theta sweep (use lro:<theta>)");
}

ExperimentConfig SweepSpec::at(std::size_t index) const {
  ExperimentConfig cfg = base;
  const double v = values.at(index);
  if (variable == SweepVariable::overlap) cfg.overlap = v;
  if (variable == SweepVariable::amplitude) cfg.amplitude = v;
  return cfg;
}

SweepSpec parse_config(std::istream& in, const std::string& source) {
  ConfigReader reader(source);
  SweepSpec spec;
  ExperimentConfig& cfg = spec.base;
  bool values_set = false;
  std::string section = "experiment";
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string text = raw.substr(0, raw.find_first_of("#;"));
    text = trim(text);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') reader.fail(line, "malformed section header '" + text + "'");
      section = trim(std::string_view(text).substr(1, text.size() - 2));
      if (section != "experiment" && section != "cv" && section != "sweep")
        reader.fail(line, "unknown section [" + section + "]");
      if (section == "sweep") spec.explicit_sweep = true;
      continue;
    }
    std::size_t eq = text.find('=');
    if (eq == std::string::npos) reader.fail(line, "expected key = value");
    std::string key = trim(std::string_view(text).substr(0, eq));
    std::string value = trim(std::string_view(text).substr(eq + 1));
    if (value.empty()) reader.fail(line, "key '" + key + "' has no value");

    if (section == "experiment") {
      if (key == "p") cfg.p = reader.integer(value, line, key, 1);
      else if (key == "n_per_env" || key == "n") cfg.n_per_env = reader.integer(value, line, key, 2);
      else if (key == "n_envs") cfg.n_envs = static_cast<int>(reader.integer(value, line, key, 1));
      else if (key == "rho") {
        cfg.rho = reader.real(value, line, key);
        if (!(cfg.rho > -1.0 && cfg.rho < 1.0)) reader.fail(line, "rho must lie in (-1, 1)");
      } else if (key == "n_signals") cfg.n_signals = reader.integer(value, line, key, 1);
      else if (key == "amplitude") cfg.amplitude = reader.real(value, line, key);
      else if (key == "overlap") {
        cfg.overlap = reader.real(value, line, key);
        if (!(cfg.overlap >= 0.0 && cfg.overlap <= 1.0)) reader.fail(line, "overlap must lie in [0, 1]");
      } else if (key == "q") {
        cfg.q = reader.real(value, line, key);
        if (!(cfg.q > 0.0 && cfg.q < 1.0)) reader.fail(line, "q must lie in (0, 1)");
      } else if (key == "offset") {
        cfg.offset = static_cast<int>(reader.integer(value, line, key, 0));
        if (cfg.offset > 1) reader.fail(line, "offset must be 0 or 1");
      } else if (key == "replications") cfg.replications = static_cast<int>(reader.integer(value, line, key, 1));
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(reader.integer(value, line, key, 0));
      else if (key == "random_signs") cfg.random_signs = reader.boolean(value, line, key);
      else if (key == "assume_shared_nulls") cfg.assume_shared_nulls = reader.boolean(value, line, key);
      else if (key == "methods" || key == "method") {
        cfg.methods.clear();
        for (const std::string& m : split(value, ',')) {
          try {
            cfg.methods.push_back(Method::parse(m));
          } catch (const std::invalid_argument& e) {
            reader.fail(line, e.what());
          }
        }
      } else reader.fail(line, "unknown key '" + key + "' in [experiment]");
    } else if (section == "cv") {
      if (key == "folds") cfg.cv.folds = static_cast<int>(reader.integer(value, line, key, 2));
      else if (key == "n_lambda") cfg.cv.n_lambda = static_cast<int>(reader.integer(value, line, key, 1));
      else if (key == "lambda_min_ratio") {
        cfg.cv.lambda_min_ratio = reader.real(value, line, key);
        if (!(cfg.cv.lambda_min_ratio > 0.0 && cfg.cv.lambda_min_ratio < 1.0))
          reader.fail(line, "lambda_min_ratio must lie in (0, 1)");
      } else if (key == "gamma_grid") {
        cfg.cv.gamma_grid = reader.reals(value, line, key);
        for (double g : cfg.cv.gamma_grid)
          if (!(g >= 0.0 && g <= 1.0)) reader.fail(line, "gamma values must lie in [0, 1]");
      } else if (key == "lambda_grid") {
        cfg.cv.lambda_grid = reader.reals(value, line, key);
        for (double l : cfg.cv.lambda_grid)
          if (!(l >= 0.0)) reader.fail(line, "lambda values must be nonnegative");
      } else if (key == "tolerance") {
        cfg.cv.solver.tolerance = reader.real(value, line, key);
        if (!(cfg.cv.solver.tolerance > 0.0)) reader.fail(line, "tolerance must be positive");
      } else reader.fail(line, "unknown key '" + key + "' in [cv]");
    } else {
      if (key == "variable") {
        if (value == "overlap") spec.variable = SweepVariable::overlap;
        else if (value == "theta") spec.variable = SweepVariable::theta;
        else if (value == "amplitude") spec.variable = SweepVariable::amplitude;
        else reader.fail(line, "sweep variable must be overlap, theta or amplitude");
      } else if (key == "values") {
        spec.values = reader.reals(value, line, key);
        values_set = true;
      } else reader.fail(line, "unknown key '" + key + "' in [sweep]");
    }
  }
  if (spec.explicit_sweep && !values_set) reader.fail(0, "[sweep] section needs a 'values' key");
  if (!values_set) {
    if (spec.variable == SweepVariable::overlap) spec.values = {cfg.overlap};
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    reader.fail(0, e.what());
  }
  return spec;
}

SweepSpec load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "cannot open configuration file");
  return parse_config(in, path.string());
}

std::uint64_t replication_seed(std::uint64_t base, std::size_t value_index, std::size_t replication) {
  return derive_seed(base, {static_cast<std::uint64_t>(value_index), static_cast<std::uint64_t>(replication)});
}

std::vector<ResultRow> run_replication(const ExperimentConfig& cfg, const Simulator& simulator,
                                       std::optional<double> theta, double sweep_value, std::size_t value_index,
                                       std::size_t replication, std::uint64_t seed) {
  std::vector<ResultRow> rows;
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    ResultRow row;
    row.method = cfg.methods[m].label();
    row.method_index = m;
    row.sweep_value = sweep_value;
    row.value_index = value_index;
    row.replication = replication;
    row.seed = seed;
    rows.push_back(row);
  }
  EnvironmentBundle bundle;
  try {
    Rng rng = make_rng(seed, {stream::data});
    bundle = simulator.generate(rng);
  } catch (const std::exception& e) {
    for (auto& row : rows) row.error = e.what();
    return rows;
  }
  ReplicationAnalysis analysis(bundle, cfg, seed);
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    try {
      DiscoverySet set = analysis.discoveries(cfg.methods[m], theta);
      MetricsRecord record = score(set, bundle.target().support);
      rows[m].ok = true;
      rows[m].fdp = record.fdp;
      rows[m].power = record.power;
      rows[m].n_discoveries = record.n_discoveries;
    } catch (const std::exception& e) {
      rows[m].error = e.what();
    }
  }
  return rows;
}

std::vector<ResultRow> run_sweep(const SweepSpec& spec, const RunOptions& options) {
  spec.validate();
  const std::size_t n_values = spec.values.size();
  const std::size_t reps = static_cast<std::size_t>(spec.base.replications);
  const std::uint64_t base_seed = options.seed.value_or(spec.base.seed);

  std::vector<ExperimentConfig> configs;
  std::vector<Simulator> simulators;
  for (std::size_t v = 0; v < n_values; ++v) {
    configs.push_back(spec.at(v));
    simulators.emplace_back(configs.back());
  }

  const std::size_t total = n_values * reps;
  std::vector<std::vector<ResultRow>> units(total);
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex progress_mutex;

  auto worker = [&]() {
    while (true) {
      const std::size_t unit = next.fetch_add(1);
      if (unit >= total) return;
      const std::size_t v = unit / reps;
      const std::size_t r = unit % reps;
      std::optional<double> theta;
      if (spec.variable == SweepVariable::theta) theta = spec.values[v];
      units[unit] = run_replication(configs[v], simulators[v], theta, spec.values[v], v, r,
                                    replication_seed(base_seed, v, r));
      if (options.progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        options.progress(++done, total);
      }
    }
  };

  unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(total, 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<ResultRow> rows;
  for (auto& unit : units)
    for (auto& row : unit) rows.push_back(std::move(row));
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.method_index != b.method_index) return a.method_index < b.method_index;
    if (a.value_index != b.value_index) return a.value_index < b.value_index;
    return a.replication < b.replication;
  });
  return rows;
}

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  std::vector<AggregateRow> out;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> slot;
  std::vector<std::vector<const ResultRow*>> members;
  for (const ResultRow& row : rows) {
    auto key = std::make_pair(row.method_index, row.value_index);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, out.size()).first;
      AggregateRow agg;
      agg.method = row.method;
      agg.sweep_value = row.sweep_value;
      out.push_back(agg);
      members.emplace_back();
    }
    members[it->second].push_back(&row);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    AggregateRow& agg = out[i];
    std::vector<double> fdp, power, disc;
    for (const ResultRow* row : members[i]) {
      if (!row->ok) {
        ++agg.failed;
        continue;
      }
      fdp.push_back(row->fdp);
      power.push_back(row->power);
      disc.push_back(static_cast<double>(row->n_discoveries));
    }
    agg.replications = fdp.size();
    auto mean_se = [](const std::vector<double>& v, double& mean, double& se) {
      mean = se = 0.0;
      if (v.empty()) return;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      if (v.size() < 2) return;
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    };
    double unused = 0.0;
    mean_se(fdp, agg.mean_fdp, agg.se_fdp);
    mean_se(power, agg.mean_power, agg.se_power);
    mean_se(disc, agg.mean_discoveries, unused);
  }
  return out;
}

void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "method,sweep_value,replication,fdp,power,n_discoveries,seed\n";
  for (const ResultRow& row : rows) {
    out << row.method << ',' << format_value(row.sweep_value, 12) << ',' << row.replication << ',';
    if (row.ok)
      out << format_value(row.fdp, 17) << ',' << format_value(row.power, 17) << ',' << row.n_discoveries;
    else
      out << "NA,NA,NA";
    out << ',' << row.seed << '\n';
  }
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows, SweepVariable variable) {
  out << "method,sweep_variable,sweep_value,replications,failed,mean_fdp,se_fdp,mean_power,se_power,"
         "mean_discoveries\n";
  for (const AggregateRow& a : rows) {
    out << a.method << ',' << to_string(variable) << ',' << format_value(a.sweep_value, 12) << ',' << a.replications
        << ',' << a.failed << ',' << format_value(a.mean_fdp, 17) << ',' << format_value(a.se_fdp, 17) << ','
        << format_value(a.mean_power, 17) << ',' << format_value(a.se_power, 17) << ','
        << format_value(a.mean_discoveries, 17) << '\n';
  }
}

std::vector<double> read_statistics(std::istream& in) {
  std::vector<double> values;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string text = trim(raw);
    if (text.empty()) continue;
    auto v = to_double(text);
    if (!v) throw DataError("line " + std::to_string(line) + ": not a number: '" + text + "'");
    if (!std::isfinite(*v)) throw DataError("line " + std::to_string(line) + ": value is not finite");
    values.push_back(*v);
  }
  return values;
}

Eigen::MatrixXd read_prior(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string text = trim(raw);
    if (text.empty()) continue;
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream fields(text);
    std::vector<double> row;
    std::string token;
    while (fields >> token) {
      auto v = to_double(token);
      if (!v || !std::isfinite(*v))
        throw DataError("prior line " + std::to_string(line) + ": invalid value '" + token + "'");
      row.push_back(*v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError("prior line " + std::to_string(line) + ": inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("prior file is empty");
  Eigen::MatrixXd prior(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c) prior(i, c) = rows[i][c];
  return prior;
}

void write_discoveries(std::ostream& out, const DiscoverySet& set, FilterMode mode) {
  out << "threshold=" << format_value(set.threshold, 17) << '\n';
  out << "stop_index=" << (set.stop_index ? std::to_string(*set.stop_index) : std::string("NA")) << '\n';
  out << "rejected=";
  for (std::size_t i = 0; i < set.rejected.size(); ++i) out << (i ? " " : "") << set.rejected[i] + 1;
  out << "\n\n";
  out << (mode == FilterMode::threshold ? "t" : "k") << ",fdr_hat\n";
  for (const TracePoint& point : set.trace)
    out << format_value(point.position, 17) << ',' << format_value(point.fdr_hat, 17) << '\n';
}

}  // namespace knockoffs
