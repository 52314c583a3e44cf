// Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
// the number of failed criteria. The full-scale sweep runs only with --full.

#include <CLI11.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "knockoffs/filters.hpp"
#include "knockoffs/gaussian_knockoffs.hpp"
#include "knockoffs/harness.hpp"
#include "knockoffs/simulation.hpp"
#include "knockoffs/sparse_regression.hpp"
#include "knockoffs/statistics.hpp"

using namespace knockoffs;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Report {
 public:
  void record(const std::string& id, const std::string& name, const Verdict& v, double seconds) {
    std::printf("%s %s %s: %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", id.c_str(), name.c_str(), v.detail.c_str(),
                seconds);
    std::fflush(stdout);
    if (!v.pass) ++failed_;
  }

  template <class F>
  void run(const std::string& id, const std::string& name, double limit_seconds, F&& body) {
    auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limit_seconds > 0 && seconds > limit_seconds) {
      v.pass = false;
      v.detail += " (over the " + std::to_string(static_cast<int>(limit_seconds)) + "s budget)";
    }
    record(id, name, v, seconds);
  }

  int failed() const { return failed_; }

 private:
  int failed_ = 0;
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index n, Eigen::Index m, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = normal(rng);
  return x;
}

// Direct enumeration of the knockoff threshold over every candidate t.
std::vector<Eigen::Index> brute_force_rejections(const Eigen::VectorXd& w, double q, int offset, double& threshold) {
  threshold = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < w.size(); ++c) {
    const double t = std::abs(w(c));
    if (t == 0.0 || t >= threshold) continue;
    int negatives = 0, positives = 0;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      negatives += w(j) <= -t;
      positives += w(j) >= t;
    }
    if ((offset + negatives) / static_cast<double>(std::max(positives, 1)) <= q) threshold = t;
  }
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < w.size(); ++j)
    if (w(j) >= threshold) out.push_back(j);
  return out;
}

Verdict filter_oracle() {
  Rng rng(20240101);
  std::uniform_int_distribution<int> dims(5, 100), offsets(0, 1);
  std::uniform_real_distribution<double> levels(0.05, 0.5);
  std::normal_distribution<double> normal;
  int threshold_mismatch = 0, sequential_mismatch = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int p = dims(rng);
    Eigen::VectorXd w(p);
    // Half the vectors are rounded so that ties and zeros occur.
    const bool coarse = rep % 2 == 0;
    for (int j = 0; j < p; ++j) {
      double v = normal(rng) + (j < p / 4 ? 2.0 : 0.0);
      w(j) = coarse ? std::round(2.0 * v) / 2.0 : v;
    }
    FilterConfig cfg{levels(rng), offsets(rng)};
    double expected_t = 0.0;
    std::vector<Eigen::Index> expected = brute_force_rejections(w, cfg.q, cfg.offset, expected_t);
    DiscoverySet t = threshold_filter(w, cfg);
    if (t.rejected != expected || t.threshold != expected_t) ++threshold_mismatch;
    std::vector<Eigen::Index> order = ascending_magnitude_order(w);
    DiscoverySet s = sequential_filter(w, order, cfg);
    if (s.rejected != t.rejected) ++sequential_mismatch;
  }
  return {threshold_mismatch == 0 && sequential_mismatch == 0,
          "threshold mismatches " + std::to_string(threshold_mismatch) + "/1000, sequential mismatches " +
              std::to_string(sequential_mismatch) + "/1000"};
}

Verdict solver_correctness() {
  Rng rng(7);
  std::uniform_int_distribution<int> cols(1, 20), rows(10, 100);
  std::uniform_real_distribution<double> frac(0.01, 1.0), gamma(0.0, 1.0), weight(0.5, 10.0);
  double worst_kkt = 0.0;
  int unconverged = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const int p = cols(rng);
    const int n = rows(rng);
    AugmentedDesign d = standardize(gaussian_matrix(n, 2 * p, rng));
    Eigen::VectorXd y = gaussian_matrix(n, 1, rng).col(0) + 0.8 * d.z.col(0) - 0.5 * d.z.col(p);
    Eigen::VectorXd phi = Eigen::VectorXd::Ones(2 * p);
    double g = 0.0;
    if (rep % 2) {
      for (int j = 0; j < p; ++j) phi(j) = phi(j + p) = weight(rng);
      g = gamma(rng);
    }
    const double top = lambda_max(d, y, Family::gaussian, penalty_factors(phi, g));
    PenaltySpec pen(frac(rng) * top, g, phi);
    FitResult fit = fit_weighted_lasso(d, y, pen, Family::gaussian);
    unconverged += !fit.converged;
    worst_kkt = std::max(worst_kkt, kkt_residual(d, y, fit, pen));
  }

  // Univariate fits: the design needs a companion column, which is made
  // exactly orthogonal to the feature and the response so it stays at zero.
  double worst_closed_form = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = rows(rng);
    Eigen::MatrixXd raw = gaussian_matrix(n, 2, rng);
    raw.col(0).array() -= raw.col(0).mean();
    Eigen::VectorXd y = gaussian_matrix(n, 1, rng).col(0) + frac(rng) * raw.col(0);
    Eigen::VectorXd yc = y.array() - y.mean();
    Eigen::MatrixXd basis(n, 3);
    basis << Eigen::VectorXd::Ones(n), raw.col(0), yc;
    Eigen::VectorXd other = raw.col(1);
    other -= basis * basis.colPivHouseholderQr().solve(other);
    raw.col(1) = other;
    AugmentedDesign d = standardize(raw);
    const double corr = d.z.col(0).dot(yc) / n;
    const double lambda = 1.5 * frac(rng) * std::abs(corr);
    FitResult fit = fit_weighted_lasso(d, y, PenaltySpec::uniform(lambda, 2), Family::gaussian);
    const double expected = std::copysign(std::max(std::abs(corr) - lambda, 0.0), corr);
    worst_closed_form = std::max(worst_closed_form, std::abs(fit.coefficients(0) - expected));
    worst_closed_form = std::max(worst_closed_form, std::abs(fit.coefficients(1)));
  }
  return {worst_kkt <= 1e-6 && worst_closed_form <= 1e-8 && unconverged == 0,
          "worst KKT residual " + fmt(worst_kkt, 3) + " (<= 1e-6), worst univariate error " +
              fmt(worst_closed_form, 3) + " (<= 1e-8), unconverged " + std::to_string(unconverged)};
}

Verdict exchangeability() {
  GaussianModel model = GaussianModel::autoregressive(20, 0.5);
  KnockoffParameters params = KnockoffParameters::equicorrelated(model);
  Rng rng(31337);
  Eigen::MatrixXd x = model.sample(50000, rng);
  Eigen::MatrixXd xk = sample_knockoffs(model, params, x, rng);
  Eigen::MatrixXd joint(x.rows(), 40);
  joint << x, xk;
  Eigen::MatrixXd centered = joint.rowwise() - joint.colwise().mean();
  Eigen::MatrixXd empirical = centered.transpose() * centered / static_cast<double>(joint.rows() - 1);
  const double worst = (empirical - joint_covariance(model, params)).cwiseAbs().maxCoeff();
  return {worst <= 0.02, "max entrywise deviation " + fmt(worst, 3) + " (<= 0.02)"};
}

// Logistic regression of 1{w > 0} on |w| with an intercept; returns the z
// statistic of the slope.
double sign_slope_z(const std::vector<double>& magnitude, const std::vector<int>& positive) {
  const Eigen::Index n = static_cast<Eigen::Index>(magnitude.size());
  double scale = 0.0;
  for (double m : magnitude) scale += m * m;
  scale = std::sqrt(scale / n);
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = magnitude[i] / scale;
    y(i) = positive[i];
  }
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  Eigen::Matrix2d info = Eigen::Matrix2d::Identity();
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd prob = (1.0 + (-(design * beta).array()).exp()).inverse();
    Eigen::VectorXd weight = prob.array() * (1.0 - prob.array());
    info = design.transpose() * weight.asDiagonal() * design;
    Eigen::Vector2d step = info.ldlt().solve(design.transpose() * (y - prob));
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-10) break;
  }
  Eigen::Matrix2d cov = info.inverse();
  return beta(1) / std::sqrt(cov(1, 1));
}

struct NullSigns {
  long positive = 0;
  long total = 0;
  std::vector<double> magnitude;
  std::vector<int> is_positive;

  void add(const Eigen::VectorXd& w, const std::vector<Eigen::Index>& support) {
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      if (w(j) == 0.0 || std::binary_search(support.begin(), support.end(), j)) continue;
      ++total;
      positive += w(j) > 0.0;
      magnitude.push_back(std::abs(w(j)));
      is_positive.push_back(w(j) > 0.0);
    }
  }
};

Verdict null_sign_flips() {
  ExperimentConfig cfg;
  cfg.p = 200;
  cfg.n_per_env = 400;
  cfg.n_envs = 3;
  cfg.n_signals = 30;
  cfg.amplitude = 3.5;
  cfg.overlap = 1.0;
  cfg.assume_shared_nulls = true;
  cfg.validate();
  Simulator simulator(cfg);

  std::map<std::string, NullSigns> by_method;
  const char* names[] = {"vanilla", "lro:0.3", "weighted_lasso", "pooled_weighted_lasso"};
  for (std::size_t rep = 0; rep < 300; ++rep) {
    const std::uint64_t seed = replication_seed(4242, 0, rep);
    Rng rng = make_rng(seed, {stream::data});
    EnvironmentBundle bundle = simulator.generate(rng);
    ReplicationAnalysis analysis(bundle, cfg, seed);
    const auto& support = bundle.target().support;
    by_method["vanilla"].add(analysis.target().statistics.w, support);
    by_method["lro:0.3"].add(analysis.lro(0.3).w, support);
    by_method["weighted_lasso"].add(analysis.weighted_lasso().statistics.w, support);
    by_method["pooled_weighted_lasso"].add(analysis.pooled_weighted_lasso().statistics.w, support);
  }

  bool pass = true;
  std::string detail;
  for (const char* name : names) {
    const NullSigns& s = by_method[name];
    const double fraction = static_cast<double>(s.positive) / static_cast<double>(s.total);
    const double se = std::sqrt(0.25 / static_cast<double>(s.total));
    const double z = sign_slope_z(s.magnitude, s.is_positive);
    const bool ok = std::abs(fraction - 0.5) <= 3.0 * se && std::abs(z) < 3.0;
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : "; ") + name + " positive " + fmt(fraction) + " of " +
              std::to_string(s.total) + " (3SE " + fmt(3.0 * se, 2) + "), slope z " + fmt(z, 3);
  }
  return {pass, detail};
}

struct SweepSummary {
  std::map<std::pair<std::string, double>, AggregateRow> cells;
  std::vector<double> overlaps;

  const AggregateRow& at(const std::string& method, double overlap) const {
    return cells.at({method, overlap});
  }
};

SweepSummary run_figure_sweep(Eigen::Index p, Eigen::Index n, Eigen::Index signals, int reps,
                              const std::string& csv_dir, const std::string& tag) {
  SweepSpec spec;
  ExperimentConfig& cfg = spec.base;
  cfg.p = p;
  cfg.n_per_env = n;
  cfg.n_envs = 3;
  cfg.n_signals = signals;
  cfg.amplitude = 3.5;
  cfg.q = 0.1;
  cfg.offset = 1;
  cfg.replications = reps;
  cfg.seed = 2023;
  cfg.methods.clear();
  for (const char* m : {"vanilla", "pooling", "lro:0.1", "lro:0.4", "adaptive", "weighted_lasso"})
    cfg.methods.push_back(Method::parse(m));
  spec.variable = SweepVariable::overlap;
  spec.values = {0.0, 0.25, 0.5, 0.75, 1.0};
  spec.explicit_sweep = true;

  RunOptions options;
  options.progress = [last = std::size_t{0}](std::size_t done, std::size_t total) mutable {
    const std::size_t decile = done * 10 / total;
    if (decile != last) {
      std::fprintf(stderr, "sweep: %zu/%zu replications\n", done, total);
      last = decile;
    }
  };
  std::vector<ResultRow> rows = run_sweep(spec, options);
  std::vector<AggregateRow> agg = aggregate(rows);

  if (!csv_dir.empty()) {
    std::filesystem::create_directories(csv_dir);
    std::ofstream results(std::filesystem::path(csv_dir) / (tag + "_results.csv"));
    std::ofstream summary(std::filesystem::path(csv_dir) / (tag + "_summary.csv"));
    write_rows_csv(results, rows);
    write_aggregate_csv(summary, agg, spec.variable);
  }

  SweepSummary out;
  out.overlaps = spec.values;
  for (const AggregateRow& a : agg) out.cells[{a.method, a.sweep_value}] = a;
  return out;
}

Verdict fdr_control(const SweepSummary& s) {
  bool pass = true;
  std::string detail;
  for (const char* m : {"vanilla", "lro:0.1", "adaptive", "weighted_lasso"}) {
    double worst_margin = -std::numeric_limits<double>::infinity();
    double worst_fdr = 0.0, worst_overlap = 0.0;
    for (double o : s.overlaps) {
      const AggregateRow& a = s.at(m, o);
      const double bound = 0.10 + 3.0 * a.se_fdp;
      if (a.failed > 0 || a.mean_fdp > bound) pass = false;
      if (a.mean_fdp - bound > worst_margin) {
        worst_margin = a.mean_fdp - bound;
        worst_fdr = a.mean_fdp;
        worst_overlap = o;
      }
    }
    detail += std::string(detail.empty() ? "" : "; ") + m + " max FDR " + fmt(worst_fdr, 3) + " at overlap " +
              fmt(worst_overlap, 2);
  }
  return {pass, detail};
}

Verdict pooling_invalid(const SweepSummary& s) {
  const AggregateRow& a = s.at("pooling", 0.0);
  const double bound = 0.10 + 3.0 * a.se_fdp;
  return {a.mean_fdp > bound, "pooling FDR at overlap 0 is " + fmt(a.mean_fdp, 3) + " vs bound " + fmt(bound, 3)};
}

Verdict power_ordering(const SweepSummary& s) {
  const double v1 = s.at("vanilla", 1.0).mean_power;
  const double v0 = s.at("vanilla", 0.0).mean_power;
  bool pass = true;
  std::string detail = "vanilla power " + fmt(v0, 3) + " (overlap 0), " + fmt(v1, 3) + " (overlap 1)";
  for (const char* m : {"weighted_lasso", "adaptive"}) {
    const double p1 = s.at(m, 1.0).mean_power;
    const double p0 = s.at(m, 0.0).mean_power;
    const bool gain = p1 >= v1 + 0.03;
    const bool no_harm = p0 >= v0 - 0.05;
    pass = pass && gain && no_harm;
    detail += std::string("; ") + m + " " + fmt(p0, 3) + (no_harm ? "" : " [below vanilla - 0.05]") + " / " +
              fmt(p1, 3) + (gain ? "" : " [gain < 0.03]");
  }
  return {pass, detail};
}

Verdict theta_sensitivity(const SweepSummary& s) {
  const double low = s.at("lro:0.1", 1.0).mean_power - s.at("lro:0.1", 0.0).mean_power;
  const double high = s.at("lro:0.4", 1.0).mean_power - s.at("lro:0.4", 0.0).mean_power;
  return {high > low, "power gap theta=0.4 " + fmt(high, 3) + " vs theta=0.1 " + fmt(low, 3)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the transfer-learning knockoff library", "acceptance"};
  bool full = false;
  std::string csv_dir;
  app.add_flag("--full", full, "Also run the full-scale sweep (hours)");
  app.add_option("--csv", csv_dir, "Write sweep rows and summaries to this directory");
  CLI11_PARSE(app, argc, argv);

  Report report;
  report.run("1", "filter oracle equivalence", 10, filter_oracle);
  report.run("2", "solver correctness", 30, solver_correctness);
  report.run("3", "knockoff exchangeability", 30, exchangeability);
  report.run("4", "null-sign coin flips", 15 * 60, null_sign_flips);

  SweepSummary sweep;
  double sweep_seconds = 0.0;
  {
    auto start = std::chrono::steady_clock::now();
    bool ok = true;
    try {
      sweep = run_figure_sweep(200, 400, 30, 200, csv_dir, "desk");
    } catch (const std::exception& e) {
      ok = false;
      for (const char* id : {"5", "6", "7", "8"}) report.record(id, "overlap sweep", {false, e.what()}, 0.0);
    }
    sweep_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok) {
      Verdict fdr = fdr_control(sweep);
      if (sweep_seconds > 30 * 60) {
        fdr.pass = false;
        fdr.detail += " (over the 1800s budget)";
      }
      report.record("5", "FDR control across overlap", fdr, sweep_seconds);
      report.record("6", "pooling loses FDR control", pooling_invalid(sweep), 0.0);
      report.record("7", "power ordering", power_ordering(sweep), 0.0);
      report.record("8", "theta sensitivity", theta_sensitivity(sweep), 0.0);
    }
  }

  if (full) {
    report.run("9", "full-scale sweep", 0, [&]() -> Verdict {
      SweepSummary big = run_figure_sweep(500, 800, 60, 500, csv_dir, "full");
      Verdict parts[] = {fdr_control(big), pooling_invalid(big), power_ordering(big), theta_sensitivity(big)};
      Verdict v{true, ""};
      for (int i = 0; i < 4; ++i) {
        v.pass = v.pass && parts[i].pass;
        v.detail += std::string(i ? " | " : "") + "[" + std::to_string(5 + i) + (parts[i].pass ? " ok] " : " FAIL] ") +
                    parts[i].detail;
      }
      return v;
    });
  } else {
    std::printf("SKIP 9 full-scale sweep: run with --full\n");
  }

  std::printf("%d criteria failed\n", report.failed());
  return report.failed() == 0 ? 0 : 1;
}
