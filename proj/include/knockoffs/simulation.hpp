#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "knockoffs/filters.hpp"
#include "knockoffs/gaussian_knockoffs.hpp"
#include "knockoffs/random.hpp"
#include "knockoffs/sparse_regression.hpp"
#include "knockoffs/statistics.hpp"

namespace knockoffs {

enum class MethodKind { vanilla, pooling, lro, adaptive, weighted_lasso, pooled_weighted_lasso };

struct Method {
  MethodKind kind = MethodKind::vanilla;
  std::optional<double> theta;  // lro only; unset means "taken from a theta sweep"

  // "vanilla", "pooling", "lro", "lro:0.1", "adaptive", "weighted_lasso",
  // "pooled_weighted_lasso"
  static Method parse(std::string_view text);
  std::string label() const;
  bool operator==(const Method&) const = default;
};

struct ExperimentConfig {
  Eigen::Index p = 500;
  Eigen::Index n_per_env = 800;
  int n_envs = 3;  // target plus external environments
  double rho = 0.5;
  Eigen::Index n_signals = 60;
  double amplitude = 3.5;  // nonzero effects are amplitude / sqrt(n_per_env)
  double overlap = 1.0;
  double q = 0.1;
  int offset = 1;
  std::vector<Method> methods = {Method{}};
  int replications = 500;
  std::uint64_t seed = 1;
  // Effects are positive by default; true draws i.i.d. fair signs shared
  // across environments.
  bool random_signs = false;
  // Declares that target nulls are null in every environment; required by
  // pooled_weighted_lasso.
  bool assume_shared_nulls = false;
  CvConfig cv;

  void validate() const;
  // round-half-up(overlap * n_signals)
  Eigen::Index shared_signals() const;
};

struct Environment {
  Eigen::MatrixXd x;
  Eigen::MatrixXd knockoffs;
  Eigen::VectorXd y;
  Eigen::VectorXd beta;
  std::vector<Eigen::Index> support;  // sorted, 0-based
};

// Environment 0 is the target.
struct EnvironmentBundle {
  std::vector<Environment> environments;

  const Environment& target() const { return environments.front(); }
};

// Holds the AR(1) design model and its knockoff parameters so replications
// reuse one factorization.
class Simulator {
 public:
  explicit Simulator(const ExperimentConfig& cfg);

  EnvironmentBundle generate(Rng& rng) const;
  const GaussianModel& model() const { return model_; }
  const KnockoffParameters& knockoff_parameters() const { return params_; }

 private:
  ExperimentConfig cfg_;
  GaussianModel model_;
  KnockoffParameters params_;
};

EnvironmentBundle generate_environments(const ExperimentConfig& cfg, Rng& rng);

struct MetricsRecord {
  double fdp = 0.0;
  double power = 0.0;
  std::size_t n_discoveries = 0;
  std::size_t replication = 0;
  std::string method;
  double overlap = 0.0;
  std::optional<double> theta;
};

// fdp = |S \ truth| / max(|S|, 1), power = |S cap truth| / |truth|.
MetricsRecord score(const DiscoverySet& discoveries, const std::vector<Eigen::Index>& truth);

// Lazily computed statistics of one replication. Each cross-validation uses
// its own stream derived from the replication seed.
class ReplicationAnalysis {
 public:
  ReplicationAnalysis(const EnvironmentBundle& bundle, const ExperimentConfig& cfg, std::uint64_t seed);

  const KnockoffFit& target();    // vanilla, target environment
  const KnockoffFit& external();  // vanilla, pooled external environments
  const KnockoffFit& pooled();    // vanilla, all environments pooled
  StatisticVector lro(double theta);
  const KnockoffFit& weighted_lasso();         // phi from the external fit
  const KnockoffFit& pooled_weighted_lasso();  // phi from the pooled fit

  // theta overrides the method's own theta (lro under a theta sweep).
  DiscoverySet discoveries(const Method& method, std::optional<double> theta = std::nullopt);

 private:
  const AugmentedDesign& target_design();
  KnockoffFit fit_vanilla(const std::vector<std::size_t>& envs, std::uint64_t tag, const char* label);

  const EnvironmentBundle& bundle_;
  const ExperimentConfig& cfg_;
  std::uint64_t seed_;
  std::optional<AugmentedDesign> target_design_;
  std::optional<KnockoffFit> target_, external_, pooled_, weighted_, pooled_weighted_;
};

}  // namespace knockoffs
