#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "knockoffs/random.hpp"
#include "knockoffs/sparse_regression.hpp"

namespace knockoffs {

enum class Construction { vanilla, lro, weighted_lasso, pooled_weighted_lasso };

const char* to_string(Construction c);

struct StatisticVector {
  Eigen::VectorXd w;
  Construction construction = Construction::vanilla;
  std::string environment;

  Eigen::Index size() const { return w.size(); }
};

enum class Provenance { external_only, pooled };

// Side information from external environments. At least one field must be
// populated; phi, when given, must be strictly positive.
struct PriorInformation {
  std::optional<Eigen::VectorXd> ext_statistics;    // W_ext, length p
  std::optional<Eigen::VectorXd> ext_coefficients;  // fitted coefficients, length 2p
  std::optional<Eigen::VectorXd> phi;               // length p
  std::vector<Eigen::VectorXd> multi_sources;       // each length 2p
  Provenance provenance = Provenance::external_only;

  void validate() const;

  // phi duplicated to length 2p, taken from `phi`, else derived from
  // ext_coefficients, else from the mean of multi_sources.
  Eigen::VectorXd resolve_phi(Eigen::Index p, double ridge = 0.05) const;
};

// w_j = |b_j| - |b_{j+p}|
StatisticVector lasso_statistics(const FitResult& fit, Construction construction = Construction::vanilla,
                                 std::string environment = {});

// Signs from w0, magnitudes (1 - theta)|w0| + theta |wext|.
StatisticVector linear_reorder(const StatisticVector& w0, const StatisticVector& wext, double theta);

// phi_j = 1 / (ridge + |b_j| + |b_{j+p}|). With duplicate = true the result
// has length 2p and phi_j == phi_{j+p}.
Eigen::VectorXd prior_weights(const Eigen::VectorXd& ext_coefficients, bool duplicate = false, double ridge = 0.05);

// Coordinatewise mean of equal-length coefficient vectors.
Eigen::VectorXd combine_multi_priors(const std::vector<Eigen::VectorXd>& sources);

struct KnockoffFit {
  StatisticVector statistics;
  FitResult fit;
  PenaltySpec penalty;
};

// Cross-validated lasso (gamma fixed at 0) on [X, X~] and its statistics.
KnockoffFit vanilla_statistics(const AugmentedDesign& design, const Eigen::VectorXd& y, Family family,
                               const CvConfig& cv, Rng& rng, std::string environment = {});

// Cross-validates (lambda, gamma) for the prior-weighted lasso on the target
// environment, refits at the optimum and returns its statistics. A pooled
// prior is only accepted when the caller asserts that target nulls are null
// in every environment.
KnockoffFit weighted_lasso_statistics(const AugmentedDesign& design, const Eigen::VectorXd& y,
                                      const PriorInformation& prior, Family family, const CvConfig& cv, Rng& rng,
                                      bool shared_nulls_asserted = false, std::string environment = {});

}  // namespace knockoffs
