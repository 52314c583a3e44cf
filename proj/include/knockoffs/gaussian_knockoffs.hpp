#pragma once

#include <Eigen/Dense>

#include "knockoffs/random.hpp"

namespace knockoffs {

// Multivariate Gaussian design distribution N(mu, sigma). Construction
// validates symmetry and positive definiteness and keeps the Cholesky
// factor of sigma for later solves.
class GaussianModel {
 public:
  GaussianModel(Eigen::VectorXd mu, Eigen::MatrixXd sigma);

  // Zero-mean AR(1) model with sigma_ij = rho^|i-j|.
  static GaussianModel autoregressive(Eigen::Index p, double rho);

  Eigen::Index dimension() const { return mu_.size(); }
  const Eigen::VectorXd& mean() const { return mu_; }
  const Eigen::MatrixXd& covariance() const { return sigma_; }
  const Eigen::LLT<Eigen::MatrixXd>& cholesky() const { return llt_; }

  // n i.i.d. rows.
  Eigen::MatrixXd sample(Eigen::Index n, Rng& rng) const;

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd lower_;
};

// Equicorrelated decoupling parameters: s_j = min(1, 2 * lambda_min(R)) * sigma_jj
// where R is the correlation matrix of sigma.
Eigen::VectorXd equicorrelated_s(const Eigen::MatrixXd& sigma);

// Precomputed conditional law of the knockoff rows given the originals:
//   mean  = x - (x - mu) * sigma^{-1} * diag(s)
//   cov   = 2 diag(s) - diag(s) * sigma^{-1} * diag(s)
// Immutable once built; share freely across threads.
class KnockoffParameters {
 public:
  static KnockoffParameters build(const GaussianModel& model, Eigen::VectorXd s);
  static KnockoffParameters equicorrelated(const GaussianModel& model);

  const Eigen::VectorXd& s() const { return s_; }
  // sigma^{-1} * diag(s)
  const Eigen::MatrixXd& conditional_coefficients() const { return cond_coef_; }
  const Eigen::MatrixXd& conditional_covariance() const { return cond_cov_; }
  // F with F * F^T equal to the (eigenvalue-clipped) conditional covariance.
  // Lower triangular whenever the covariance admits a plain Cholesky factor.
  const Eigen::MatrixXd& conditional_factor() const { return cond_factor_; }

 private:
  KnockoffParameters() = default;

  Eigen::VectorXd s_;
  Eigen::MatrixXd cond_coef_;
  Eigen::MatrixXd cond_cov_;
  Eigen::MatrixXd cond_factor_;
};

// Joint covariance of [X, X~]: [[sigma, sigma - D], [sigma - D, sigma]].
Eigen::MatrixXd joint_covariance(const GaussianModel& model, const KnockoffParameters& params);

// Draws one knockoff row per row of x. Throws std::invalid_argument when the
// column count does not match the model dimension.
Eigen::MatrixXd sample_knockoffs(const GaussianModel& model, const KnockoffParameters& params,
                                 const Eigen::MatrixXd& x, Rng& rng);

}  // namespace knockoffs
