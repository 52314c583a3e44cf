#pragma once

#include <Eigen/Dense>
#include <vector>

#include "knockoffs/random.hpp"

namespace knockoffs {

enum class Family { gaussian, binomial };

// Standardized [X, X~]: every column centered and scaled to unit population
// standard deviation. Columns 0..p-1 are originals, p..2p-1 knockoffs.
struct AugmentedDesign {
  Eigen::MatrixXd z;
  Eigen::VectorXd col_means;
  Eigen::VectorXd col_scales;
  // Constant columns are stored as zeros with scale 1.
  std::vector<bool> zero_variance;

  Eigen::Index rows() const { return z.rows(); }
  Eigen::Index columns() const { return z.cols(); }
  Eigen::Index n_features() const { return z.cols() / 2; }
};

AugmentedDesign standardize(const Eigen::MatrixXd& raw);
AugmentedDesign standardize(const Eigen::MatrixXd& x, const Eigen::MatrixXd& knockoffs);

// Per-feature l1 penalties lambda_j = lambda * f_j with
//   f_j = ((1 - gamma) + gamma * phi_j) / mean_k((1 - gamma) + gamma * phi_k).
// The normalization keeps the penalty scale comparable across gamma so that
// lambda and gamma can be tuned on one grid; gamma = 0 gives f = 1 exactly.
class PenaltySpec {
 public:
  PenaltySpec(double lambda, double gamma, Eigen::VectorXd phi);

  // Uniform lasso penalty over `columns` features (phi = 1, gamma = 0).
  static PenaltySpec uniform(double lambda, Eigen::Index columns);

  double lambda() const { return lambda_; }
  double gamma() const { return gamma_; }
  const Eigen::VectorXd& phi() const { return phi_; }
  const Eigen::VectorXd& factors() const { return factors_; }
  Eigen::VectorXd penalties() const { return lambda_ * factors_; }

 private:
  double lambda_;
  double gamma_;
  Eigen::VectorXd phi_;
  Eigen::VectorXd factors_;
};

// Validates phi (positive, finite, phi_j == phi_{j+p}) and returns the
// normalized penalty factors described on PenaltySpec.
Eigen::VectorXd penalty_factors(const Eigen::VectorXd& phi, double gamma);

struct FitResult {
  Eigen::VectorXd coefficients;  // standardized scale, length 2p
  double intercept = 0.0;
  Family family = Family::gaussian;
  bool converged = false;
  int iterations = 0;  // coordinate-descent sweeps
  int outer_iterations = 0;  // IRLS steps (binomial)
};

struct SolverOptions {
  double tolerance = 1e-8;  // max coefficient change
  int max_sweeps = 100000;  // per lambda value
  int max_irls = 25;
  double weight_floor = 1e-5;
  // Warm-start path used by fit_weighted_lasso: log-spaced points from
  // lambda_max down to the target.
  int path_points = 100;
  double path_min_ratio = 1e-3;
};

// Smallest lambda at which every coefficient is zero for the given factors.
double lambda_max(const AugmentedDesign& design, const Eigen::VectorXd& y, Family family,
                  const Eigen::VectorXd& factors);

// Minimizes (1/n) * sum_i loss_i + sum_j lambda_j |b_j| with an unpenalized
// intercept; loss is half the squared error (gaussian) or the negative
// log-likelihood (binomial). Non-convergence is reported, not thrown.
FitResult fit_weighted_lasso(const AugmentedDesign& design, const Eigen::VectorXd& y,
                             const PenaltySpec& penalty, Family family,
                             const SolverOptions& options = {});

// Gradient of the smooth part of the objective at the fitted coefficients.
Eigen::VectorXd smooth_gradient(const AugmentedDesign& design, const Eigen::VectorXd& y,
                                const FitResult& fit);

// Largest violation of the lasso optimality conditions.
double kkt_residual(const AugmentedDesign& design, const Eigen::VectorXd& y, const FitResult& fit,
                    const PenaltySpec& penalty);

struct CvConfig {
  int folds = 10;
  std::vector<double> gamma_grid = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  // Explicit lambda values shared by every gamma. Empty: n_lambda log-spaced
  // points from lambda_max(gamma) down to lambda_min_ratio * lambda_max(gamma).
  std::vector<double> lambda_grid;
  int n_lambda = 100;
  double lambda_min_ratio = 1e-3;
  // A gamma's path is abandoned once the mean held-out loss has not improved
  // for this many consecutive lambdas. Zero walks the whole grid. Skipped
  // points report an infinite loss.
  int patience = 10;
  SolverOptions solver;
};

struct CvResult {
  PenaltySpec penalty;
  std::vector<double> gammas;
  std::vector<std::vector<double>> lambdas;    // [gamma][lambda]
  std::vector<std::vector<double>> mean_loss;  // +inf where some fold stopped early
};

// Grid search over (lambda, gamma) by K-fold held-out loss (squared error or
// deviance). Ties go to the larger lambda, then the smaller gamma.
CvResult cross_validate(const AugmentedDesign& design, const Eigen::VectorXd& y, Family family,
                        const Eigen::VectorXd& phi, const CvConfig& config, Rng& rng);

}  // namespace knockoffs
