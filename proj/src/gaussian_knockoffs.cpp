#include "knockoffs/gaussian_knockoffs.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "knockoffs/errors.hpp"

namespace knockoffs {

namespace {

constexpr double kSymmetryTolerance = 1e-10;
constexpr double kPsdTolerance = 1e-8;
constexpr double kEigenClip = 1e-10;

Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = normal(rng);
  return z;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

}  // namespace

GaussianModel::GaussianModel(Eigen::VectorXd mu, Eigen::MatrixXd sigma)
    : mu_(std::move(mu)), sigma_(std::move(sigma)) {
  if (sigma_.rows() != sigma_.cols() || sigma_.rows() != mu_.size())
    throw std::invalid_argument("GaussianModel: mean and covariance dimensions disagree");
  if (mu_.size() == 0) throw std::invalid_argument("GaussianModel: empty model");
  double asym = (sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance) {
    std::ostringstream msg;
    msg << "GaussianModel: covariance is not symmetric (max asymmetry " << asym << ")";
    throw ConstructionError(msg.str());
  }
  llt_.compute(sigma_);
  if (llt_.info() != Eigen::Success)
    throw ConstructionError("GaussianModel: Cholesky factorization of the covariance failed "
                            "(matrix is not positive definite)");
  lower_ = llt_.matrixL();
}

GaussianModel GaussianModel::autoregressive(Eigen::Index p, double rho) {
  if (p <= 0) throw std::invalid_argument("autoregressive: p must be positive");
  if (!(rho > -1.0 && rho < 1.0)) throw std::invalid_argument("autoregressive: rho must lie in (-1, 1)");
  Eigen::MatrixXd sigma(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      sigma(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
  return GaussianModel(Eigen::VectorXd::Zero(p), std::move(sigma));
}

Eigen::MatrixXd GaussianModel::sample(Eigen::Index n, Rng& rng) const {
  Eigen::MatrixXd z = standard_normal_matrix(n, dimension(), rng);
  Eigen::MatrixXd x = z * lower_.transpose();
  x.rowwise() += mu_.transpose();
  return x;
}

Eigen::VectorXd equicorrelated_s(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols()) throw std::invalid_argument("equicorrelated_s: covariance must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw ConstructionError("equicorrelated_s: Cholesky factorization of the covariance failed "
                            "(matrix is not positive definite)");
  Eigen::VectorXd scale = sigma.diagonal().cwiseSqrt();
  Eigen::MatrixXd corr = scale.cwiseInverse().asDiagonal() * sigma * scale.cwiseInverse().asDiagonal();
  double lambda_min = min_eigenvalue(corr);
  double level = std::min(1.0, 2.0 * lambda_min);
  return level * sigma.diagonal();
}

KnockoffParameters KnockoffParameters::build(const GaussianModel& model, Eigen::VectorXd s) {
  const Eigen::Index p = model.dimension();
  if (s.size() != p) throw std::invalid_argument("KnockoffParameters: s has the wrong length");
  if ((s.array() < 0.0).any() || !s.allFinite())
    throw ConstructionError("KnockoffParameters: s must be finite and nonnegative");

  Eigen::MatrixXd slack = 2.0 * model.covariance();
  slack.diagonal() -= s;
  if (min_eigenvalue(slack) < -kPsdTolerance)
    throw ConstructionError("KnockoffParameters: 2*sigma - diag(s) is not positive semidefinite");

  KnockoffParameters params;
  params.s_ = std::move(s);
  Eigen::MatrixXd diag_s = params.s_.asDiagonal();
  params.cond_coef_ = model.cholesky().solve(diag_s);

  Eigen::MatrixXd cov = -(params.s_.asDiagonal() * params.cond_coef_);
  cov.diagonal() += 2.0 * params.s_;
  cov = 0.5 * (cov + cov.transpose()).eval();
  params.cond_cov_ = cov;

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    params.cond_factor_ = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Eigen::VectorXd values = eig.eigenvalues();
    if (values.minCoeff() < -kPsdTolerance)
      throw ConstructionError("KnockoffParameters: conditional covariance is not positive semidefinite");
    values = values.unaryExpr([](double v) { return v < kEigenClip ? 0.0 : std::sqrt(v); });
    params.cond_factor_ = eig.eigenvectors() * values.asDiagonal();
  }
  return params;
}

KnockoffParameters KnockoffParameters::equicorrelated(const GaussianModel& model) {
  return build(model, equicorrelated_s(model.covariance()));
}

Eigen::MatrixXd joint_covariance(const GaussianModel& model, const KnockoffParameters& params) {
  const Eigen::Index p = model.dimension();
  Eigen::MatrixXd off = model.covariance();
  off.diagonal() -= params.s();
  Eigen::MatrixXd g(2 * p, 2 * p);
  g.topLeftCorner(p, p) = model.covariance();
  g.bottomRightCorner(p, p) = model.covariance();
  g.topRightCorner(p, p) = off;
  g.bottomLeftCorner(p, p) = off;
  return g;
}

Eigen::MatrixXd sample_knockoffs(const GaussianModel& model, const KnockoffParameters& params,
                                 const Eigen::MatrixXd& x, Rng& rng) {
  const Eigen::Index p = model.dimension();
  if (x.cols() != p || params.s().size() != p)
    throw std::invalid_argument("sample_knockoffs: design columns do not match the model dimension");
  Eigen::MatrixXd centered = x.rowwise() - model.mean().transpose();
  Eigen::MatrixXd out = x - centered * params.conditional_coefficients();
  Eigen::MatrixXd z = standard_normal_matrix(x.rows(), p, rng);
  out.noalias() += z * params.conditional_factor().transpose();
  return out;
}

}  // namespace knockoffs
