#include "knockoffs/statistics.hpp"

#include <cmath>
#include <stdexcept>

#include "knockoffs/errors.hpp"

namespace knockoffs {

const char* to_string(Construction c) {
  switch (c) {
    case Construction::vanilla: return "vanilla";
    case Construction::lro: return "lro";
    case Construction::weighted_lasso: return "weighted_lasso";
    case Construction::pooled_weighted_lasso: return "pooled_weighted_lasso";
  }
  return "unknown";
}

void PriorInformation::validate() const {
  if (!ext_statistics && !ext_coefficients && !phi && multi_sources.empty())
    throw std::invalid_argument("PriorInformation: no field is populated");
  if (phi && (!phi->allFinite() || (phi->array() <= 0.0).any()))
    throw std::invalid_argument("PriorInformation: phi must be finite and strictly positive");
  if (ext_coefficients && ext_coefficients->size() % 2 != 0)
    throw std::invalid_argument("PriorInformation: coefficient vectors must have length 2p");
}

Eigen::VectorXd PriorInformation::resolve_phi(Eigen::Index p, double ridge) const {
  validate();
  if (phi) {
    if (phi->size() != p) throw std::invalid_argument("PriorInformation: phi has the wrong length");
    Eigen::VectorXd out(2 * p);
    out << *phi, *phi;
    return out;
  }
  if (ext_coefficients) {
    if (ext_coefficients->size() != 2 * p)
      throw std::invalid_argument("PriorInformation: external coefficients have the wrong length");
    return prior_weights(*ext_coefficients, true, ridge);
  }
  if (!multi_sources.empty()) {
    Eigen::VectorXd mean = combine_multi_priors(multi_sources);
    if (mean.size() != 2 * p) throw std::invalid_argument("PriorInformation: prior sources have the wrong length");
    return prior_weights(mean, true, ridge);
  }
  throw ContractError("PriorInformation: weights cannot be derived from external statistics alone");
}

StatisticVector lasso_statistics(const FitResult& fit, Construction construction, std::string environment) {
  const Eigen::Index m = fit.coefficients.size();
  if (m % 2 != 0) throw std::invalid_argument("lasso_statistics: expected 2p coefficients");
  const Eigen::Index p = m / 2;
  StatisticVector out;
  out.w = fit.coefficients.head(p).cwiseAbs() - fit.coefficients.tail(p).cwiseAbs();
  out.construction = construction;
  out.environment = std::move(environment);
  return out;
}

StatisticVector linear_reorder(const StatisticVector& w0, const StatisticVector& wext, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("linear_reorder: theta must lie in [0, 1]");
  if (w0.size() != wext.size()) throw std::invalid_argument("linear_reorder: statistic lengths differ");
  StatisticVector out;
  out.w.resize(w0.size());
  for (Eigen::Index j = 0; j < w0.size(); ++j) {
    const double sign = w0.w(j) > 0.0 ? 1.0 : (w0.w(j) < 0.0 ? -1.0 : 0.0);
    out.w(j) = sign * ((1.0 - theta) * std::abs(w0.w(j)) + theta * std::abs(wext.w(j)));
  }
  out.construction = Construction::lro;
  out.environment = w0.environment;
  return out;
}

Eigen::VectorXd prior_weights(const Eigen::VectorXd& ext_coefficients, bool duplicate, double ridge) {
  if (ext_coefficients.size() % 2 != 0) throw std::invalid_argument("prior_weights: expected 2p coefficients");
  if (!(ridge > 0.0)) throw std::invalid_argument("prior_weights: ridge must be positive");
  const Eigen::Index p = ext_coefficients.size() / 2;
  Eigen::VectorXd phi =
      (ridge + ext_coefficients.head(p).cwiseAbs().array() + ext_coefficients.tail(p).cwiseAbs().array()).inverse();
  if (!duplicate) return phi;
  Eigen::VectorXd out(2 * p);
  out << phi, phi;
  return out;
}

Eigen::VectorXd combine_multi_priors(const std::vector<Eigen::VectorXd>& sources) {
  if (sources.empty()) throw std::invalid_argument("combine_multi_priors: no sources");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(sources.front().size());
  for (const auto& s : sources) {
    if (s.size() != sum.size()) throw std::invalid_argument("combine_multi_priors: sources differ in length");
    sum += s;
  }
  return sum / static_cast<double>(sources.size());
}

KnockoffFit vanilla_statistics(const AugmentedDesign& design, const Eigen::VectorXd& y, Family family,
                               const CvConfig& cv, Rng& rng, std::string environment) {
  CvConfig lasso = cv;
  lasso.gamma_grid = {0.0};
  Eigen::VectorXd phi = Eigen::VectorXd::Ones(design.columns());
  CvResult tuned = cross_validate(design, y, family, phi, lasso, rng);
  FitResult fit = fit_weighted_lasso(design, y, tuned.penalty, family, cv.solver);
  StatisticVector stats = lasso_statistics(fit, Construction::vanilla, std::move(environment));
  return {std::move(stats), std::move(fit), std::move(tuned.penalty)};
}

KnockoffFit weighted_lasso_statistics(const AugmentedDesign& design, const Eigen::VectorXd& y,
                                      const PriorInformation& prior, Family family, const CvConfig& cv, Rng& rng,
                                      bool shared_nulls_asserted, std::string environment) {
  if (prior.provenance == Provenance::pooled && !shared_nulls_asserted)
    throw ContractError("weighted_lasso_statistics: a pooled prior requires the shared-null assumption");
  Eigen::VectorXd phi = prior.resolve_phi(design.n_features());
  CvResult tuned = cross_validate(design, y, family, phi, cv, rng);
  FitResult fit = fit_weighted_lasso(design, y, tuned.penalty, family, cv.solver);
  Construction tag =
      prior.provenance == Provenance::pooled ? Construction::pooled_weighted_lasso : Construction::weighted_lasso;
  StatisticVector stats = lasso_statistics(fit, tag, std::move(environment));
  return {std::move(stats), std::move(fit), std::move(tuned.penalty)};
}

}  // namespace knockoffs
