#include "knockoffs/simulation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "knockoffs/errors.hpp"

namespace knockoffs {

namespace {

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

// k distinct indices drawn uniformly from `pool` (partial Fisher-Yates).
std::vector<Eigen::Index> sample_without_replacement(std::vector<Eigen::Index> pool, Eigen::Index k, Rng& rng) {
  for (Eigen::Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Eigen::MatrixXd stack_rows(const std::vector<const Eigen::MatrixXd*>& parts) {
  Eigen::Index rows = 0;
  for (auto* m : parts) rows += m->rows();
  Eigen::MatrixXd out(rows, parts.front()->cols());
  Eigen::Index at = 0;
  for (auto* m : parts) {
    out.middleRows(at, m->rows()) = *m;
    at += m->rows();
  }
  return out;
}

}  // namespace

Method Method::parse(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  if (text == "vanilla") return {MethodKind::vanilla, {}};
  if (text == "pooling") return {MethodKind::pooling, {}};
  if (text == "adaptive") return {MethodKind::adaptive, {}};
  if (text == "weighted_lasso") return {MethodKind::weighted_lasso, {}};
  if (text == "pooled_weighted_lasso") return {MethodKind::pooled_weighted_lasso, {}};
  if (text == "lro") return {MethodKind::lro, {}};
  if (text.starts_with("lro:") || (text.starts_with("lro(") && text.ends_with(")"))) {
    std::string_view number = text.substr(4);
    if (text[3] == '(') number.remove_suffix(1);
    number = trim(number);
    double theta = 0.0;
    auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), theta);
    if (ec != std::errc{} || ptr != number.data() + number.size())
      throw std::invalid_argument("invalid lro theta in method '" + std::string(text) + "'");
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("lro theta must lie in [0, 1]");
    return {MethodKind::lro, theta};
  }
  throw std::invalid_argument("unknown method '" + std::string(text) + "'");
}

std::string Method::label() const {
  switch (kind) {
    case MethodKind::vanilla: return "vanilla";
    case MethodKind::pooling: return "pooling";
    case MethodKind::lro: return theta ? "lro:" + format_number(*theta) : "lro";
    case MethodKind::adaptive: return "adaptive";
    case MethodKind::weighted_lasso: return "weighted_lasso";
    case MethodKind::pooled_weighted_lasso: return "pooled_weighted_lasso";
  }
  return "unknown";
}

Eigen::Index ExperimentConfig::shared_signals() const {
  return static_cast<Eigen::Index>(std::floor(overlap * static_cast<double>(n_signals) + 0.5));
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("ExperimentConfig: " + what); };
  if (p < 1) fail("p must be positive");
  if (n_per_env < 2) fail("n_per_env must be at least 2");
  if (n_envs < 1) fail("n_envs must be at least 1");
  if (!(rho > -1.0 && rho < 1.0)) fail("rho must lie in (-1, 1)");
  if (n_signals < 1 || n_signals > p) fail("n_signals must lie in [1, p]");
  if (!(overlap >= 0.0 && overlap <= 1.0)) fail("overlap must lie in [0, 1]");
  if (!std::isfinite(amplitude)) fail("amplitude must be finite");
  if (!(q > 0.0 && q < 1.0)) fail("q must lie in (0, 1)");
  if (offset != 0 && offset != 1) fail("offset must be 0 or 1");
  if (replications < 1) fail("replications must be positive");
  if (methods.empty()) fail("at least one method is required");
  if (n_envs > 1 && 2 * n_signals - shared_signals() > p)
    fail("overlap leaves too few variables for the external support (needs 2*n_signals - shared <= p)");
  for (const Method& m : methods)
    if (n_envs < 2 && m.kind != MethodKind::vanilla) fail("method " + m.label() + " needs external environments");
  if (cv.folds < 2 || cv.folds > n_per_env) fail("cv folds must lie in [2, n_per_env]");
}

Simulator::Simulator(const ExperimentConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      model_(GaussianModel::autoregressive(cfg.p, cfg.rho)),
      params_(KnockoffParameters::equicorrelated(model_)) {}

EnvironmentBundle Simulator::generate(Rng& rng) const {
  const Eigen::Index p = cfg_.p;
  std::vector<Eigen::Index> all(p);
  std::iota(all.begin(), all.end(), Eigen::Index{0});

  std::vector<Eigen::Index> target_support = sample_without_replacement(all, cfg_.n_signals, rng);
  std::vector<Eigen::Index> external_support;
  if (cfg_.n_envs > 1) {
    const Eigen::Index shared = cfg_.shared_signals();
    std::vector<Eigen::Index> kept = sample_without_replacement(target_support, shared, rng);
    std::vector<Eigen::Index> outside;
    std::set_difference(all.begin(), all.end(), target_support.begin(), target_support.end(),
                        std::back_inserter(outside));
    std::vector<Eigen::Index> fresh = sample_without_replacement(outside, cfg_.n_signals - shared, rng);
    external_support = kept;
    external_support.insert(external_support.end(), fresh.begin(), fresh.end());
    std::sort(external_support.begin(), external_support.end());
  }

  Eigen::VectorXd signs = Eigen::VectorXd::Ones(p);
  if (cfg_.random_signs) {
    std::bernoulli_distribution coin(0.5);
    for (Eigen::Index j = 0; j < p; ++j) signs(j) = coin(rng) ? 1.0 : -1.0;
  }
  const double magnitude = cfg_.amplitude / std::sqrt(static_cast<double>(cfg_.n_per_env));

  EnvironmentBundle bundle;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int e = 0; e < cfg_.n_envs; ++e) {
    Environment env;
    env.support = e == 0 ? target_support : external_support;
    env.beta = Eigen::VectorXd::Zero(p);
    for (Eigen::Index j : env.support) env.beta(j) = signs(j) * magnitude;
    env.x = model_.sample(cfg_.n_per_env, rng);
    env.knockoffs = sample_knockoffs(model_, params_, env.x, rng);
    env.y = env.x * env.beta;
    for (Eigen::Index i = 0; i < env.y.size(); ++i) env.y(i) += normal(rng);
    bundle.environments.push_back(std::move(env));
  }
  return bundle;
}

EnvironmentBundle generate_environments(const ExperimentConfig& cfg, Rng& rng) {
  return Simulator(cfg).generate(rng);
}

MetricsRecord score(const DiscoverySet& discoveries, const std::vector<Eigen::Index>& truth) {
  if (truth.empty()) throw std::invalid_argument("score: empty truth set");
  std::vector<Eigen::Index> sorted_truth = truth;
  std::sort(sorted_truth.begin(), sorted_truth.end());
  std::size_t hits = 0;
  for (Eigen::Index j : discoveries.rejected)
    hits += std::binary_search(sorted_truth.begin(), sorted_truth.end(), j);
  MetricsRecord r;
  r.n_discoveries = discoveries.rejected.size();
  r.fdp = static_cast<double>(r.n_discoveries - hits) / static_cast<double>(std::max<std::size_t>(r.n_discoveries, 1));
  r.power = static_cast<double>(hits) / static_cast<double>(sorted_truth.size());
  return r;
}

ReplicationAnalysis::ReplicationAnalysis(const EnvironmentBundle& bundle, const ExperimentConfig& cfg,
                                         std::uint64_t seed)
    : bundle_(bundle), cfg_(cfg), seed_(seed) {}

const AugmentedDesign& ReplicationAnalysis::target_design() {
  if (!target_design_) target_design_ = standardize(bundle_.target().x, bundle_.target().knockoffs);
  return *target_design_;
}

KnockoffFit ReplicationAnalysis::fit_vanilla(const std::vector<std::size_t>& envs, std::uint64_t tag,
                                             const char* label) {
  std::vector<const Eigen::MatrixXd*> xs, ks;
  Eigen::Index rows = 0;
  for (std::size_t e : envs) {
    xs.push_back(&bundle_.environments.at(e).x);
    ks.push_back(&bundle_.environments.at(e).knockoffs);
    rows += bundle_.environments[e].y.size();
  }
  Eigen::VectorXd y(rows);
  Eigen::Index at = 0;
  for (std::size_t e : envs) {
    const auto& part = bundle_.environments[e].y;
    y.segment(at, part.size()) = part;
    at += part.size();
  }
  AugmentedDesign design = standardize(stack_rows(xs), stack_rows(ks));
  Rng rng = make_rng(seed_, {tag});
  return vanilla_statistics(design, y, Family::gaussian, cfg_.cv, rng, label);
}

const KnockoffFit& ReplicationAnalysis::target() {
  if (!target_) {
    Rng rng = make_rng(seed_, {stream::cv_target});
    target_ = vanilla_statistics(target_design(), bundle_.target().y, Family::gaussian, cfg_.cv, rng, "target");
  }
  return *target_;
}

const KnockoffFit& ReplicationAnalysis::external() {
  if (!external_) {
    if (bundle_.environments.size() < 2) throw ContractError("no external environments");
    std::vector<std::size_t> envs(bundle_.environments.size() - 1);
    std::iota(envs.begin(), envs.end(), std::size_t{1});
    external_ = fit_vanilla(envs, stream::cv_external, "external");
  }
  return *external_;
}

const KnockoffFit& ReplicationAnalysis::pooled() {
  if (!pooled_) {
    std::vector<std::size_t> envs(bundle_.environments.size());
    std::iota(envs.begin(), envs.end(), std::size_t{0});
    pooled_ = fit_vanilla(envs, stream::cv_pooled, "pooled");
  }
  return *pooled_;
}

StatisticVector ReplicationAnalysis::lro(double theta) {
  return linear_reorder(target().statistics, external().statistics, theta);
}

const KnockoffFit& ReplicationAnalysis::weighted_lasso() {
  if (!weighted_) {
    PriorInformation prior;
    prior.ext_coefficients = external().fit.coefficients;
    prior.provenance = Provenance::external_only;
    Rng rng = make_rng(seed_, {stream::cv_weighted});
    weighted_ = weighted_lasso_statistics(target_design(), bundle_.target().y, prior, Family::gaussian, cfg_.cv,
                                          rng, false, "target");
  }
  return *weighted_;
}

const KnockoffFit& ReplicationAnalysis::pooled_weighted_lasso() {
  if (!pooled_weighted_) {
    PriorInformation prior;
    prior.ext_coefficients = pooled().fit.coefficients;
    prior.provenance = Provenance::pooled;
    Rng rng = make_rng(seed_, {stream::cv_weighted_pooled});
    pooled_weighted_ = weighted_lasso_statistics(target_design(), bundle_.target().y, prior, Family::gaussian,
                                                 cfg_.cv, rng, cfg_.assume_shared_nulls, "target");
  }
  return *pooled_weighted_;
}

DiscoverySet ReplicationAnalysis::discoveries(const Method& method, std::optional<double> theta) {
  FilterConfig filter{cfg_.q, cfg_.offset};
  switch (method.kind) {
    case MethodKind::vanilla: return threshold_filter(target().statistics.w, filter);
    case MethodKind::pooling: return threshold_filter(pooled().statistics.w, filter);
    case MethodKind::lro: {
      std::optional<double> t = theta ? theta : method.theta;
      if (!t) throw std::invalid_argument("lro needs a theta value");
      return threshold_filter(lro(*t).w, filter);
    }
    case MethodKind::adaptive: {
      Eigen::MatrixXd prior = external().statistics.w.cwiseAbs();
      LogisticOrderingModel model;
      return adaptive_filter(target().statistics.w, prior, model, filter);
    }
    case MethodKind::weighted_lasso: return threshold_filter(weighted_lasso().statistics.w, filter);
    case MethodKind::pooled_weighted_lasso: return threshold_filter(pooled_weighted_lasso().statistics.w, filter);
  }
  throw std::logic_error("unhandled method");
}

}  // namespace knockoffs
