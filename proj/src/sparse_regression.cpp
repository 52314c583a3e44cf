#include "knockoffs/sparse_regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "knockoffs/errors.hpp"

namespace knockoffs {

namespace {

constexpr double kMinCurvature = 1e-12;
constexpr double kSaturatedFit = 0.999;
constexpr double kPathFlatness = 1e-5;
constexpr int kMinPathPoints = 5;

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double sigmoid(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

// Gram operator backed by a precomputed dense matrix.
class DenseGram {
 public:
  explicit DenseGram(const Eigen::MatrixXd& gram) : gram_(gram) {}
  double diag(Eigen::Index j) const { return gram_(j, j); }
  auto column(Eigen::Index j) const { return gram_.col(j); }

 private:
  const Eigen::MatrixXd& gram_;
};

// Weighted, centered Gram (1/n) (Z - m)^T W (Z - m) with columns computed on
// first use. Only columns of coefficients that ever become nonzero are built.
class WeightedColumnGram {
 public:
  WeightedColumnGram(const Eigen::MatrixXd& z, const Eigen::VectorXd& w)
      : z_(z), w_(w), n_(static_cast<double>(z.rows())), cache_(z.cols()), ready_(z.cols(), false) {
    const double total = w.sum();
    means_ = z.transpose() * w / total;
    diag_.resize(z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      diag_(j) = (w.array() * (z.col(j).array() - means_(j)).square()).sum() / n_;
  }

  double diag(Eigen::Index j) const { return diag_(j); }
  const Eigen::VectorXd& means() const { return means_; }

  const Eigen::VectorXd& column(Eigen::Index j) {
    if (!ready_[j]) {
      Eigen::VectorXd v = w_.array() * (z_.col(j).array() - means_(j));
      cache_[j] = (z_.transpose() * v - means_ * v.sum()) / n_;
      ready_[j] = true;
    }
    return cache_[j];
  }

 private:
  const Eigen::MatrixXd& z_;
  const Eigen::VectorXd& w_;
  double n_;
  Eigen::VectorXd means_;
  Eigen::VectorXd diag_;
  std::vector<Eigen::VectorXd> cache_;
  std::vector<bool> ready_;
};

struct DescentStats {
  bool converged = false;
  int sweeps = 0;
};

// Cyclic coordinate descent for
//   0.5 b^T G b - c^T b + sum_j pen_j |b_j|
// keeping resid = c - G b up to date. Alternates a full sweep with sweeps
// restricted to the current active set until a full sweep moves no
// coefficient by more than tol.
template <class Gram>
DescentStats coordinate_descent(Gram& gram, const Eigen::VectorXd& pen, Eigen::VectorXd& beta,
                                Eigen::VectorXd& resid, double tol, int max_sweeps) {
  const Eigen::Index m = beta.size();
  DescentStats stats;
  auto update = [&](Eigen::Index j) {
    const double gjj = gram.diag(j);
    if (gjj <= kMinCurvature) return 0.0;
    const double bj = beta(j);
    const double fresh = soft_threshold(resid(j) + gjj * bj, pen(j)) / gjj;
    const double delta = fresh - bj;
    if (delta != 0.0) {
      beta(j) = fresh;
      resid.noalias() -= delta * gram.column(j);
    }
    return std::abs(delta);
  };

  std::vector<Eigen::Index> active;
  Eigen::MatrixXd block;
  Eigen::VectorXd block_resid, block_beta, block_start;
  while (stats.sweeps < max_sweeps) {
    double largest = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) largest = std::max(largest, update(j));
    ++stats.sweeps;
    if (largest < tol) {
      stats.converged = true;
      break;
    }
    active.clear();
    for (Eigen::Index j = 0; j < m; ++j)
      if (beta(j) != 0.0) active.push_back(j);

    // Active-set iterations touch only the |A| x |A| block; the full
    // residual is brought up to date once they finish.
    const Eigen::Index a = static_cast<Eigen::Index>(active.size());
    block.resize(a, a);
    for (Eigen::Index k = 0; k < a; ++k) {
      const auto col = gram.column(active[k]);
      for (Eigen::Index i = 0; i < a; ++i) block(i, k) = col(active[i]);
    }
    block_resid = resid(active);
    block_beta = beta(active);
    block_start = block_beta;
    while (stats.sweeps < max_sweeps) {
      largest = 0.0;
      for (Eigen::Index k = 0; k < a; ++k) {
        const double gkk = block(k, k);
        if (gkk <= kMinCurvature) continue;
        const double bk = block_beta(k);
        const double fresh = soft_threshold(block_resid(k) + gkk * bk, pen(active[k])) / gkk;
        const double delta = fresh - bk;
        if (delta != 0.0) {
          block_beta(k) = fresh;
          block_resid.noalias() -= delta * block.col(k);
          largest = std::max(largest, std::abs(delta));
        }
      }
      ++stats.sweeps;
      if (largest < tol) break;
    }
    for (Eigen::Index k = 0; k < a; ++k) {
      const double delta = block_beta(k) - block_start(k);
      if (delta != 0.0) {
        beta(active[k]) = block_beta(k);
        resid.noalias() -= delta * gram.column(active[k]);
      }
    }
  }
  return stats;
}

// Sufficient statistics of (z, y) rows; differences give training folds.
struct Moments {
  Eigen::MatrixXd zz;
  Eigen::VectorXd zs;
  Eigen::VectorXd zy;
  double ys = 0.0;
  double yy = 0.0;
  double count = 0.0;

  Moments operator-(const Moments& other) const {
    Moments out;
    out.zz = zz - other.zz;
    out.zs = zs - other.zs;
    out.zy = zy - other.zy;
    out.ys = ys - other.ys;
    out.yy = yy - other.yy;
    out.count = count - other.count;
    return out;
  }
};

Moments compute_moments(const Eigen::MatrixXd& z, const Eigen::VectorXd& y) {
  Moments m;
  const Eigen::Index k = z.cols();
  m.zz = Eigen::MatrixXd::Zero(k, k);
  m.zz.selfadjointView<Eigen::Lower>().rankUpdate(z.transpose());
  m.zz = m.zz.selfadjointView<Eigen::Lower>();
  m.zs = z.colwise().sum().transpose();
  m.zy = z.transpose() * y;
  m.ys = y.sum();
  m.yy = y.squaredNorm();
  m.count = static_cast<double>(z.rows());
  return m;
}

// Centered least-squares system of a set of rows.
struct QuadraticSystem {
  Eigen::MatrixXd gram;
  Eigen::VectorXd linear;
  Eigen::VectorXd means;
  double y_mean = 0.0;
  double y_var = 0.0;
};

QuadraticSystem quadratic_system(const Moments& m) {
  QuadraticSystem sys;
  const double n = m.count;
  sys.means = m.zs / n;
  sys.y_mean = m.ys / n;
  sys.gram = m.zz / n - sys.means * sys.means.transpose();
  sys.linear = m.zy / n - sys.means * sys.y_mean;
  sys.y_var = std::max(0.0, m.yy / n - sys.y_mean * sys.y_mean);
  return sys;
}

bool path_saturated(double explained, double previous, std::size_t index) {
  if (explained > kSaturatedFit) return true;
  return index + 1 >= static_cast<std::size_t>(kMinPathPoints) && explained > 0.0 &&
         (explained - previous) < kPathFlatness * explained;
}

double binomial_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    // log(1 + exp(eta)) - y * eta, computed stably
    double e = eta(i);
    double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    dev += 2.0 * (softplus - y(i) * e);
  }
  return dev;
}

// Warm-started solution path, advanced one lambda at a time.
class GaussianPath {
 public:
  GaussianPath(const QuadraticSystem& sys, const Eigen::VectorXd& factors, const SolverOptions& opt)
      : sys_(sys), gram_(sys.gram), factors_(factors), opt_(opt),
        beta_(Eigen::VectorXd::Zero(sys.linear.size())), resid_(sys.linear) {}

  void advance(double lambda) {
    Eigen::VectorXd pen = lambda * factors_;
    DescentStats stats = coordinate_descent(gram_, pen, beta_, resid_, opt_.tolerance, opt_.max_sweeps);
    converged_ = converged_ && stats.converged;
    sweeps_ += stats.sweeps;
    if (sys_.y_var > 0.0) {
      double explained = (sys_.linear.dot(beta_) + beta_.dot(resid_)) / sys_.y_var;
      saturated_ = path_saturated(explained, explained_, steps_);
      explained_ = explained;
    }
    ++steps_;
  }

  const Eigen::VectorXd& beta() const { return beta_; }
  double intercept() const { return sys_.y_mean - sys_.means.dot(beta_); }
  bool saturated() const { return saturated_; }
  bool converged() const { return converged_; }
  int sweeps() const { return sweeps_; }
  int outer() const { return 0; }

 private:
  const QuadraticSystem& sys_;
  DenseGram gram_;
  const Eigen::VectorXd& factors_;
  const SolverOptions& opt_;
  Eigen::VectorXd beta_;
  Eigen::VectorXd resid_;
  double explained_ = 0.0;
  std::size_t steps_ = 0;
  bool saturated_ = false;
  bool converged_ = true;
  int sweeps_ = 0;
};

// IRLS around weighted coordinate descent, warm-started along the path.
class BinomialPath {
 public:
  BinomialPath(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& factors,
               const SolverOptions& opt)
      : z_(z), y_(y), factors_(factors), opt_(opt), beta_(Eigen::VectorXd::Zero(z.cols())) {
    const double ybar = y.mean();
    intercept_ = std::log(ybar / (1.0 - ybar));
    null_dev_ = binomial_deviance(y, Eigen::VectorXd::Constant(y.size(), intercept_));
  }

  void advance(double lambda) {
    const Eigen::Index n = z_.rows();
    const Eigen::Index m = z_.cols();
    Eigen::VectorXd pen = lambda * factors_;
    bool outer_converged = false;
    for (int step = 0; step < opt_.max_irls; ++step) {
      ++outer_;
      Eigen::VectorXd eta = (z_ * beta_).array() + intercept_;
      Eigen::VectorXd w(n), work(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        double mu = sigmoid(eta(i));
        w(i) = std::max(mu * (1.0 - mu), opt_.weight_floor);
        work(i) = eta(i) + (y_(i) - mu) / w(i);
      }
      WeightedColumnGram gram(z_, w);
      const double work_bar = w.dot(work) / w.sum();
      Eigen::VectorXd centered = w.array() * (work.array() - work_bar);
      Eigen::VectorXd resid =
          (z_.transpose() * centered - gram.means() * centered.sum()) / static_cast<double>(n);
      for (Eigen::Index j = 0; j < m; ++j)
        if (beta_(j) != 0.0) resid.noalias() -= beta_(j) * gram.column(j);

      Eigen::VectorXd before = beta_;
      const double intercept_before = intercept_;
      DescentStats stats = coordinate_descent(gram, pen, beta_, resid, opt_.tolerance, opt_.max_sweeps);
      sweeps_ += stats.sweeps;
      intercept_ = work_bar - gram.means().dot(beta_);
      double change = std::max((beta_ - before).cwiseAbs().maxCoeff(), std::abs(intercept_ - intercept_before));
      if (!stats.converged) break;
      if (change < opt_.tolerance) {
        outer_converged = true;
        break;
      }
    }
    converged_ = converged_ && outer_converged;
    if (null_dev_ > 0.0) {
      Eigen::VectorXd eta = (z_ * beta_).array() + intercept_;
      double explained = 1.0 - binomial_deviance(y_, eta) / null_dev_;
      saturated_ = path_saturated(explained, explained_, steps_);
      explained_ = explained;
    }
    ++steps_;
  }

  const Eigen::VectorXd& beta() const { return beta_; }
  double intercept() const { return intercept_; }
  bool saturated() const { return saturated_; }
  bool converged() const { return converged_; }
  int sweeps() const { return sweeps_; }
  int outer() const { return outer_; }

 private:
  const Eigen::MatrixXd& z_;
  const Eigen::VectorXd& y_;
  const Eigen::VectorXd& factors_;
  const SolverOptions& opt_;
  Eigen::VectorXd beta_;
  double intercept_ = 0.0;
  double null_dev_ = 0.0;
  double explained_ = 0.0;
  std::size_t steps_ = 0;
  bool saturated_ = false;
  bool converged_ = true;
  int sweeps_ = 0;
  int outer_ = 0;
};

template <class Path>
FitResult run_to_target(Path& path, const std::vector<double>& lambdas, Family family) {
  for (double lambda : lambdas) path.advance(lambda);
  FitResult fit;
  fit.coefficients = path.beta();
  fit.intercept = path.intercept();
  fit.family = family;
  fit.converged = path.converged();
  fit.iterations = path.sweeps();
  fit.outer_iterations = path.outer();
  return fit;
}

bool is_binary(const Eigen::VectorXd& y) {
  return (y.array() == 0.0 || y.array() == 1.0).all();
}

void check_response(const AugmentedDesign& design, const Eigen::VectorXd& y, Family family) {
  if (y.size() != design.rows()) throw std::invalid_argument("response length does not match the design rows");
  if (!y.allFinite()) throw DataError("response contains non-finite values");
  if (family == Family::binomial) {
    if (!is_binary(y)) throw std::invalid_argument("binomial family requires a 0/1 response");
    double ybar = y.mean();
    if (ybar == 0.0 || ybar == 1.0) throw DataError("binomial response has a single class");
  }
}

Eigen::VectorXd centered_correlation(const AugmentedDesign& design, const Eigen::VectorXd& y) {
  Eigen::VectorXd yc = y.array() - y.mean();
  Eigen::VectorXd means = design.z.colwise().mean().transpose();
  return (design.z.transpose() * yc - means * yc.sum()) / static_cast<double>(design.rows());
}

std::vector<double> log_grid(double top, double ratio, int points) {
  std::vector<double> grid(points);
  for (int k = 0; k < points; ++k)
    grid[k] = points == 1 ? top : top * std::pow(ratio, static_cast<double>(k) / (points - 1));
  return grid;
}

std::vector<double> warm_start_path(double top, double target, const SolverOptions& opt) {
  std::vector<double> path;
  if (opt.path_points > 1)
    for (double v : log_grid(top, opt.path_min_ratio, opt.path_points))
      if (v > target) path.push_back(v);
  path.push_back(target);
  return path;
}

}  // namespace

AugmentedDesign standardize(const Eigen::MatrixXd& raw) {
  if (raw.rows() < 2) throw std::invalid_argument("standardize: at least two rows are required");
  AugmentedDesign d;
  const Eigen::Index cols = raw.cols();
  d.z.resize(raw.rows(), cols);
  d.col_means.resize(cols);
  d.col_scales.resize(cols);
  d.zero_variance.assign(cols, false);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double mean = raw.col(j).mean();
    Eigen::VectorXd centered = raw.col(j).array() - mean;
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(raw.rows()));
    d.col_means(j) = mean;
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
      d.col_scales(j) = 1.0;
      d.zero_variance[j] = true;
      d.z.col(j).setZero();
    } else {
      d.col_scales(j) = sd;
      d.z.col(j) = centered / sd;
    }
  }
  return d;
}

AugmentedDesign standardize(const Eigen::MatrixXd& x, const Eigen::MatrixXd& knockoffs) {
  if (x.rows() != knockoffs.rows() || x.cols() != knockoffs.cols())
    throw std::invalid_argument("standardize: originals and knockoffs differ in shape");
  Eigen::MatrixXd raw(x.rows(), 2 * x.cols());
  raw << x, knockoffs;
  return standardize(raw);
}

Eigen::VectorXd penalty_factors(const Eigen::VectorXd& phi, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (phi.size() == 0 || phi.size() % 2 != 0)
    throw std::invalid_argument("phi must have an even, nonzero length (2p)");
  if (!phi.allFinite() || (phi.array() <= 0.0).any()) throw std::invalid_argument("phi must be finite and positive");
  const Eigen::Index p = phi.size() / 2;
  if (phi.head(p) != phi.tail(p)) throw std::invalid_argument("phi must satisfy phi_j == phi_{j+p}");
  Eigen::VectorXd raw = (1.0 - gamma) + gamma * phi.array();
  return raw / raw.mean();
}

PenaltySpec::PenaltySpec(double lambda, double gamma, Eigen::VectorXd phi)
    : lambda_(lambda), gamma_(gamma), phi_(std::move(phi)) {
  if (!(lambda_ >= 0.0) || !std::isfinite(lambda_)) throw std::invalid_argument("lambda must be finite and nonnegative");
  factors_ = penalty_factors(phi_, gamma_);
}

PenaltySpec PenaltySpec::uniform(double lambda, Eigen::Index columns) {
  return PenaltySpec(lambda, 0.0, Eigen::VectorXd::Ones(columns));
}

double lambda_max(const AugmentedDesign& design, const Eigen::VectorXd& y, Family family,
                  const Eigen::VectorXd& factors) {
  check_response(design, y, family);
  if (factors.size() != design.columns()) throw std::invalid_argument("penalty factors do not match the design");
  Eigen::VectorXd c = centered_correlation(design, y);
  return (c.cwiseAbs().array() / factors.array()).maxCoeff();
}

FitResult fit_weighted_lasso(const AugmentedDesign& design, const Eigen::VectorXd& y, const PenaltySpec& penalty,
                             Family family, const SolverOptions& options) {
  check_response(design, y, family);
  if (penalty.factors().size() != design.columns())
    throw std::invalid_argument("penalty length does not match the design columns");

  const double top = lambda_max(design, y, family, penalty.factors());
  std::vector<double> path = warm_start_path(top, penalty.lambda(), options);

  if (family == Family::gaussian) {
    Eigen::VectorXd yc = y.array() - y.mean();
    QuadraticSystem sys = quadratic_system(compute_moments(design.z, yc));
    GaussianPath solver(sys, penalty.factors(), options);
    FitResult fit = run_to_target(solver, path, family);
    fit.intercept += y.mean();
    return fit;
  }
  BinomialPath solver(design.z, y, penalty.factors(), options);
  return run_to_target(solver, path, family);
}

Eigen::VectorXd smooth_gradient(const AugmentedDesign& design, const Eigen::VectorXd& y, const FitResult& fit) {
  Eigen::VectorXd eta = (design.z * fit.coefficients).array() + fit.intercept;
  Eigen::VectorXd resid(y.size());
  if (fit.family == Family::gaussian) {
    resid = y - eta;
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) resid(i) = y(i) - sigmoid(eta(i));
  }
  return -(design.z.transpose() * resid) / static_cast<double>(y.size());
}

double kkt_residual(const AugmentedDesign& design, const Eigen::VectorXd& y, const FitResult& fit,
                    const PenaltySpec& penalty) {
  Eigen::VectorXd g = smooth_gradient(design, y, fit);
  Eigen::VectorXd pen = penalty.penalties();
  double worst = 0.0;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double b = fit.coefficients(j);
    double v = b == 0.0 ? std::max(0.0, std::abs(g(j)) - pen(j)) : std::abs(g(j) + pen(j) * (b > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

CvResult cross_validate(const AugmentedDesign& design, const Eigen::VectorXd& y, Family family,
                        const Eigen::VectorXd& phi, const CvConfig& config, Rng& rng) {
  check_response(design, y, family);
  const Eigen::Index n = design.rows();
  if (config.folds < 2) throw std::invalid_argument("cross_validate: at least two folds are required");
  if (config.folds > n) throw std::invalid_argument("cross_validate: more folds than observations");
  if (config.gamma_grid.empty()) throw std::invalid_argument("cross_validate: empty gamma grid");
  if (config.lambda_grid.empty() && config.n_lambda < 1) throw std::invalid_argument("cross_validate: empty lambda grid");
  if (phi.size() != design.columns()) throw std::invalid_argument("cross_validate: phi does not match the design");
  {
    const double mean = y.mean();
    if ((y.array() - mean).square().sum() <= 0.0) throw DataError("cross_validate: response has zero variance");
  }
  for (double v : config.lambda_grid)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("cross_validate: invalid lambda value");

  // Fold labels from a seeded shuffle.
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Eigen::Index>> held_out(config.folds), training(config.folds);
  {
    std::vector<int> label(n);
    for (Eigen::Index i = 0; i < n; ++i) label[order[i]] = static_cast<int>(i % config.folds);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int f = 0; f < config.folds; ++f) (label[i] == f ? held_out[f] : training[f]).push_back(i);
  }

  const double y_shift = y.mean();
  Eigen::VectorXd yc = y.array() - y_shift;

  // Gaussian folds share one set of full-data moments.
  std::vector<QuadraticSystem> systems;
  std::vector<Eigen::MatrixXd> train_z;
  std::vector<Eigen::VectorXd> train_y;
  if (family == Family::gaussian) {
    Moments total = compute_moments(design.z, yc);
    for (int f = 0; f < config.folds; ++f) {
      Moments part = compute_moments(design.z(held_out[f], Eigen::all), yc(held_out[f]));
      systems.push_back(quadratic_system(total - part));
    }
  } else {
    for (int f = 0; f < config.folds; ++f) {
      train_z.push_back(design.z(training[f], Eigen::all));
      train_y.push_back(y(training[f]));
      const double ybar = train_y.back().mean();
      if (ybar == 0.0 || ybar == 1.0) throw DataError("cross_validate: a training fold has a single class");
    }
  }

  std::vector<Eigen::MatrixXd> fold_z;
  for (int f = 0; f < config.folds; ++f) fold_z.push_back(design.z(held_out[f], Eigen::all));

  CvResult result{PenaltySpec::uniform(0.0, design.columns()), {}, {}, {}};
  bool have_best = false;
  double best_loss = std::numeric_limits<double>::infinity();
  double best_lambda = 0.0, best_gamma = 0.0;

  for (double gamma : config.gamma_grid) {
    Eigen::VectorXd factors = penalty_factors(phi, gamma);
    std::vector<double> lambdas = config.lambda_grid;
    if (lambdas.empty()) {
      double top = lambda_max(design, y, family, factors);
      if (!(top > 0.0)) top = std::numeric_limits<double>::min();
      lambdas = log_grid(top, config.lambda_min_ratio, config.n_lambda);
    }
    std::vector<double> mean_loss(lambdas.size(), std::numeric_limits<double>::infinity());

    // All folds walk the grid together so the path can stop early.
    std::vector<GaussianPath> gauss;
    std::vector<BinomialPath> binom;
    for (int f = 0; f < config.folds; ++f) {
      if (family == Family::gaussian)
        gauss.emplace_back(systems[f], factors, config.solver);
      else
        binom.emplace_back(train_z[f], train_y[f], factors, config.solver);
    }
    double gamma_best = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
      double loss = 0.0;
      bool saturated = false;
      for (int f = 0; f < config.folds; ++f) {
        const auto& rows = held_out[f];
        Eigen::VectorXd eta;
        if (family == Family::gaussian) {
          gauss[f].advance(lambdas[k]);
          saturated = saturated || gauss[f].saturated();
          eta = (fold_z[f] * gauss[f].beta()).array() + gauss[f].intercept();
          loss += (yc(rows) - eta).squaredNorm();
        } else {
          binom[f].advance(lambdas[k]);
          saturated = saturated || binom[f].saturated();
          eta = (fold_z[f] * binom[f].beta()).array() + binom[f].intercept();
          loss += binomial_deviance(y(rows), eta);
        }
      }
      const double l = loss / static_cast<double>(n);
      mean_loss[k] = l;
      if (std::isfinite(l)) {
        bool better = !have_best || l < best_loss ||
                      (l == best_loss && (lambdas[k] > best_lambda || (lambdas[k] == best_lambda && gamma < best_gamma)));
        if (better) {
          have_best = true;
          best_loss = l;
          best_lambda = lambdas[k];
          best_gamma = gamma;
        }
      }
      if (l < gamma_best) {
        gamma_best = l;
        stale = 0;
      } else {
        ++stale;
      }
      if (saturated || (config.patience > 0 && stale >= config.patience)) break;
    }
    result.gammas.push_back(gamma);
    result.lambdas.push_back(std::move(lambdas));
    result.mean_loss.push_back(std::move(mean_loss));
  }
  if (!have_best) throw DataError("cross_validate: no grid point produced a finite held-out loss");
  result.penalty = PenaltySpec(best_lambda, best_gamma, phi);
  return result;
}

}  // namespace knockoffs
