#include "knockoffs/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace knockoffs {

namespace {

double fdr_estimate(int offset, std::size_t negatives, std::size_t positives) {
  return (static_cast<double>(offset) + static_cast<double>(negatives)) /
         static_cast<double>(std::max<std::size_t>(positives, 1));
}

// Average ranks (1-based) with ties sharing their mean rank.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
  Eigen::VectorXd ranks(n);
  for (Eigen::Index start = 0; start < n;) {
    Eigen::Index stop = start;
    while (stop + 1 < n && v(idx[stop + 1]) == v(idx[start])) ++stop;
    const double rank = 0.5 * static_cast<double>(start + stop) + 1.0;
    for (Eigen::Index k = start; k <= stop; ++k) ranks(idx[k]) = rank;
    start = stop + 1;
  }
  return ranks;
}

double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

void FilterConfig::validate() const {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("FilterConfig: q must lie in (0, 1)");
  if (offset != 0 && offset != 1) throw std::invalid_argument("FilterConfig: offset must be 0 or 1");
}

DiscoverySet threshold_filter(const Eigen::VectorXd& w, const FilterConfig& cfg) {
  cfg.validate();
  std::vector<double> positives, negatives, candidates;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (w(j) > 0) positives.push_back(w(j));
    if (w(j) < 0) negatives.push_back(-w(j));
    if (w(j) != 0) candidates.push_back(std::abs(w(j)));
  }
  std::sort(positives.begin(), positives.end());
  std::sort(negatives.begin(), negatives.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  DiscoverySet out;
  bool found = false;
  for (double t : candidates) {
    auto at_least = [t](const std::vector<double>& v) {
      return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), t));
    };
    const double ratio = fdr_estimate(cfg.offset, at_least(negatives), at_least(positives));
    out.trace.push_back({t, ratio});
    if (!found && ratio <= cfg.q) {
      out.threshold = t;
      found = true;
    }
  }
  if (found)
    for (Eigen::Index j = 0; j < w.size(); ++j)
      if (w(j) >= out.threshold) out.rejected.push_back(j);
  return out;
}

std::vector<Eigen::Index> ascending_magnitude_order(const Eigen::VectorXd& w) {
  std::vector<Eigen::Index> order(w.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double ma = std::abs(w(a)), mb = std::abs(w(b));
    if (ma != mb) return ma < mb;
    const bool pa = w(a) > 0, pb = w(b) > 0;
    if (pa != pb) return pa;
    return a < b;
  });
  return order;
}

DiscoverySet sequential_filter(const Eigen::VectorXd& w, std::span<const Eigen::Index> order,
                               const FilterConfig& cfg) {
  cfg.validate();
  const Eigen::Index p = w.size();
  if (static_cast<Eigen::Index>(order.size()) != p)
    throw std::invalid_argument("sequential_filter: ordering length does not match the statistics");
  std::vector<bool> seen(p, false);
  for (Eigen::Index j : order) {
    if (j < 0 || j >= p || seen[j]) throw std::invalid_argument("sequential_filter: ordering is not a permutation");
    seen[j] = true;
  }

  // Counts over order[k..p-1].
  std::vector<std::size_t> pos_after(p + 1, 0), neg_after(p + 1, 0);
  for (Eigen::Index k = p - 1; k >= 0; --k) {
    pos_after[k] = pos_after[k + 1] + (w(order[k]) > 0 ? 1 : 0);
    neg_after[k] = neg_after[k + 1] + (w(order[k]) < 0 ? 1 : 0);
  }

  DiscoverySet out;
  out.ordering.assign(order.begin(), order.end());
  for (Eigen::Index k = 0; k < p; ++k) {
    const double fdr = fdr_estimate(cfg.offset, neg_after[k], pos_after[k]);
    out.trace.push_back({static_cast<double>(k), fdr});
    if (fdr <= cfg.q) {
      out.stop_index = static_cast<std::size_t>(k);
      for (Eigen::Index i = k; i < p; ++i)
        if (w(order[i]) > 0) out.rejected.push_back(order[i]);
      std::sort(out.rejected.begin(), out.rejected.end());
      break;
    }
  }
  return out;
}

LogisticOrderingModel::LogisticOrderingModel(double ridge, int max_iterations, double tolerance)
    : ridge_(ridge), max_iterations_(max_iterations), tolerance_(tolerance) {}

bool LogisticOrderingModel::fit(const OrderingData& data) {
  const Eigen::Index p = data.magnitudes.size();
  const Eigen::Index d = data.prior.cols();
  features_.resize(p, d + 1);
  features_.col(0) = data.magnitudes;
  features_.rightCols(d) = data.prior;
  for (Eigen::Index c = 0; c <= d; ++c) {
    const double rms = std::sqrt(features_.col(c).squaredNorm() / static_cast<double>(p));
    if (rms > 0.0 && std::isfinite(rms)) features_.col(c) /= rms;
  }

  std::vector<Eigen::Index> rows;
  std::vector<double> labels;
  for (std::size_t i = 0; i < data.revealed.size(); ++i) {
    if (data.revealed_signs[i] == 0) continue;
    rows.push_back(data.revealed[i]);
    labels.push_back(data.revealed_signs[i] < 0 ? 1.0 : 0.0);
  }
  theta_ = Eigen::VectorXd::Zero(d + 1);
  if (rows.empty()) return false;

  Eigen::MatrixXd x = features_(rows, Eigen::all);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(labels.data(), static_cast<Eigen::Index>(labels.size()));
  auto objective = [&](const Eigen::VectorXd& theta) {
    Eigen::VectorXd eta = x * theta;
    double value = 0.5 * ridge_ * theta.squaredNorm();
    for (Eigen::Index i = 0; i < eta.size(); ++i) value += log1pexp(eta(i)) - y(i) * eta(i);
    return value;
  };

  // Newton iterations over the coordinates marked free; the others stay 0.
  auto newton = [&](const std::vector<bool>& free) {
    double current = objective(theta_);
    for (int it = 0; it < max_iterations_; ++it) {
      Eigen::VectorXd eta = x * theta_;
      Eigen::VectorXd mu = eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
      Eigen::VectorXd weight = (mu.array() * (1.0 - mu.array())).matrix();
      Eigen::VectorXd grad = x.transpose() * (y - mu) - ridge_ * theta_;
      Eigen::MatrixXd hess = x.transpose() * weight.asDiagonal() * x;
      hess.diagonal().array() += ridge_;
      for (Eigen::Index c = 0; c <= d; ++c) {
        if (free[c]) continue;
        hess.row(c).setZero();
        hess.col(c).setZero();
        hess(c, c) = 1.0;
        grad(c) = 0.0;
      }
      Eigen::VectorXd step = hess.ldlt().solve(grad);
      if (!step.allFinite()) return false;

      double scale = 1.0;
      Eigen::VectorXd candidate = theta_ + step;
      double value = objective(candidate);
      while (value > current && scale > 1e-10) {
        scale *= 0.5;
        candidate = theta_ + scale * step;
        value = objective(candidate);
      }
      const double moved = (candidate - theta_).cwiseAbs().maxCoeff();
      theta_ = candidate;
      current = value;
      if (moved < tolerance_) return theta_.allFinite();
    }
    return false;
  };

  std::vector<bool> free(d + 1, true);
  if (!newton(free)) return false;
  // A larger |w| never makes a negative sign more likely. If the free fit
  // says otherwise, the constrained optimum has theta_1 = 0 (one linear
  // constraint on a convex objective), so refit with it pinned.
  if (theta_(0) > 0.0) {
    free[0] = false;
    theta_(0) = 0.0;
    return newton(free);
  }
  return true;
}

double LogisticOrderingModel::score(Eigen::Index j) const {
  return 1.0 / (1.0 + std::exp(-features_.row(j).dot(theta_)));
}

DiscoverySet adaptive_filter(const Eigen::VectorXd& w, const Eigen::MatrixXd& prior, OrderingModel& model,
                             const FilterConfig& cfg, const AdaptiveOptions& options) {
  cfg.validate();
  const Eigen::Index p = w.size();
  if (prior.rows() != p) throw std::invalid_argument("adaptive_filter: prior rows do not match the statistics");
  if (prior.cols() < 1) throw std::invalid_argument("adaptive_filter: prior needs at least one column");

  const Eigen::VectorXd magnitudes = w.cwiseAbs();
  const std::size_t warmup =
      options.warmup.value_or(std::max<std::size_t>(10, static_cast<std::size_t>(p) / 20));

  Eigen::VectorXd cold = average_ranks(magnitudes);
  for (Eigen::Index c = 0; c < prior.cols(); ++c) cold += average_ranks(prior.col(c));
  cold = -cold / static_cast<double>(prior.cols() + 1);

  std::vector<bool> masked(p, true);
  std::size_t masked_pos = 0, masked_neg = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    masked_pos += w(j) > 0;
    masked_neg += w(j) < 0;
  }
  std::vector<Eigen::Index> revealed;
  std::vector<int> signs;
  Eigen::VectorXd score(p);

  DiscoverySet out;
  for (Eigen::Index k = 0; k < p; ++k) {
    const double fdr = fdr_estimate(cfg.offset, masked_neg, masked_pos);
    out.trace.push_back({static_cast<double>(k), fdr});
    if (fdr <= cfg.q) {
      out.stop_index = static_cast<std::size_t>(k);
      for (Eigen::Index j = 0; j < p; ++j)
        if (masked[j] && w(j) > 0) out.rejected.push_back(j);
      break;
    }
    if (k == p - 1) break;

    bool scored = false;
    if (static_cast<std::size_t>(k) < warmup) {
      score = cold;
      scored = true;
    } else if (model.fit(OrderingData{magnitudes, prior, revealed, signs})) {
      scored = true;
      for (Eigen::Index j = 0; j < p && scored; ++j) {
        score(j) = masked[j] ? model.score(j) : 0.0;
        scored = std::isfinite(score(j));
      }
    }
    if (!scored) score = -magnitudes;

    Eigen::Index next = -1;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!masked[j]) continue;
      if (next < 0 || score(j) > score(next) ||
          (score(j) == score(next) && magnitudes(j) < magnitudes(next)))
        next = j;
    }
    masked[next] = false;
    masked_pos -= w(next) > 0;
    masked_neg -= w(next) < 0;
    revealed.push_back(next);
    signs.push_back(w(next) > 0 ? 1 : (w(next) < 0 ? -1 : 0));
  }

  out.ordering = revealed;
  std::vector<Eigen::Index> rest;
  for (Eigen::Index j = 0; j < p; ++j)
    if (masked[j]) rest.push_back(j);
  std::stable_sort(rest.begin(), rest.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return magnitudes(a) < magnitudes(b); });
  out.ordering.insert(out.ordering.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace knockoffs
