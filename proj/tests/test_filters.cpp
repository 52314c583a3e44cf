#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "knockoffs/filters.hpp"
#include "knockoffs/random.hpp"

using namespace knockoffs;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
  return Eigen::Map<const Eigen::VectorXd>(values.begin(), static_cast<Eigen::Index>(values.size()));
}

// Direct enumeration of the threshold rule over every candidate magnitude.
std::vector<Eigen::Index> brute_force_threshold(const Eigen::VectorXd& w, double q, int offset, double& t_out) {
  t_out = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < w.size(); ++c) {
    const double t = std::abs(w(c));
    if (t == 0.0) continue;
    double neg = offset, pos = 0;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      if (w(j) <= -t) neg += 1;
      if (w(j) >= t) pos += 1;
    }
    if (neg / std::max(pos, 1.0) <= q) t_out = std::min(t_out, t);
  }
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < w.size(); ++j)
    if (w(j) >= t_out) out.push_back(j);
  return out;
}

Eigen::VectorXd random_statistics(Rng& rng, Eigen::Index p) {
  std::uniform_real_distribution<double> unif;
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> small(1, 4);
  Eigen::VectorXd w(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double u = unif(rng);
    if (u < 0.1) {
      w(j) = 0.0;
    } else if (u < 0.3) {
      w(j) = 1.0 + std::abs(normal(rng)) * 3.0;  // signal-like
    } else if (u < 0.4) {
      w(j) = (unif(rng) < 0.5 ? -1.0 : 1.0) * small(rng);  // repeated magnitudes
    } else {
      w(j) = normal(rng);
    }
  }
  return w;
}

// Orders by a fixed score vector supplied at construction.
class FixedScoreModel : public OrderingModel {
 public:
  explicit FixedScoreModel(Eigen::VectorXd scores) : scores_(std::move(scores)) {}
  bool fit(const OrderingData&) override { return true; }
  double score(Eigen::Index j) const override { return scores_(j); }

 private:
  Eigen::VectorXd scores_;
};

// score = -prior(j, 0): hypotheses with little prior support are peeled first.
class NegativePriorModel : public OrderingModel {
 public:
  bool fit(const OrderingData& data) override {
    prior_ = data.prior.col(0);
    return true;
  }
  double score(Eigen::Index j) const override { return -prior_(j); }

 private:
  Eigen::VectorXd prior_;
};

class FailingModel : public OrderingModel {
 public:
  bool fit(const OrderingData&) override { return false; }
  double score(Eigen::Index) const override { return std::numeric_limits<double>::quiet_NaN(); }
};

// Records every sign it was shown.
class SpyModel : public OrderingModel {
 public:
  bool fit(const OrderingData& data) override {
    for (int s : data.revealed_signs) seen_.push_back(s);
    count_ = data.revealed.size();
    magnitudes_ = data.magnitudes;
    return true;
  }
  double score(Eigen::Index j) const override { return -magnitudes_(j); }
  std::size_t count_ = 0;
  std::vector<int> seen_;

 private:
  Eigen::VectorXd magnitudes_;
};

}  // namespace

TEST_CASE("threshold filter examples") {
  DiscoverySet a = threshold_filter(vec({1, 2, 3}), {0.2, 1});
  CHECK(a.rejected.empty());
  CHECK(std::isinf(a.threshold));

  DiscoverySet b = threshold_filter(vec({1, 2, 3}), {0.2, 0});
  CHECK(b.threshold == 1.0);
  CHECK(b.rejected == std::vector<Eigen::Index>{0, 1, 2});

  for (double q : {0.05, 0.5, 0.95}) CHECK(threshold_filter(vec({-1, -2, -3}), {q, 0}).rejected.empty());
  CHECK(threshold_filter(Eigen::VectorXd::Zero(4), {0.5, 0}).rejected.empty());
}

TEST_CASE("threshold filter matches brute force enumeration") {
  Rng rng(101);
  std::uniform_int_distribution<int> size(5, 100);
  std::uniform_real_distribution<double> qdist(0.01, 0.6);
  for (int rep = 0; rep < 1000; ++rep) {
    Eigen::VectorXd w = random_statistics(rng, size(rng));
    const double q = qdist(rng);
    const int offset = rep % 2;
    double t = 0;
    std::vector<Eigen::Index> expected = brute_force_threshold(w, q, offset, t);
    DiscoverySet got = threshold_filter(w, {q, offset});
    CHECK(got.rejected == expected);
    CHECK(got.threshold == t);
  }
}

TEST_CASE("sequential filter with ascending magnitudes reproduces the threshold filter") {
  Rng rng(202);
  std::uniform_int_distribution<int> size(5, 100);
  std::uniform_real_distribution<double> qdist(0.01, 0.6);
  for (int rep = 0; rep < 1000; ++rep) {
    Eigen::VectorXd w = random_statistics(rng, size(rng));
    FilterConfig cfg{qdist(rng), rep % 2};
    std::vector<Eigen::Index> order = ascending_magnitude_order(w);
    CHECK(sequential_filter(w, order, cfg).rejected == threshold_filter(w, cfg).rejected);
  }
}

TEST_CASE("sequential filter hand trace") {
  std::vector<Eigen::Index> order{1, 0};
  DiscoverySet d = sequential_filter(vec({5, -5}), order, {0.5, 1});
  CHECK(d.rejected.empty());
  CHECK_FALSE(d.stop_index.has_value());
  REQUIRE(d.trace.size() == 2);
  CHECK(d.trace[0].fdr_hat == 2.0);
  CHECK(d.trace[1].fdr_hat == 1.0);

  std::vector<Eigen::Index> id{0, 1, 2, 3};
  for (double q : {0.01, 0.5}) {
    DiscoverySet all = sequential_filter(vec({1, 4, 2, 3}), id, {q, 0});
    CHECK(all.stop_index == std::size_t{0});
    CHECK(all.rejected.size() == 4);
  }
}

TEST_CASE("sequential filter rejects invalid permutations") {
  Eigen::VectorXd w = vec({1, 2, 3});
  std::vector<Eigen::Index> dup{0, 0, 1}, short_order{0, 1}, out_of_range{0, 1, 3};
  CHECK_THROWS_AS(sequential_filter(w, dup, {0.1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(sequential_filter(w, short_order, {0.1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(sequential_filter(w, out_of_range, {0.1, 1}), std::invalid_argument);
}

TEST_CASE("filter configuration is validated") {
  CHECK_THROWS_AS(threshold_filter(vec({1}), {0.0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(threshold_filter(vec({1}), {1.0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(threshold_filter(vec({1}), {0.1, 2}), std::invalid_argument);
}

TEST_CASE("rejections grow with q") {
  Rng rng(303);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd w = random_statistics(rng, 60);
    std::vector<Eigen::Index> previous;
    for (double q : {0.05, 0.1, 0.2, 0.3, 0.5}) {
      std::vector<Eigen::Index> now = threshold_filter(w, {q, rep % 2}).rejected;
      CHECK(std::includes(now.begin(), now.end(), previous.begin(), previous.end()));
      previous = now;
    }
  }
}

TEST_CASE("rejected statistics are positive and above the threshold") {
  Rng rng(404);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd w = random_statistics(rng, 40);
    DiscoverySet d = threshold_filter(w, {0.3, 0});
    for (Eigen::Index j : d.rejected) {
      CHECK(w(j) > 0.0);
      CHECK(w(j) >= d.threshold);
    }
  }
}

TEST_CASE("adaptive filter hand trace with a prior-driven stub model") {
  Eigen::VectorXd w = vec({3, -2, 1, 4});
  Eigen::MatrixXd prior(4, 1);
  prior << 1, 0, 0, 1;
  NegativePriorModel model;
  DiscoverySet d = adaptive_filter(w, prior, model, {0.34, 1}, AdaptiveOptions{0});
  REQUIRE(d.ordering.size() == 4);
  CHECK(d.ordering[0] == 2);
  CHECK(d.ordering[1] == 1);
  CHECK(d.rejected.empty());
  CHECK_FALSE(d.stop_index.has_value());
  REQUIRE(d.trace.size() >= 3);
  CHECK(d.trace[2].fdr_hat == doctest::Approx(0.5));
}

TEST_CASE("adaptive filter never rejects negative statistics") {
  Rng rng(505);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd w(30);
    Eigen::MatrixXd prior(30, 2);
    for (int j = 0; j < 30; ++j) {
      w(j) = -std::abs(normal(rng)) - 0.01;
      prior(j, 0) = std::abs(normal(rng));
      prior(j, 1) = normal(rng);
    }
    LogisticOrderingModel model;
    for (double q : {0.1, 0.9}) CHECK(adaptive_filter(w, prior, model, {q, 0}).rejected.empty());
  }
}

TEST_CASE("adaptive filter with a fixed ordering equals the sequential filter") {
  Rng rng(606);
  std::uniform_real_distribution<double> unif;
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd w = random_statistics(rng, 40);
    Eigen::VectorXd scores(40);
    for (int j = 0; j < 40; ++j) scores(j) = unif(rng);
    std::vector<Eigen::Index> order(40);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return scores(a) > scores(b); });
    FixedScoreModel model(scores);
    FilterConfig cfg{0.2, rep % 2};
    DiscoverySet adaptive = adaptive_filter(w, Eigen::MatrixXd::Ones(40, 1), model, cfg, AdaptiveOptions{0});
    DiscoverySet sequential = sequential_filter(w, order, cfg);
    CHECK(adaptive.rejected == sequential.rejected);
    CHECK(adaptive.stop_index == sequential.stop_index);
  }
}

TEST_CASE("a failing model falls back to ascending magnitudes") {
  Rng rng(707);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd w(30);
    for (int j = 0; j < 30; ++j) w(j) = normal(rng) + (j < 8 ? 2.5 : 0.0);
    FailingModel model;
    FilterConfig cfg{0.2, 1};
    DiscoverySet adaptive = adaptive_filter(w, Eigen::MatrixXd::Ones(30, 1), model, cfg, AdaptiveOptions{0});
    CHECK(adaptive.rejected == sequential_filter(w, ascending_magnitude_order(w), cfg).rejected);
  }
}

TEST_CASE("the ordering model only sees revealed signs") {
  Eigen::VectorXd w = vec({0.5, -0.1, 0.9, -0.7, 0.3, 1.1, -0.2, 0.05});
  SpyModel spy;
  adaptive_filter(w, Eigen::MatrixXd::Ones(8, 1), spy, {0.01, 1}, AdaptiveOptions{0});
  // One fit per step except the last; the k-th fit sees exactly k signs.
  CHECK(spy.count_ == 6);
  CHECK(spy.seen_.size() == 0 + 1 + 2 + 3 + 4 + 5 + 6);
}

TEST_CASE("scrambling masked signs leaves the chosen prefix unchanged") {
  Rng rng(808);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Index p = 40;
    Eigen::VectorXd w(p);
    Eigen::MatrixXd prior(p, 1);
    for (Eigen::Index j = 0; j < p; ++j) {
      const bool signal = j < 10;
      w(j) = signal ? 2.0 + std::abs(normal(rng)) : normal(rng);
      prior(j, 0) = signal ? 1.0 + std::abs(normal(rng)) : std::abs(normal(rng));
    }
    LogisticOrderingModel model;
    // q small enough that the procedure never stops, so every step is taken.
    FilterConfig cfg{1e-6, 1};
    DiscoverySet base = adaptive_filter(w, prior, model, cfg);
    for (std::size_t k : {std::size_t{0}, std::size_t{5}, std::size_t{12}, std::size_t{25}}) {
      Eigen::VectorXd scrambled = w;
      for (std::size_t i = k; i < base.ordering.size(); ++i)
        if (coin(rng)) scrambled(base.ordering[i]) = -scrambled(base.ordering[i]);
      DiscoverySet other = adaptive_filter(scrambled, prior, model, cfg);
      for (std::size_t i = 0; i <= k; ++i) CHECK(other.ordering[i] == base.ordering[i]);
    }
  }
}

TEST_CASE("an uninformative prior reproduces the magnitude ordering") {
  Rng rng(909);
  std::uniform_int_distribution<int> size(20, 60);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  int agree = 0;
  const int instances = 200;
  for (int rep = 0; rep < instances; ++rep) {
    const int p = size(rng);
    Eigen::VectorXd w(p);
    for (int j = 0; j < p; ++j) {
      const bool signal = unif(rng) < 0.3;
      w(j) = signal ? 1.5 + std::abs(normal(rng)) : normal(rng);
    }
    Eigen::MatrixXd prior = Eigen::MatrixXd::Constant(p, 1, 0.7);
    LogisticOrderingModel model;
    FilterConfig cfg{0.2, 1};
    DiscoverySet adaptive = adaptive_filter(w, prior, model, cfg);
    DiscoverySet sequential = sequential_filter(w, ascending_magnitude_order(w), cfg);
    if (adaptive.rejected == sequential.rejected) ++agree;
  }
  MESSAGE("agreement ", agree, " of ", instances);
  CHECK(agree >= 190);
}

TEST_CASE("adaptive filter argument checks") {
  LogisticOrderingModel model;
  CHECK_THROWS_AS(adaptive_filter(vec({1, 2}), Eigen::MatrixXd::Ones(3, 1), model, {0.1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(adaptive_filter(vec({1, 2}), Eigen::MatrixXd::Ones(2, 0), model, {0.1, 1}), std::invalid_argument);
}
