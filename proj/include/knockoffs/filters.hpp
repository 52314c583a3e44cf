#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace knockoffs {

struct FilterConfig {
  double q = 0.1;
  int offset = 1;

  void validate() const;
};

struct TracePoint {
  double position;  // candidate threshold t (threshold filter) or step k
  double fdr_hat;
};

struct DiscoverySet {
  std::vector<Eigen::Index> rejected;  // 0-based, ascending
  double threshold = std::numeric_limits<double>::infinity();
  std::optional<std::size_t> stop_index;
  std::vector<Eigen::Index> ordering;
  std::vector<TracePoint> trace;
};

// T = min{t > 0 : (offset + #{w_j <= -t}) / max(#{w_j >= t}, 1) <= q} over the
// nonzero magnitudes; rejects {j : w_j >= T}.
DiscoverySet threshold_filter(const Eigen::VectorXd& w, const FilterConfig& cfg);

// Ascending |w|; among equal magnitudes positives come first, then by index.
// With this tie rule the sequential filter reproduces the threshold filter.
std::vector<Eigen::Index> ascending_magnitude_order(const Eigen::VectorXd& w);

// Stops at the first k with
//   (offset + #{i > k : w_pi_i < 0}) / max(#{i > k : w_pi_i > 0}, 1) <= q
// and rejects the positive statistics after k. Throws std::invalid_argument
// if `order` is not a permutation of 0..p-1.
DiscoverySet sequential_filter(const Eigen::VectorXd& w, std::span<const Eigen::Index> order,
                               const FilterConfig& cfg);

// What an ordering model may see: magnitudes of every statistic, the prior
// rows, and only the signs revealed so far.
struct OrderingData {
  const Eigen::VectorXd& magnitudes;
  const Eigen::MatrixXd& prior;
  std::span<const Eigen::Index> revealed;
  std::span<const int> revealed_signs;  // -1, 0 or +1, aligned with revealed
};

class OrderingModel {
 public:
  virtual ~OrderingModel() = default;
  // Returns false when the model cannot be fit; the filter then falls back
  // to ascending |w| for this step.
  virtual bool fit(const OrderingData& data) = 0;
  // Predicted probability that statistic j is negative.
  virtual double score(Eigen::Index j) const = 0;
};

// logit P[w_j < 0] = theta_1 |w_j| + sum_c theta_{c+1} prior_jc, fit by
// ridge-stabilized IRLS on the revealed signs. Features are scaled by their
// root mean square over all hypotheses. theta_1 is constrained to be <= 0.
class LogisticOrderingModel : public OrderingModel {
 public:
  explicit LogisticOrderingModel(double ridge = 1e-4, int max_iterations = 100, double tolerance = 1e-8);

  bool fit(const OrderingData& data) override;
  double score(Eigen::Index j) const override;

  const Eigen::VectorXd& coefficients() const { return theta_; }

 private:
  double ridge_;
  int max_iterations_;
  double tolerance_;
  Eigen::MatrixXd features_;
  Eigen::VectorXd theta_;
};

struct AdaptiveOptions {
  // Number of initial peels ordered by the rank average of |w| and the prior
  // columns. Default: max(10, p / 20).
  std::optional<std::size_t> warmup;
};

// Adaptive knockoff filter. Hypotheses start masked; each step reveals the
// masked hypothesis with the highest predicted probability of a negative
// sign (ties: smaller |w|, then smaller index) and evaluates the estimate on
// the still-masked set. Stops at the first estimate <= q and rejects the
// masked positives.
DiscoverySet adaptive_filter(const Eigen::VectorXd& w, const Eigen::MatrixXd& prior, OrderingModel& model,
                             const FilterConfig& cfg, const AdaptiveOptions& options = {});

}  // namespace knockoffs
