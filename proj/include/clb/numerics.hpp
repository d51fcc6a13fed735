#pragma once

// Scalar and matrix routines shared by every estimator. All information
// quantities are in nats.

#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace clb {

inline constexpr double kLog2 = std::numbers::ln2;

/// Raised when a divergence is +infinity (q on the boundary, p elsewhere).
struct InfiniteDivergence : std::domain_error {
  using std::domain_error::domain_error;
};

/// Raised when an estimator is handed an empty histogram or probe matrix.
struct NoObservations : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised by min_c1 when C2 lies outside the admissible interval.
struct ConstraintViolated : std::domain_error {
  using std::domain_error::domain_error;
};

/// Bernoulli relative entropy d(p || q) with 0 log 0 = 0.
double binary_kl(double p, double q);

/// Largest L in [p_hat, 1] with d(p_hat || (p_hat + L) / 2) <= budget.
/// Returns 1 when even L = 1 stays within budget (vacuous bound).
double invert_binary_kl(double p_hat, double budget);

inline constexpr double kInvertTolerance = 1e-10;
inline constexpr int kInvertMaxIter = 200;

/// Empirical joint counts of a discrete value against a membership bit.
class JointHistogram {
 public:
  JointHistogram() = default;
  explicit JointHistogram(std::vector<double> alphabet);
  JointHistogram(std::vector<double> alphabet,
                 std::initializer_list<std::initializer_list<std::uint64_t>> counts);

  void add(std::size_t value_index, int s, std::uint64_t times = 1);
  void merge(const JointHistogram& other);

  std::size_t alphabet_size() const { return alphabet_.size(); }
  const std::vector<double>& alphabet() const { return alphabet_; }
  std::uint64_t count(std::size_t value_index, int s) const { return counts_[2 * value_index + s]; }
  std::uint64_t total() const { return total_; }

 private:
  std::vector<double> alphabet_;
  std::vector<std::uint64_t> counts_;  // row-major (value, s)
  std::uint64_t total_ = 0;
};

enum class MiCorrection { none, miller_madow };

/// Plug-in mutual information between the value and the bit.
double plugin_mi(const JointHistogram& hist, MiCorrection correction = MiCorrection::none);

/// log|I + scale * A^T A| for the m x d matrix A, evaluated on whichever
/// Gram side (m x m or d x d) is smaller.
double logdet_cov_gram(const Eigen::MatrixXd& probe_rows, double scale);

enum class ConstantVariant { hypothesis, loss };

/// Smallest admissible C1 for a given C2 in the weighted-gap bounds.
double min_c1(double c2, ConstantVariant variant);

/// Upper end of the open C2 interval for a variant.
double c2_upper(ConstantVariant variant);

/// Deterministic random stream keyed by (master seed, tag path).
class RngStream {
 public:
  explicit RngStream(std::uint64_t master_seed, std::vector<std::uint64_t> path = {});

  RngStream child(std::uint64_t tag) const;

  std::uint64_t master_seed() const { return master_seed_; }
  const std::vector<std::uint64_t>& path() const { return path_; }

  std::mt19937_64& engine() { return engine_; }
  std::uint64_t next_u64() { return engine_(); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  bool bit() { return (engine_() >> 63) != 0; }
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }

  /// k distinct indices drawn uniformly from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t master_seed_;
  std::vector<std::uint64_t> path_;
  std::mt19937_64 engine_;
};

/// Stable 64-bit FNV-1a hash, used for config fingerprints.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t value);

}  // namespace clb
