#include "clb/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace clb {

namespace {

double xlogy_ratio(double x, double y) {
  // x log(x / y) with 0 log 0 = 0
  return x == 0.0 ? 0.0 : x * std::log(x / y);
}

}  // namespace

double binary_kl(double p, double q) {
  if (!(p >= 0.0 && p <= 1.0) || !(q >= 0.0 && q <= 1.0))
    throw std::domain_error("binary_kl: arguments must lie in [0, 1]");
  if (p == q) return 0.0;
  if (q == 0.0 || q == 1.0) throw InfiniteDivergence("binary_kl: infinite divergence");
  double d = xlogy_ratio(p, q) + xlogy_ratio(1.0 - p, 1.0 - q);
  return std::max(d, 0.0);
}

double invert_binary_kl(double p_hat, double budget) {
  if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw std::domain_error("invert_binary_kl: p_hat outside [0, 1]");
  if (!(budget >= 0.0)) throw std::domain_error("invert_binary_kl: negative budget");
  if (budget == 0.0 || p_hat == 1.0) return p_hat;

  auto divergence = [p_hat](double mean) { return binary_kl(p_hat, 0.5 * (p_hat + mean)); };
  // q = (p_hat + 1) / 2 < 1 whenever p_hat < 1, so this is finite.
  if (divergence(1.0) <= budget) return 1.0;

  double lo = p_hat;  // divergence(lo) = 0 <= budget
  double hi = 1.0;    // divergence(hi) > budget
  for (int it = 0; it < kInvertMaxIter && hi - lo > kInvertTolerance; ++it) {
    double mid = 0.5 * (lo + hi);
    if (divergence(mid) <= budget)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

JointHistogram::JointHistogram(std::vector<double> alphabet)
    : alphabet_(std::move(alphabet)), counts_(2 * alphabet_.size(), 0) {}

JointHistogram::JointHistogram(std::vector<double> alphabet,
                               std::initializer_list<std::initializer_list<std::uint64_t>> counts)
    : JointHistogram(std::move(alphabet)) {
  if (counts.size() != alphabet_.size())
    throw std::invalid_argument("JointHistogram: one count row per alphabet value required");
  std::size_t v = 0;
  for (const auto& row : counts) {
    if (row.size() != 2) throw std::invalid_argument("JointHistogram: rows must have two columns");
    int s = 0;
    for (auto c : row) add(v, s++, c);
    ++v;
  }
}

void JointHistogram::add(std::size_t value_index, int s, std::uint64_t times) {
  if (value_index >= alphabet_.size() || (s != 0 && s != 1))
    throw std::out_of_range("JointHistogram::add: index out of range");
  counts_[2 * value_index + s] += times;
  total_ += times;
}

void JointHistogram::merge(const JointHistogram& other) {
  if (other.alphabet_ != alphabet_) throw std::invalid_argument("JointHistogram::merge: alphabet mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  total_ += other.total_;
}

double plugin_mi(const JointHistogram& hist, MiCorrection correction) {
  if (hist.total() == 0) throw NoObservations("plugin_mi: no observations");
  const double n = static_cast<double>(hist.total());
  const std::size_t values = hist.alphabet_size();

  std::vector<double> row(values, 0.0);
  double col[2] = {0.0, 0.0};
  for (std::size_t v = 0; v < values; ++v)
    for (int s = 0; s < 2; ++s) {
      double c = static_cast<double>(hist.count(v, s));
      row[v] += c;
      col[s] += c;
    }

  double mi = 0.0;
  for (std::size_t v = 0; v < values; ++v)
    for (int s = 0; s < 2; ++s) {
      double c = static_cast<double>(hist.count(v, s));
      if (c > 0.0) mi += (c / n) * std::log(c * n / (row[v] * col[s]));
    }

  if (correction == MiCorrection::miller_madow) {
    auto nonzero = [](auto first, auto last) {
      return static_cast<double>(std::count_if(first, last, [](double x) { return x > 0.0; }));
    };
    double occupied_joint = 0.0;
    for (std::size_t v = 0; v < values; ++v)
      for (int s = 0; s < 2; ++s) occupied_joint += hist.count(v, s) > 0 ? 1.0 : 0.0;
    double occupied_row = nonzero(row.begin(), row.end());
    double occupied_col = nonzero(col, col + 2);
    mi += ((occupied_row - 1.0) + (occupied_col - 1.0) - (occupied_joint - 1.0)) / (2.0 * n);
  }
  return std::max(mi, 0.0);
}

double logdet_cov_gram(const Eigen::MatrixXd& probe_rows, double scale) {
  if (probe_rows.rows() == 0) throw NoObservations("logdet_cov_gram: no probes");
  if (!(scale > 0.0)) throw std::domain_error("logdet_cov_gram: scale must be positive");
  const auto m = probe_rows.rows();
  const auto d = probe_rows.cols();
  Eigen::MatrixXd gram;
  if (m <= d) {
    gram = scale * (probe_rows * probe_rows.transpose());
    gram.diagonal().array() += 1.0;
  } else {
    gram = scale * (probe_rows.transpose() * probe_rows);
    gram.diagonal().array() += 1.0;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw std::runtime_error("logdet_cov_gram: Cholesky failed");
  const Eigen::MatrixXd& l = llt.matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}

double c2_upper(ConstantVariant variant) {
  return variant == ConstantVariant::hypothesis ? kLog2 : 0.5 * kLog2;
}

double min_c1(double c2, ConstantVariant variant) {
  if (!(c2 > 0.0 && c2 < c2_upper(variant)))
    throw ConstraintViolated("min_c1: C2 outside the admissible interval");
  if (variant == ConstantVariant::hypothesis) return -std::log(2.0 - std::exp(c2)) / c2 - 1.0;
  return -std::log(2.0 - std::exp(2.0 * c2)) / (2.0 * c2) - 1.0;
}

RngStream::RngStream(std::uint64_t master_seed, std::vector<std::uint64_t> path)
    : master_seed_(master_seed), path_(std::move(path)) {
  std::vector<std::uint32_t> words;
  words.reserve(3 + 2 * path_.size());
  words.push_back(static_cast<std::uint32_t>(master_seed_));
  words.push_back(static_cast<std::uint32_t>(master_seed_ >> 32));
  words.push_back(static_cast<std::uint32_t>(path_.size()));
  for (auto tag : path_) {
    words.push_back(static_cast<std::uint32_t>(tag));
    words.push_back(static_cast<std::uint32_t>(tag >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  engine_.seed(seq);
}

RngStream RngStream::child(std::uint64_t tag) const {
  auto p = path_;
  p.push_back(tag);
  return RngStream(master_seed_, std::move(p));
}

std::vector<std::size_t> RngStream::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + below(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace clb
