#pragma once

// Exact ground truth on tiny finite instances. The learner sees the
// training halves of the indexed cells {U,V} u {T,[n]}; cells are i.i.d.
// within a task, so V enters only through its size and enumeration runs over
// U, the training tuple, and (for conditional terms) the supersample pairs
// and membership bits of the indexed cells.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "clb/numerics.hpp"

namespace clb {

enum class LearnerKind { erm, softmax, constant };

struct ToySpec {
  std::size_t tasks = 2;
  std::size_t n = 1;
  std::size_t alphabet = 2;
  std::vector<std::vector<double>> distributions;  // tasks x alphabet
  std::vector<std::vector<double>> loss;           // hypotheses x alphabet, in [0, 1]
  LearnerKind learner = LearnerKind::erm;
  double beta = 1.0;               // softmax inverse temperature on the empirical risk
  std::vector<double> weights;     // constant learner distribution over hypotheses

  std::size_t hypotheses() const { return loss.size(); }
  bool binary_losses() const;
  void validate() const;
};

struct EnumerationTooLarge : std::length_error {
  using std::length_error::length_error;
};

inline constexpr double kOracleWorkCap = 1e7;

nlohmann::ordered_json toy_to_json(const ToySpec& toy);
ToySpec toy_from_json(const nlohmann::ordered_json& doc);

struct ToyLimits {
  std::size_t max_tasks = 4, max_n = 4, max_alphabet = 4, max_hypotheses = 16;
  bool binary = true;
};

/// Random spec within the limits: random task distributions, loss table and
/// learner kind.
ToySpec random_toy(RngStream rng, const ToyLimits& limits = {});

/// Learner output P(w | training tuple) for every tuple of the given cells.
/// Row-major: tuple index (mixed radix, cell 0 least significant) x hypothesis.
std::vector<double> learner_table(const ToySpec& toy, std::size_t cells);

/// Exact quantities for one realization of the task subset U.
struct SubsetJoint {
  std::vector<std::size_t> u;          // selected previous tasks
  std::vector<std::size_t> cell_task;  // task of every indexed cell, buffer cells first
  double prob = 0.0;                   // P(U = u)
  double mi_w_data = 0.0;              // I(W; M^U_V, D^T)
  std::vector<double> cmi_cell;        // I(W; S_c | supersample pairs) per cell
  std::vector<double> sqrt_cmi_cell;   // E over pairs of sqrt(2 I^{pairs}(W; S_c)) per cell
  double empirical_risk = 0.0;
  double population_risk = 0.0;
  std::vector<double> w_marginal;
  std::vector<std::array<double, 8>> loss_joint;  // per cell P(l0, l1, s) at 4 l0 + 2 l1 + s (binary losses)
  double mass_tuples = 0.0;
  double mass_pairs = 0.0;
};

struct ExactJoint {
  ToySpec toy;
  std::size_t k = 0, l = 0;
  std::vector<SubsetJoint> subsets;
  double atom_count = 0.0;  // |(D~, S, U, V, W)| of the unreduced joint
  double work = 0.0;

  std::size_t m() const { return k * l + toy.n; }
  double empirical_risk() const;
  double population_risk() const;
  double gap() const { return population_risk() - empirical_risk(); }
  double total_mass() const;  // sum of P(U) * (enumerated mass), per enumeration level
};

/// Unreduced atom count A^{2Tn} 2^{Tn} C(T-1, k) C(n, l) H.
double joint_atom_count(const ToySpec& toy, std::size_t k, std::size_t l);

/// Enumeration work estimate; enumerate_joint refuses anything above the cap.
double enumeration_work(const ToySpec& toy, std::size_t k, std::size_t l);

ExactJoint enumerate_joint(const ToySpec& toy, std::size_t k, std::size_t l);

enum class HypothesisBound { io_mi, cmi_sum, cmi_kl, cmi_fast };

/// io_mi: E_U sqrt(2 sigma^2 / m * I(W; data)); cmi_sum: E (1/m) sum sqrt(2 I(W; S_c | pairs));
/// cmi_kl: binary-KL gap bound from the conditional MI sum; cmi_fast: min over C2 of
/// min_c1(C2) L^ + B / C2 (hypothesis constants).
double exact_hypothesis_bounds(const ExactJoint& joint, HypothesisBound which, double sigma = 0.5);

struct BufferMonotonicityResult {
  double lhs = 0.0, rhs = 0.0;
  bool holds = false;
};

/// E_U g(I / (kl + n)) at (k, l) against (k + 1, l + 1).
BufferMonotonicityResult check_buffer_monotonicity(const ToySpec& toy, std::size_t k, std::size_t l, bool identity_g = false);

struct EstimatorError {
  std::string term;   // pair, delta, l1
  std::size_t cell = 0;
  double exact = 0.0;
  double plugin = 0.0;
  double error() const { return plugin - exact; }
};

/// Draws n_samples i.i.d. (L0, L1, S) triples per cell of the first subset
/// from the exact joint, runs the plug-in MI estimators and compares with
/// the exact loss MIs.
std::vector<EstimatorError> oracle_validate_estimators(const ExactJoint& joint, std::size_t n_samples,
                                                       std::uint64_t seed);

/// Exact MI of the (value, s) table P[v][s] (row-major, two columns).
double exact_mi(const std::vector<double>& table);

}  // namespace clb
