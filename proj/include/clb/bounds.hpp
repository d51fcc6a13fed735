#pragma once

// Generalization gap and the prediction-based bound estimators computed from
// a collection of Monte-Carlo runs.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "clb/cl_train.hpp"
#include "clb/numerics.hpp"

namespace clb {

enum class EstimationMode { per_index, pooled_by_group };
enum class Execution { parallel, serial };

struct BoundSearchCfg {
  std::vector<double> c2_grid;  // loss variant, admissible
  std::vector<double> gamma_grid;
  EstimationMode mode = EstimationMode::pooled_by_group;
  double confidence = 2.0;  // standard-error multiplier used by validity checks
  MiCorrection correction = MiCorrection::none;
  std::size_t bootstrap = 200;
  std::uint64_t bootstrap_seed = 0x5eed;
  double identity_z = 3.0;  // band for the interpolating identity

  static BoundSearchCfg defaults();
  void validate() const;
};

/// `points` log-spaced values strictly inside (0, c2_upper(variant)).
std::vector<double> default_c2_grid(ConstantVariant variant, std::size_t points = 64);

struct GapEstimate {
  double gap = 0.0, gap_se = 0.0;
  double empirical_risk = 0.0, empirical_se = 0.0;
  double population_risk = 0.0, population_se = 0.0;
  std::size_t runs = 0;
};

/// Mean and standard error across runs of the per-run supersample gap.
GapEstimate gap_estimate(std::span<const RunRecord> runs);

/// Histogram group: a single (task, sample) cell in per-index mode, or all
/// cells sharing a role (buffer / final task) in pooled mode.
struct GroupKey {
  bool buffer = false;
  std::size_t task = 0;
  std::size_t sample = 0;
  auto operator<=>(const GroupKey&) const = default;
};

struct CellHistograms {
  JointHistogram pair;   // (L0, L1) coded 2*L0 + L1, against S
  JointHistogram delta;  // L1 - L0 in {-1, 0, 1}, against S
  JointHistogram l1;     // L1 in {0, 1}, against S
  CellHistograms();
};

using HistogramMap = std::map<GroupKey, CellHistograms>;

GroupKey group_of(const LossEntry& e, EstimationMode mode);

/// One histogram triple per group over the given runs (all runs when
/// `subset` is empty).
HistogramMap build_histograms(std::span<const RunRecord> runs, EstimationMode mode,
                              std::span<const std::size_t> subset = {});

enum class SqrtKind { e_mi, e_cmi, ld_mi };

struct MiTerms {
  double pair = 0.0, delta = 0.0, l1 = 0.0;
};

/// Per-group MI estimates. Stratified estimates average the per-block MIs.
std::map<GroupKey, MiTerms> group_mi(const HistogramMap& hists, MiCorrection correction);
std::map<GroupKey, MiTerms> stratified_group_mi(std::span<const RunRecord> runs, EstimationMode mode,
                                                MiCorrection correction, std::span<const std::size_t> subset = {});

/// (1/m) sum over cells of sqrt(2 I) for the chosen MI term.
double bound_sqrt_family(std::span<const RunRecord> runs, const std::map<GroupKey, MiTerms>& mi,
                         EstimationMode mode, SqrtKind kind, std::span<const std::size_t> subset = {});

struct BinaryKlBound {
  double budget = 0.0;
  double population_bound = 0.0;
  double gap_bound = 0.0;
};
BinaryKlBound bound_binary_kl(double empirical_risk, double budget);

enum class FastKind { fast_loss, fast_var, fast_var_proof };

struct FastBound {
  double value = 0.0;
  double c1 = 0.0, c2 = 0.0, gamma = 0.0;
};

/// fast_loss: min over C2 of min_c1(C2) L^ + B / C2; fast_var replaces L^ by
/// Var(gamma) minimized over the gamma grid; fast_var_proof uses
/// C1 = min_c1(C2) / gamma^2 with Var(gamma).
FastBound bound_fast_family(double empirical_risk, double budget_min, std::span<const double> var_gamma,
                            const BoundSearchCfg& cfg, FastKind kind);

/// Mean over runs of (1/m) sum (train loss - (1 + gamma) L^_run)^2.
double empirical_variance(std::span<const RunRecord> runs, double gamma, std::span<const std::size_t> subset = {});

struct IdentityCheck {
  bool applicable = false;
  double lhs = 0.0, lhs_se = 0.0;
  double rhs_delta = 0.0, rhs_delta_se = 0.0;
  double rhs_pair = 0.0, rhs_pair_se = 0.0;
  double tolerance_delta = 0.0, tolerance_pair = 0.0;
  bool satisfied = false;
};

IdentityCheck check_interpolating_identity(std::span<const RunRecord> runs, const BoundSearchCfg& cfg,
                                           Execution exec = Execution::parallel);

/// sqrt( sum_r logdet(I + eta_r^2 / xi_r^2 * pooled covariance_r) / (4 m) ).
/// Pooled covariance stacks every run's centered probes at step r.
double bound_sgld(std::span<const RunRecord> runs, std::size_t m, std::span<const std::size_t> subset = {});

/// Same formula from each run's own probes, averaged over runs.
double bound_sgld_per_run(std::span<const RunRecord> runs, std::size_t m, std::span<const std::size_t> subset = {});

struct BoundEntry {
  std::string name;
  double value = 0.0;
  double se = 0.0;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
};

struct BoundReport {
  GapEstimate gap;
  std::vector<BoundEntry> bounds;
  IdentityCheck identity;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  const BoundEntry* find(const std::string& name) const;
};

/// Every applicable bound with bootstrap standard errors (resampling runs,
/// or supersample blocks for e_cmi).
BoundReport compute_bounds(std::span<const RunRecord> runs, const BoundSearchCfg& cfg,
                           Execution exec = Execution::parallel);

nlohmann::ordered_json report_to_json(const BoundReport& report);

}  // namespace clb
