// Acceptance suite: one pass/fail line per criterion. Tolerances are pinned
// below. Exit status is 0 when every failing criterion is listed in
// kExpectedFailures (each with its reason), 1 otherwise; --strict makes any
// failure fatal.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clb/bounds.hpp"
#include "clb/experiment.hpp"
#include "clb/model.hpp"
#include "clb/numerics.hpp"
#include "clb/oracle.hpp"

using namespace clb;
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// Criterion 1
constexpr double kRoundTripTol = 1e-9;
constexpr double kPluginTol = 1e-12;
constexpr double kLogdetRelTol = 1e-8;
constexpr double kGradRelTol = 1e-4;
constexpr int kGradCasesPerKind = 100;
// Criterion 2
constexpr int kToySpecs = 100;
constexpr double kExactTol = 1e-10;
// Criterion 3
constexpr double kEstimatorTol = 0.01;
constexpr std::size_t kEstimatorSamples = 100000;
constexpr int kEstimatorSeeds = 20;
// Criterion 4
constexpr double kIdentityZ = 3.0;
constexpr std::size_t kIdentityRuns = 256;
// Criterion 5
constexpr double kValidityZ = 2.0;
constexpr double kFastShare = 0.8;
constexpr double kInterpolatingRisk = 0.01;  // mean empirical 0-1 risk of an interpolating cell
// Criterion 6
constexpr double kTrendZ = 1.0;
constexpr double kBufferGapZ = 2.0;
// Criterion 8
constexpr double kNoiseTrendZ = 1.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Criteria whose failure is understood and documented. A listed criterion
// that passes is reported but does not affect the exit status.
const std::map<std::string, std::string> kExpectedFailures = {
    {"2", "the buffer-monotonicity inequality is false for learners whose information about the current task "
          "dominates (a learner that ignores the buffer is a counterexample), and cmi-sum <= io-mi needs sigma = 1 "
          "rather than 1/2 when a learner reveals single cells"},
    {"5b", "with zero empirical risk the binary-KL inversion gives about 2 log2 times the per-cell MI while the "
           "loss-variant fast bound gives about twice it"},
    {"6", "96 one-sided 1 s.e. comparisons on nearly flat trends; each fails with probability about 0.16 by "
          "noise alone, and every master seed tried fails at least one"},
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double hypot_se(double a, double b) { return std::sqrt(a * a + b * b); }

ExperimentConfig config_of(const Json& doc) { return parse_config(doc.dump(2)); }

struct Cell {
  ExperimentConfig config;
  Json axes;
  BoundReport report;
  std::size_t failed = 0;
};

std::vector<Cell> run_grid(const Json& sweep) {
  std::vector<Cell> out;
  for (auto& c : expand_sweep(parse_sweep(sweep.dump(2)))) {
    auto outcome = execute_runs(c.config);
    if (outcome.runs.empty()) throw std::runtime_error("grid cell " + c.axes.dump() + " produced no runs");
    Cell cell{c.config, c.axes, compute_bounds(outcome.runs, c.config.estimation.search), outcome.errors.size()};
    out.push_back(std::move(cell));
  }
  return out;
}

const Json kDefaultGrid = Json::parse(R"({
  "base": {"seed": 1, "data": {"T": 5}},
  "axes": {"n": [50, 100, 200, 400], "m": [0, 4, 16, 64]}
})");

// Same grid on well separated, slowly rotating tasks trained to (near) zero
// training error.
const Json kSeparableGrid = Json::parse(R"({
  "base": {"seed": 5,
           "data": {"T": 5, "class_sep": 10.0, "rotation_per_task": 0.3},
           "model": {"surrogate_clip": 50},
           "optimizer": {"eta": 1.0, "steps_per_task": 300, "batch_current": 32}},
  "axes": {"n": [50, 100, 200, 400], "m": [0, 4, 16, 64]}
})");

// ---------------------------------------------------------------- 1

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

Outcome numeric_identities() {
  RngStream rng(101);
  double worst_rt = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double p = 0.95 * rng.uniform();
    const double q = p + (1.0 - p) * (0.01 + 0.98 * rng.uniform());
    const double l = 2.0 * q - p;
    if (l >= 1.0) continue;
    const double b = binary_kl(p, q);
    worst_rt = std::max(worst_rt, std::abs(binary_kl(p, 0.5 * (p + invert_binary_kl(p, b))) - b));
  }

  double worst_mi = 0.0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t values = 2 + rng.below(4);
    std::vector<double> alphabet(values);
    std::iota(alphabet.begin(), alphabet.end(), 0.0);
    JointHistogram h(alphabet);
    std::vector<double> joint(2 * values), pv(values, 0.0), ps(2, 0.0);
    double total = 0.0;
    for (std::size_t v = 0; v < values; ++v)
      for (int s = 0; s < 2; ++s) {
        const auto c = rng.below(50);
        h.add(v, s, c);
        joint[2 * v + s] = static_cast<double>(c);
        total += static_cast<double>(c);
      }
    if (total == 0.0) continue;
    for (std::size_t v = 0; v < values; ++v)
      for (int s = 0; s < 2; ++s) {
        joint[2 * v + s] /= total;
        pv[v] += joint[2 * v + s];
        ps[s] += joint[2 * v + s];
      }
    const double oracle = entropy(pv) + entropy(ps) - entropy(joint);
    worst_mi = std::max(worst_mi, std::abs(plugin_mi(h) - oracle));
  }

  double worst_ld = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto rows = 1 + rng.below(40), cols = 1 + rng.below(40);
    Eigen::MatrixXd a(rows, cols);
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = rng.normal();
    const double scale = std::exp(4.0 * rng.uniform() - 2.0);
    Eigen::MatrixXd dense = Eigen::MatrixXd::Identity(a.cols(), a.cols()) + scale * a.transpose() * a;
    const double oracle = std::log(dense.partialPivLu().determinant());
    worst_ld = std::max(worst_ld, std::abs(logdet_cov_gram(a, scale) - oracle) / std::abs(oracle));
  }

  std::vector<std::pair<std::string, ModelSpec>> kinds(3);
  kinds[0].first = "linear";
  kinds[0].second.input_dim = 4;
  kinds[0].second.classes = 3;
  kinds[1].first = "mlp-tanh";
  kinds[1].second.kind = ModelKind::mlp;
  kinds[1].second.input_dim = 3;
  kinds[1].second.hidden_dim = 6;
  kinds[1].second.activation = Activation::tanh;
  kinds[2].first = "mlp-relu";
  kinds[2].second.kind = ModelKind::mlp;
  kinds[2].second.input_dim = 3;
  kinds[2].second.hidden_dim = 5;
  kinds[2].second.classes = 3;
  kinds[2].second.activation = Activation::relu;
  std::string grad_detail;
  bool grad_ok = true;
  for (auto& [name, spec] : kinds) {
    double worst = 0.0;
    for (int t = 0; t < kGradCasesPerKind; ++t) {
      auto p = init_params(spec, rng.child(static_cast<std::uint64_t>(t)));
      std::vector<Sample> data(4);
      for (auto& s : data) {
        for (std::size_t j = 0; j < spec.input_dim; ++j) s.features.push_back(rng.normal());
        s.label = static_cast<int>(rng.below(spec.classes));
      }
      std::vector<SampleRef> batch;
      for (auto& s : data) batch.push_back(ref(s));
      worst = std::max(worst, fd_gradient_check(p, batch, 1e-5));
    }
    grad_ok = grad_ok && worst <= kGradRelTol;
    grad_detail += fmt(" %s %.1e", name.c_str(), worst);
  }

  Outcome o;
  o.pass = worst_rt <= kRoundTripTol && worst_mi <= kPluginTol && worst_ld <= kLogdetRelTol && grad_ok;
  o.detail = fmt("round trip %.1e, plugin %.1e, logdet rel %.1e, gradient", worst_rt, worst_mi, worst_ld) + grad_detail;
  return o;
}

// ---------------------------------------------------------------- 2

Outcome oracle_exactness() {
  const ToyLimits limits{4, 3, 3, 8, true};
  RngStream rng(202);
  int specs = 0, cmi_over_io = 0, kl_misses = 0, fast_misses = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t i = 0; specs < kToySpecs; ++i) {
    auto toy = random_toy(rng.child(i), limits);
    if (enumeration_work(toy, 1, 1) > kOracleWorkCap) continue;
    ++specs;
    auto j = enumerate_joint(toy, 1, 1);
    const double gap = j.gap();
    const double t1 = exact_hypothesis_bounds(j, HypothesisBound::io_mi, 0.5);
    const double t2 = exact_hypothesis_bounds(j, HypothesisBound::cmi_sum);
    if (t2 > t1 + kExactTol) {
      ++cmi_over_io;
      worst_ratio = std::max(worst_ratio, t2 / t1);
    }
    if (exact_hypothesis_bounds(j, HypothesisBound::cmi_kl) < gap - kExactTol) ++kl_misses;
    if (exact_hypothesis_bounds(j, HypothesisBound::cmi_fast) < gap - kExactTol) ++fast_misses;
  }

  // Buffer monotonicity compares (1, 1) against (2, 2): needs T >= 3 and n >= 2.
  RngStream prng(203);
  int mono_specs = 0, mono_sqrt = 0, mono_id = 0;
  for (std::uint64_t i = 0; mono_specs < kToySpecs; ++i) {
    auto toy = random_toy(prng.child(i), limits);
    if (toy.tasks < 3 || toy.n < 2 || enumeration_work(toy, 2, 2) > kOracleWorkCap) continue;
    ++mono_specs;
    mono_sqrt += !check_buffer_monotonicity(toy, 1, 1).holds;
    mono_id += !check_buffer_monotonicity(toy, 1, 1, true).holds;
  }

  Outcome o;
  o.pass = cmi_over_io == 0 && mono_sqrt == 0 && mono_id == 0 && kl_misses == 0 && fast_misses == 0;
  o.detail = fmt("%d specs: cmi-sum<=io-mi(sigma=1/2) violated %d (worst ratio %.3f), cmi-kl>=gap missed %d, cmi-fast>=gap missed %d; "
                 "%d specs: buffer monotonicity violated with sqrt %d, identity %d",
                 specs, cmi_over_io, worst_ratio, kl_misses, fast_misses, mono_specs, mono_sqrt, mono_id);
  return o;
}

// ---------------------------------------------------------------- 3

double worst_error(const ExactJoint& j, std::size_t samples, std::uint64_t seed) {
  double w = 0.0;
  for (const auto& e : oracle_validate_estimators(j, samples, seed)) w = std::max(w, std::abs(e.error()));
  return w;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

Outcome estimator_consistency() {
  ToySpec toy;
  toy.tasks = 2;
  toy.n = 1;
  toy.alphabet = 2;
  toy.distributions = {{0.7, 0.3}, {0.4, 0.6}};
  toy.loss = {{0.0, 1.0}, {1.0, 0.0}};
  toy.learner = LearnerKind::softmax;
  toy.beta = 4.0;
  const auto j = enumerate_joint(toy, 1, 1);

  double worst_large = 0.0;
  for (int s = 0; s < kEstimatorSeeds; ++s)
    worst_large = std::max(worst_large, worst_error(j, kEstimatorSamples, 1000 + static_cast<std::uint64_t>(s)));

  std::vector<std::size_t> ladder;
  for (std::size_t n = 1000; n <= 128000; n *= 2) ladder.push_back(n);
  std::vector<double> medians;
  for (auto n : ladder) {
    std::vector<double> errs;
    for (int s = 0; s < kEstimatorSeeds; ++s) errs.push_back(worst_error(j, n, 2000 + static_cast<std::uint64_t>(s)));
    medians.push_back(median(errs));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < medians.size(); ++i) monotone = monotone && medians[i] < medians[i - 1];

  Outcome o;
  o.pass = worst_large <= kEstimatorTol && monotone;
  o.detail = fmt("max |error| at 1e5 over %d seeds %.4f; median ladder", kEstimatorSeeds, worst_large);
  for (std::size_t i = 0; i < ladder.size(); ++i) o.detail += fmt(" %zu:%.4f", ladder[i], medians[i]);
  return o;
}

// ---------------------------------------------------------------- 4

struct IdentityLine {
  bool ok = false;
  std::string text;
};

IdentityLine identity_line(const IdentityCheck& c) {
  const double td = kIdentityZ * hypot_se(c.lhs_se, c.rhs_delta_se);
  const double tp = kIdentityZ * hypot_se(c.lhs_se, c.rhs_pair_se);
  IdentityLine l;
  l.ok = c.applicable && std::abs(c.lhs - c.rhs_delta) <= td && std::abs(c.lhs - c.rhs_pair) <= tp;
  l.text = fmt("risk %.4f+-%.4f, delta form %.4f, pair form %.4f", c.lhs, c.lhs_se, c.rhs_delta, c.rhs_pair);
  return l;
}

Outcome interpolating_identity() {
  auto cfg = config_of(Json::parse(R"({
    "seed": 11,
    "data": {"T": 2, "n": 8, "dim": 40, "class_sep": 2.0},
    "buffer": {"k": 1, "l": 4},
    "model": {"surrogate_clip": 50},
    "optimizer": {"kind": "sgd", "eta": 0.5, "steps_per_task": 500,
                  "batch_buffer_tasks": 1, "batch_buffer_samples": 4, "batch_current": 8},
    "estimation": {"runs": 256, "blocks": 16}
  })"));
  auto runs = execute_runs(cfg).runs;
  std::size_t interpolated = 0;
  for (const auto& r : runs) interpolated += r.loss_table.empirical_risk() == 0.0;
  auto search = cfg.estimation.search;
  auto trained = identity_line(check_interpolating_identity(runs, search));

  auto mem = memorizer_runs(kIdentityRuns, 3, 8, 2, 4, 77);
  auto mc = check_interpolating_identity(mem, search);
  const double alpha = mc.rhs_delta * kLog2;  // (1/m) sum I(delta; S)
  const double target = mc.lhs * kLog2;       // test error times log 2
  const bool mem_ok = mc.applicable && std::abs(alpha - target) <= kIdentityZ * kLog2 * hypot_se(mc.lhs_se, mc.rhs_delta_se);

  Outcome o;
  o.pass = runs.size() >= 200 && interpolated == runs.size() && trained.ok && mem_ok;
  o.detail = fmt("trained: %zu/%zu runs at zero training error, ", interpolated, runs.size()) + trained.text +
             fmt("; memorizer: alpha %.4f vs test error*log2 %.4f", alpha, target);
  return o;
}

// ---------------------------------------------------------------- 5

const std::set<std::string> kFastNames = {"fast_loss", "fast_var", "fast_var_proof"};

Outcome bound_validity(const std::vector<Cell>& grid) {
  int violations = 0;
  std::string worst;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (const auto& c : grid) {
    const auto& g = c.report.gap;
    for (const auto& b : c.report.bounds) {
      const double margin = (b.value - (g.gap - kValidityZ * hypot_se(g.gap_se, b.se)));
      if (margin < 0.0) ++violations;
      if (margin < worst_margin) {
        worst_margin = margin;
        worst = b.name + " at " + c.axes.dump();
      }
    }
  }
  Outcome o;
  o.pass = violations == 0;
  o.detail = fmt("%zu cells, %d violations; tightest margin %.5f (", grid.size(), violations, worst_margin) + worst + ")";
  return o;
}

bool fast_is_minimum(const BoundReport& r) {
  double fast = std::numeric_limits<double>::infinity(), other = fast;
  for (const auto& b : r.bounds) {
    auto& slot = kFastNames.count(b.name) ? fast : other;
    slot = std::min(slot, b.value);
  }
  return fast <= other;
}

Outcome fast_tightest(const std::vector<Cell>& default_grid, const std::vector<Cell>& separable) {
  std::size_t cells = 0, wins = 0, default_cells = 0;
  std::string losers;
  auto scan = [&](const std::vector<Cell>& grid, bool is_default) {
    for (const auto& c : grid) {
      if (c.report.gap.empirical_risk > kInterpolatingRisk) continue;
      ++cells;
      default_cells += is_default;
      if (fast_is_minimum(c.report)) {
        ++wins;
      } else {
        losers += " " + c.axes.dump();
      }
    }
  };
  scan(default_grid, true);
  scan(separable, false);
  Outcome o;
  const double share = cells ? static_cast<double>(wins) / static_cast<double>(cells) : 0.0;
  o.pass = cells > 0 && share >= kFastShare;
  o.detail = fmt("interpolating cells (mean training risk <= %.2f): %zu (%zu from the default grid); fast/variance "
                 "bounds minimal in %zu (%.0f%%)",
                 kInterpolatingRisk, cells, default_cells, wins, 100.0 * share);
  if (!losers.empty()) o.detail += "; not minimal at" + losers;
  return o;
}

// ---------------------------------------------------------------- 6

std::size_t axis(const Cell& c, const char* name) { return c.axes.at(name).get<std::size_t>(); }

Outcome fig1_trend(const std::vector<Cell>& default_grid, const std::vector<Cell>& separable) {
  std::map<std::size_t, std::vector<const Cell*>> by_m;
  for (const auto& c : default_grid) by_m[axis(c, "m")].push_back(&c);
  int checks = 0, violations = 0;
  std::string where;
  for (auto& [m, cells] : by_m) {
    std::sort(cells.begin(), cells.end(), [](const Cell* a, const Cell* b) { return axis(*a, "n") < axis(*b, "n"); });
    for (std::size_t i = 1; i < cells.size(); ++i) {
      const auto& lo = cells[i - 1]->report;
      const auto& hi = cells[i]->report;
      auto check = [&](const std::string& name, double a, double sa, double b, double sb) {
        ++checks;
        if (b > a + kTrendZ * hypot_se(sa, sb)) {
          ++violations;
          where += fmt(" %s(m=%zu,n=%zu->%zu)", name.c_str(), m, axis(*cells[i - 1], "n"), axis(*cells[i], "n"));
        }
      };
      check("gap", lo.gap.gap, lo.gap.gap_se, hi.gap.gap, hi.gap.gap_se);
      for (const auto& b : lo.bounds) {
        const auto* nb = hi.find(b.name);
        if (nb) check(b.name, b.value, b.se, nb->value, nb->se);
      }
    }
  }

  std::map<std::size_t, std::map<std::size_t, const Cell*>> sep;
  for (const auto& c : separable) sep[axis(c, "n")][axis(c, "m")] = &c;
  int buffer_checks = 0, buffer_violations = 0;
  for (auto& [n, row] : sep) {
    const auto& small = row.at(4)->report.gap;
    const auto& large = row.at(64)->report.gap;
    ++buffer_checks;
    if (std::abs(small.gap - large.gap) > kBufferGapZ * hypot_se(small.gap_se, large.gap_se)) ++buffer_violations;
  }
  Outcome o;
  o.pass = violations == 0 && buffer_violations == 0;
  o.detail = fmt("n-ladder: %d/%d steps non-increasing within 1 s.e.; separable m=4 vs m=64 gap within 2 s.e. at %d/%d n",
                 checks - violations, checks, buffer_checks - buffer_violations, buffer_checks) + where;
  return o;
}

// ---------------------------------------------------------------- 7

double sgld_with(std::vector<RunRecord> runs, std::size_t m, double eta_factor, double xi_factor) {
  for (auto& r : runs) {
    for (auto& e : r.probe_eta) e *= eta_factor;
    for (auto& x : r.probe_xi) x *= xi_factor;
  }
  return bound_sgld(runs, m);
}

Outcome fig3_trend() {
  auto spec = parse_sweep(R"({
    "base": {"seed": 13, "data": {"T": 5, "n": 100}, "buffer": {"m": 16},
             "optimizer": {"kind": "sgld", "probe": true, "m_probes": 16},
             "estimation": {"runs": 64, "blocks": 8, "bootstrap": 50}},
    "axes": {"eta_theta": [[0.05, 6], [0.01, 8], [0.005, 9]]},
    "xi_scale": 0.01
  })");
  std::vector<double> values;
  std::vector<RunRecord> fixture;
  std::size_t m = 0;
  for (const auto& cell : expand_sweep(spec)) {
    auto runs = execute_runs(cell.config).runs;
    m = runs.front().loss_table.entries.size();
    values.push_back(bound_sgld(runs, m));
    if (values.size() == 2) fixture = std::move(runs);
  }

  double variance = 0.0;
  for (const auto& r : fixture)
    for (const auto& p : r.probe_log) variance += p.squaredNorm();
  const std::vector<double> factors = {0.25, 0.5, 1.0, 2.0, 4.0};
  bool xi_dec = true, eta_inc = true;
  double prev_xi = std::numeric_limits<double>::infinity(), prev_eta = 0.0;
  for (double f : factors) {
    const double bx = sgld_with(fixture, m, 1.0, f);
    const double be = sgld_with(fixture, m, f, 1.0);
    xi_dec = xi_dec && bx < prev_xi;
    eta_inc = eta_inc && be > prev_eta;
    prev_xi = bx;
    prev_eta = be;
  }
  const bool ordered = values[0] > values[1] && values[1] > values[2];
  Outcome o;
  o.pass = variance > 0.0 && xi_dec && eta_inc && ordered;
  o.detail = fmt("formula decreasing in xi: %s, increasing in eta: %s; end-to-end (0.05,6) %.4f > (0.01,8) %.4f > "
                 "(0.005,9) %.4f",
                 xi_dec ? "yes" : "no", eta_inc ? "yes" : "no", values[0], values[1], values[2]);
  return o;
}

// ---------------------------------------------------------------- 8

Outcome fig4_trend() {
  auto cells = run_grid(Json::parse(R"({
    "base": {"seed": 9, "data": {"T": 3, "n": 20, "dim": 50, "class_sep": 4.0}, "buffer": {"m": 8},
             "model": {"surrogate_clip": 50},
             "optimizer": {"eta": 0.5, "steps_per_task": 300, "batch_current": 20}},
    "axes": {"delta": [0.03, 0.06, 0.09]}
  })"));
  bool increasing = true, valid = true;
  std::string gaps;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& r = cells[i].report;
    gaps += fmt(" %.4f", r.gap.gap);
    if (i > 0) {
      const auto& p = cells[i - 1].report.gap;
      increasing = increasing && r.gap.gap >= p.gap - kNoiseTrendZ * hypot_se(r.gap.gap_se, p.gap_se);
    }
    for (const auto& b : r.bounds) valid = valid && b.value >= r.gap.gap && b.value < 1.0;
  }
  Outcome o;
  o.pass = increasing && valid;
  o.detail = "gap at delta 0.03/0.06/0.09:" + gaps + fmt("; increasing: %s; all bounds in [gap, 1): %s",
                                                          increasing ? "yes" : "no", valid ? "yes" : "no");
  return o;
}

// ---------------------------------------------------------------- 9

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "clb_acceptance_determinism";
  fs::remove_all(root);
  const Json base = Json::parse(R"({
    "seed": 21, "data": {"T": 3, "n": 16}, "buffer": {"m": 4},
    "optimizer": {"kind": "sgld", "eta": 0.05, "xi": 0.02, "steps_per_task": 40, "probe": true, "m_probes": 4},
    "estimation": {"runs": 16, "blocks": 4, "bootstrap": 20}
  })");
  int compared = 0;
  bool same = true;
  for (const char* dir : {"run_a", "run_b"}) {
    auto cfg = config_of(base);
    cfg.output_dir = root / dir;
    run_experiment(cfg);
  }
  auto ra = tree(root / "run_a"), rb = tree(root / "run_b");
  same = same && ra == rb;
  compared += static_cast<int>(ra.size());

  auto serial = config_of(base);
  auto a = execute_runs(serial, Execution::parallel), b = execute_runs(serial, Execution::serial);
  for (std::size_t i = 0; i < a.runs.size(); ++i) same = same && run_to_json(a.runs[i]).dump() == run_to_json(b.runs[i]).dump();

  for (const char* dir : {"sweep_a", "sweep_b"}) {
    Json sweep{{"base", base},
               {"axes", {{"n", {8, 16}}}},
               {"output",
                {{"csv", (root / dir / "sweep.csv").string()},
                 {"plot_csv", (root / dir / "plot.csv").string()},
                 {"reports_dir", (root / dir / "reports").string()}}}};
    fs::create_directories(root / dir);
    const auto path = root / (std::string(dir) + ".json");
    std::ofstream(path) << sweep.dump(2);
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    const int rc = cmd_sweep(path);
    std::cout.rdbuf(old);
    same = same && rc == kExitOk;
  }
  auto sa = tree(root / "sweep_a"), sb = tree(root / "sweep_b");
  same = same && sa == sb;
  compared += static_cast<int>(sa.size());

  for (const char* name : {"validate_a.json", "validate_b.json"}) {
    ValidateOptions v;
    v.section = "numerics";
    v.report = root / name;
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    const int rc = cmd_validate(v);
    std::cout.rdbuf(old);
    same = same && rc == kExitOk;
  }
  same = same && tree(root)["validate_a.json"] == tree(root)["validate_b.json"];
  compared += 1;

  Outcome o;
  o.pass = same;
  o.detail = fmt("run, sweep and validate artifacts re-run byte-identical (%d files compared), parallel == serial: %s",
                 compared, same ? "yes" : "no");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--strict") {
      strict = true;
    } else {
      std::fprintf(stderr, "usage: acceptance [--strict]\n");
      return kExitConfigError;
    }
  }
  apply_worker_env();

  std::vector<std::pair<std::string, std::string>> failed;
  auto report = [&](const std::string& id, const std::string& title, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %-3s %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", id.c_str(), title.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) failed.emplace_back(id, title);
  };

  report("1", "numeric identities", numeric_identities);
  report("2", "oracle exactness", oracle_exactness);
  report("3", "estimator consistency", estimator_consistency);
  report("4", "interpolating identity", interpolating_identity);

  std::vector<Cell> default_grid, separable;
  std::string grid_error;
  try {
    default_grid = run_grid(kDefaultGrid);
    separable = run_grid(kSeparableGrid);
  } catch (const std::exception& e) {
    grid_error = e.what();
  }
  auto needs_grid = [&](std::function<Outcome()> fn) {
    return [fn, &grid_error]() -> Outcome {
      if (!grid_error.empty()) return {false, "grid failed: " + grid_error};
      return fn();
    };
  };
  report("5a", "bound validity on the default grid", needs_grid([&] { return bound_validity(default_grid); }));
  report("5b", "fast/variance bounds tightest when interpolating",
         needs_grid([&] { return fast_tightest(default_grid, separable); }));
  report("6", "trend in n and buffer size", needs_grid([&] { return fig1_trend(default_grid, separable); }));
  report("7", "sgld bound monotonicity and ordering", fig3_trend);
  report("8", "label-noise trend", fig4_trend);
  report("9", "determinism", determinism);

  int unexpected = 0;
  for (const auto& [id, title] : failed) {
    auto it = kExpectedFailures.find(id);
    if (it == kExpectedFailures.end()) {
      ++unexpected;
      std::printf("unexpected failure: %s %s\n", id.c_str(), title.c_str());
    } else {
      std::printf("known failure: %s %s: %s\n", id.c_str(), title.c_str(), it->second.c_str());
    }
  }
  std::printf("%zu of 10 checks failed (%d unexpected)\n", failed.size(), unexpected);
  if (strict) return failed.empty() ? kExitOk : kExitCheckFailed;
  return unexpected == 0 ? kExitOk : kExitCheckFailed;
}
