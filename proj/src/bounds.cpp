#include "clb/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace clb {

BoundSearchCfg BoundSearchCfg::defaults() {
  BoundSearchCfg cfg;
  cfg.c2_grid = default_c2_grid(ConstantVariant::loss);
  for (int g = 1; g <= 19; ++g) cfg.gamma_grid.push_back(g / 20.0);
  return cfg;
}

void BoundSearchCfg::validate() const {
  if (c2_grid.empty()) throw ConstraintViolated("bounds: empty C2 grid");
  for (double c2 : c2_grid)
    if (!(c2 > 0.0 && c2 < c2_upper(ConstantVariant::loss))) throw ConstraintViolated("bounds: C2 grid not admissible");
  if (gamma_grid.empty()) throw ConstraintViolated("bounds: empty gamma grid");
  for (double g : gamma_grid)
    if (!(g > 0.0 && g < 1.0)) throw ConstraintViolated("bounds: gamma grid must lie in (0, 1)");
  if (!(confidence >= 0.0) || !(identity_z >= 0.0)) throw std::invalid_argument("bounds: negative multiplier");
}

std::vector<double> default_c2_grid(ConstantVariant variant, std::size_t points) {
  if (points < 2) throw std::invalid_argument("default_c2_grid: need at least two points");
  const double upper = c2_upper(variant);
  const double lo = std::log(upper * 1e-3), hi = std::log(upper * (1.0 - 1e-4));
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  return grid;
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<std::size_t> resolve(std::span<const RunRecord> runs, std::span<const std::size_t> subset) {
  if (!subset.empty()) return {subset.begin(), subset.end()};
  std::vector<std::size_t> all(runs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

int binary_loss(double v) {
  if (v == 0.0) return 0;
  if (v == 1.0) return 1;
  throw std::domain_error("histograms require 0-1 losses");
}

void check_shapes(std::span<const RunRecord> runs) {
  if (runs.empty()) throw NoObservations("no runs");
  const auto m = runs.front().loss_table.entries.size();
  const auto kl = runs.front().loss_table.buffer_cells();
  if (m == 0) throw NoObservations("empty loss table");
  for (const auto& r : runs)
    if (r.loss_table.entries.size() != m || r.loss_table.buffer_cells() != kl)
      throw std::invalid_argument("runs have mismatched (k, l, n) configurations");
}

// Compact per-group counts, converted to JointHistograms only for MI.
struct Counts {
  std::uint64_t pair[4][2] = {};
  std::uint64_t delta[3][2] = {};
  std::uint64_t l1[2][2] = {};
  bool any = false;
};

// Loss tables flattened into group ids and codes for fast resampling.
struct Prepared {
  std::vector<GroupKey> keys;
  struct Cell {
    std::uint32_t group;
    std::uint8_t l0, l1, s;
  };
  std::vector<std::vector<Cell>> cells;  // per run
  std::vector<double> emp, pop, train_sq;  // per run: mean train loss, mean test loss, mean squared train loss
  std::size_t m = 0;
};

Prepared prepare(std::span<const RunRecord> runs, EstimationMode mode) {
  check_shapes(runs);
  Prepared p;
  p.m = runs.front().loss_table.entries.size();
  std::map<GroupKey, std::uint32_t> ids;
  p.cells.resize(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const auto& e : runs[r].loss_table.entries) {
      auto key = group_of(e, mode);
      auto [it, fresh] = ids.try_emplace(key, static_cast<std::uint32_t>(ids.size()));
      if (fresh) p.keys.push_back(key);
      p.cells[r].push_back({it->second, static_cast<std::uint8_t>(binary_loss(e.l0)),
                            static_cast<std::uint8_t>(binary_loss(e.l1)), static_cast<std::uint8_t>(e.s)});
    }
    const auto& t = runs[r].loss_table;
    double sq = 0.0;
    for (const auto& e : t.entries) sq += e.train_loss() * e.train_loss();
    p.emp.push_back(t.empirical_risk());
    p.pop.push_back(t.population_risk());
    p.train_sq.push_back(sq / static_cast<double>(t.entries.size()));
  }
  return p;
}

std::vector<Counts> tally(const Prepared& p, std::span<const std::size_t> idx) {
  std::vector<Counts> c(p.keys.size());
  for (auto r : idx)
    for (const auto& cell : p.cells[r]) {
      auto& g = c[cell.group];
      g.any = true;
      g.pair[2 * cell.l0 + cell.l1][cell.s]++;
      g.delta[cell.l1 - cell.l0 + 1][cell.s]++;
      g.l1[cell.l1][cell.s]++;
    }
  return c;
}

CellHistograms to_hist(const Counts& c) {
  CellHistograms h;
  for (std::size_t v = 0; v < 4; ++v)
    for (int s = 0; s < 2; ++s) h.pair.add(v, s, c.pair[v][s]);
  for (std::size_t v = 0; v < 3; ++v)
    for (int s = 0; s < 2; ++s) h.delta.add(v, s, c.delta[v][s]);
  for (std::size_t v = 0; v < 2; ++v)
    for (int s = 0; s < 2; ++s) h.l1.add(v, s, c.l1[v][s]);
  return h;
}

MiTerms mi_of(const CellHistograms& h, MiCorrection corr) {
  if (h.pair.total() == 0) return {};
  return {plugin_mi(h.pair, corr), plugin_mi(h.delta, corr), plugin_mi(h.l1, corr)};
}

std::vector<MiTerms> mi_by_group(const Prepared& p, std::span<const std::size_t> idx, MiCorrection corr) {
  auto counts = tally(p, idx);
  std::vector<MiTerms> out(counts.size());
  for (std::size_t g = 0; g < counts.size(); ++g)
    if (counts[g].any) out[g] = mi_of(to_hist(counts[g]), corr);
  return out;
}

// Average over strata of per-stratum MI; groups absent from a stratum do not
// contribute to that group's average.
std::vector<MiTerms> mi_by_group_stratified(const Prepared& p, const std::vector<std::vector<std::size_t>>& strata,
                                            MiCorrection corr) {
  std::vector<MiTerms> acc(p.keys.size());
  std::vector<std::size_t> seen(p.keys.size(), 0);
  for (const auto& stratum : strata) {
    auto counts = tally(p, stratum);
    for (std::size_t g = 0; g < counts.size(); ++g) {
      if (!counts[g].any) continue;
      auto t = mi_of(to_hist(counts[g]), corr);
      acc[g].pair += t.pair;
      acc[g].delta += t.delta;
      acc[g].l1 += t.l1;
      ++seen[g];
    }
  }
  for (std::size_t g = 0; g < acc.size(); ++g)
    if (seen[g] > 0) {
      const double w = 1.0 / static_cast<double>(seen[g]);
      acc[g] = {acc[g].pair * w, acc[g].delta * w, acc[g].l1 * w};
    }
  return acc;
}

// Run-averaged (1/m) sum over each run's indexed cells of f(group MI).
template <class F>
double cell_sum(const Prepared& p, std::span<const std::size_t> idx, const std::vector<MiTerms>& mi, F f) {
  double acc = 0.0;
  for (auto r : idx) {
    double s = 0.0;
    for (const auto& cell : p.cells[r]) s += f(mi[cell.group]);
    acc += s / static_cast<double>(p.m);
  }
  return acc / static_cast<double>(idx.size());
}

std::vector<MiTerms> reindex(const Prepared& p, const std::map<GroupKey, MiTerms>& mi) {
  std::vector<MiTerms> out(p.keys.size());
  for (std::size_t g = 0; g < p.keys.size(); ++g) {
    auto it = mi.find(p.keys[g]);
    if (it == mi.end()) throw std::invalid_argument("missing MI estimate for a histogram group");
    out[g] = it->second;
  }
  return out;
}

std::vector<std::vector<std::size_t>> strata_of(std::span<const RunRecord> runs, std::span<const std::size_t> idx) {
  std::map<std::size_t, std::vector<std::size_t>> by_block;
  for (auto r : idx) by_block[runs[r].block].push_back(r);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [b, members] : by_block) out.push_back(std::move(members));
  return out;
}

double sqrt_term(const MiTerms& t, SqrtKind kind) {
  const double i = kind == SqrtKind::ld_mi ? t.delta : t.pair;
  return std::sqrt(2.0 * i);
}

double min_term(const MiTerms& t) { return std::min(t.pair, 2.0 * t.l1); }

}  // namespace

CellHistograms::CellHistograms() : pair({0, 1, 2, 3}), delta({-1, 0, 1}), l1({0, 1}) {}

GroupKey group_of(const LossEntry& e, EstimationMode mode) {
  if (mode == EstimationMode::pooled_by_group) return {e.buffer, 0, 0};
  return {e.buffer, e.task, e.sample};
}

GapEstimate gap_estimate(std::span<const RunRecord> runs) {
  if (runs.size() < 2) throw std::invalid_argument("gap_estimate: need at least two runs");
  check_shapes(runs);
  std::vector<double> gaps, emp, pop;
  for (const auto& r : runs) {
    emp.push_back(r.loss_table.empirical_risk());
    pop.push_back(r.loss_table.population_risk());
    gaps.push_back(pop.back() - emp.back());
  }
  GapEstimate g;
  g.runs = runs.size();
  g.gap = mean_of(gaps);
  g.gap_se = se_of(gaps);
  g.empirical_risk = mean_of(emp);
  g.empirical_se = se_of(emp);
  g.population_risk = mean_of(pop);
  g.population_se = se_of(pop);
  return g;
}

HistogramMap build_histograms(std::span<const RunRecord> runs, EstimationMode mode,
                              std::span<const std::size_t> subset) {
  if (runs.empty()) throw NoObservations("build_histograms: empty run list");
  auto p = prepare(runs, mode);
  auto idx = resolve(runs, subset);
  auto counts = tally(p, idx);
  HistogramMap out;
  for (std::size_t g = 0; g < counts.size(); ++g)
    if (counts[g].any) out.emplace(p.keys[g], to_hist(counts[g]));
  return out;
}

std::map<GroupKey, MiTerms> group_mi(const HistogramMap& hists, MiCorrection correction) {
  std::map<GroupKey, MiTerms> out;
  for (const auto& [key, h] : hists) out[key] = mi_of(h, correction);
  return out;
}

std::map<GroupKey, MiTerms> stratified_group_mi(std::span<const RunRecord> runs, EstimationMode mode,
                                                MiCorrection correction, std::span<const std::size_t> subset) {
  auto p = prepare(runs, mode);
  auto strata = strata_of(runs, resolve(runs, subset));
  for (const auto& s : strata)
    if (s.size() < 2) throw NoObservations("stratified MI: a supersample block has fewer than two runs");
  auto mi = mi_by_group_stratified(p, strata, correction);
  std::map<GroupKey, MiTerms> out;
  for (std::size_t g = 0; g < p.keys.size(); ++g) out[p.keys[g]] = mi[g];
  return out;
}

double bound_sqrt_family(std::span<const RunRecord> runs, const std::map<GroupKey, MiTerms>& mi,
                         EstimationMode mode, SqrtKind kind, std::span<const std::size_t> subset) {
  auto p = prepare(runs, mode);
  auto idx = resolve(runs, subset);
  return cell_sum(p, idx, reindex(p, mi), [kind](const MiTerms& t) { return sqrt_term(t, kind); });
}

BinaryKlBound bound_binary_kl(double empirical_risk, double budget) {
  BinaryKlBound b;
  b.budget = budget;
  b.population_bound = invert_binary_kl(empirical_risk, budget);
  b.gap_bound = b.population_bound - empirical_risk;
  return b;
}

FastBound bound_fast_family(double empirical_risk, double budget_min, std::span<const double> var_gamma,
                            const BoundSearchCfg& cfg, FastKind kind) {
  if (cfg.c2_grid.empty()) throw ConstraintViolated("bound_fast_family: empty admissible grid");
  if (kind != FastKind::fast_loss && var_gamma.size() != cfg.gamma_grid.size())
    throw std::invalid_argument("bound_fast_family: one variance per gamma required");

  FastBound best;
  best.value = std::numeric_limits<double>::infinity();
  const double c2_sup = c2_upper(ConstantVariant::loss);
  auto consider = [&](double weight, double c1_scale, double gamma) {
    if (weight == 0.0) {
      // C1 * 0 vanishes for every C2, so the infimum sits at the open end.
      double v = budget_min / c2_sup;
      if (v < best.value) best = {v, 0.0, c2_sup, gamma};
      return;
    }
    for (double c2 : cfg.c2_grid) {
      const double c1 = min_c1(c2, ConstantVariant::loss) * c1_scale;
      const double v = c1 * weight + budget_min / c2;
      if (v < best.value) best = {v, c1, c2, gamma};
    }
  };
  if (kind == FastKind::fast_loss) {
    consider(empirical_risk, 1.0, 0.0);
  } else {
    for (std::size_t g = 0; g < cfg.gamma_grid.size(); ++g) {
      const double gamma = cfg.gamma_grid[g];
      consider(var_gamma[g], kind == FastKind::fast_var_proof ? 1.0 / (gamma * gamma) : 1.0, gamma);
    }
  }
  return best;
}

double empirical_variance(std::span<const RunRecord> runs, double gamma, std::span<const std::size_t> subset) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::domain_error("empirical_variance: gamma outside (0, 1)");
  auto idx = resolve(runs, subset);
  if (idx.empty()) throw NoObservations("empirical_variance: no runs");
  double acc = 0.0;
  for (auto r : idx) {
    const auto& t = runs[r].loss_table;
    const double risk = t.empirical_risk();
    double s = 0.0;
    for (const auto& e : t.entries) {
      const double dev = e.train_loss() - (1.0 + gamma) * risk;
      s += dev * dev;
    }
    acc += s / static_cast<double>(t.entries.size());
  }
  return acc / static_cast<double>(idx.size());
}

namespace {

// Sum over steps of the pooled log-determinant; d x d accumulation for small
// d, stacked probe rows otherwise.
double sgld_logdet_sum(std::span<const RunRecord> runs, std::span<const std::size_t> idx) {
  const auto& first = runs[idx.front()];
  const std::size_t steps = first.probe_log.size();
  if (steps == 0) throw NoObservations("bound_sgld: no probe logs");
  for (auto r : idx)
    if (runs[r].probe_log.size() != steps) throw std::invalid_argument("bound_sgld: probe logs miss steps");
  double total = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    const double eta = first.probe_eta[step], xi = first.probe_xi[step];
    if (!(xi > 0.0)) throw std::domain_error("bound_sgld: xi must be positive");
    const auto& m0 = first.probe_log[step];
    const double probes = static_cast<double>(m0.rows());
    const double scale = eta * eta / (xi * xi * static_cast<double>(idx.size()) * (probes - 1.0));
    if (scale == 0.0) continue;
    const auto d = m0.cols();
    if (d <= 64) {
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
      for (auto r : idx) gram.selfadjointView<Eigen::Lower>().rankUpdate(runs[r].probe_log[step].transpose());
      gram = gram.selfadjointView<Eigen::Lower>();
      Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) + scale * gram;
      Eigen::LLT<Eigen::MatrixXd> llt(a);
      if (llt.info() != Eigen::Success) throw std::runtime_error("bound_sgld: Cholesky failed");
      total += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    } else {
      Eigen::MatrixXd stacked(static_cast<Eigen::Index>(idx.size()) * m0.rows(), d);
      Eigen::Index row = 0;
      for (auto r : idx) {
        stacked.middleRows(row, m0.rows()) = runs[r].probe_log[step];
        row += m0.rows();
      }
      total += logdet_cov_gram(stacked, scale);
    }
  }
  return total;
}

}  // namespace

double bound_sgld(std::span<const RunRecord> runs, std::size_t m, std::span<const std::size_t> subset) {
  auto idx = resolve(runs, subset);
  if (idx.empty()) throw NoObservations("bound_sgld: no runs");
  return std::sqrt(sgld_logdet_sum(runs, idx) / (4.0 * static_cast<double>(m)));
}

double bound_sgld_per_run(std::span<const RunRecord> runs, std::size_t m, std::span<const std::size_t> subset) {
  auto idx = resolve(runs, subset);
  if (idx.empty()) throw NoObservations("bound_sgld_per_run: no runs");
  double acc = 0.0;
  for (auto r : idx) {
    const std::size_t one[] = {r};
    acc += std::sqrt(sgld_logdet_sum(runs, one) / (4.0 * static_cast<double>(m)));
  }
  return acc / static_cast<double>(idx.size());
}

namespace {

// Point estimates that share one set of pooled or per-index histograms.
struct Estimates {
  double emp = 0.0, pop = 0.0, gap = 0.0;
  double e_mi = 0.0, ld_mi = 0.0;
  double kl_budget = 0.0, kl_pop = 0.0, kl_gap = 0.0;
  double budget_min = 0.0;
  FastBound fast_loss, fast_var, fast_var_proof;
  double fast_loss_statement = 0.0;
  double rhs_delta = 0.0, rhs_pair = 0.0;
  double sgld = 0.0, sgld_per_run = 0.0;
};

double fast_loss_statement_constants(double emp, double budget_min) {
  // Hypothesis-variant constants: e^{C2} with C2 in (0, log 2).
  if (emp == 0.0) return budget_min / kLog2;
  double best = std::numeric_limits<double>::infinity();
  for (double c2 : default_c2_grid(ConstantVariant::hypothesis))
    best = std::min(best, min_c1(c2, ConstantVariant::hypothesis) * emp + budget_min / c2);
  return best;
}

Estimates estimate(std::span<const RunRecord> runs, const Prepared& p, std::span<const std::size_t> idx,
                   const BoundSearchCfg& cfg, bool with_sgld) {
  Estimates e;
  const double count = static_cast<double>(idx.size());
  for (auto r : idx) {
    e.emp += p.emp[r] / count;
    e.pop += p.pop[r] / count;
  }
  e.gap = e.pop - e.emp;

  auto mi = mi_by_group(p, idx, cfg.correction);
  e.e_mi = cell_sum(p, idx, mi, [](const MiTerms& t) { return sqrt_term(t, SqrtKind::e_mi); });
  e.ld_mi = cell_sum(p, idx, mi, [](const MiTerms& t) { return sqrt_term(t, SqrtKind::ld_mi); });
  e.kl_budget = cell_sum(p, idx, mi, [](const MiTerms& t) { return t.pair; });
  auto kl = bound_binary_kl(std::clamp(e.emp, 0.0, 1.0), e.kl_budget);
  e.kl_pop = kl.population_bound;
  e.kl_gap = kl.gap_bound;
  e.budget_min = cell_sum(p, idx, mi, min_term);
  e.rhs_delta = cell_sum(p, idx, mi, [](const MiTerms& t) { return t.delta; }) / kLog2;
  e.rhs_pair = e.kl_budget / kLog2;

  // Var(gamma) expanded per run: E l^2 - 2 c L_run E l + c^2 L_run^2 with c = 1 + gamma.
  std::vector<double> var;
  for (double g : cfg.gamma_grid) {
    const double c = 1.0 + g;
    double v = 0.0;
    for (auto r : idx) v += (p.train_sq[r] - 2.0 * c * p.emp[r] * p.emp[r] + c * c * p.emp[r] * p.emp[r]) / count;
    var.push_back(v);
  }
  e.fast_loss = bound_fast_family(e.emp, e.budget_min, var, cfg, FastKind::fast_loss);
  e.fast_var = bound_fast_family(e.emp, e.budget_min, var, cfg, FastKind::fast_var);
  e.fast_var_proof = bound_fast_family(e.emp, e.budget_min, var, cfg, FastKind::fast_var_proof);
  e.fast_loss_statement = fast_loss_statement_constants(e.emp, e.budget_min);
  if (with_sgld) {
    e.sgld = bound_sgld(runs, p.m, idx);
    e.sgld_per_run = bound_sgld_per_run(runs, p.m, idx);
  }
  return e;
}

template <class Body>
void for_each_replicate(std::size_t count, Execution exec, Body body) {
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::size_t b = 0; b < count; ++b) body(b);
  } else {
    for (std::size_t b = 0; b < count; ++b) body(b);
  }
}

std::vector<std::size_t> resample(std::size_t n, RngStream rng) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.below(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

bool all_interpolating(std::span<const RunRecord> runs) {
  return std::all_of(runs.begin(), runs.end(), [](const RunRecord& r) { return r.loss_table.empirical_risk() == 0.0; });
}

}  // namespace

IdentityCheck check_interpolating_identity(std::span<const RunRecord> runs, const BoundSearchCfg& cfg,
                                           Execution exec) {
  IdentityCheck c;
  if (runs.size() < 2 || !all_interpolating(runs)) return c;
  c.applicable = true;
  auto p = prepare(runs, cfg.mode);
  auto all = resolve(runs, {});
  auto mi = mi_by_group(p, all, cfg.correction);
  c.rhs_delta = cell_sum(p, all, mi, [](const MiTerms& t) { return t.delta; }) / kLog2;
  c.rhs_pair = cell_sum(p, all, mi, [](const MiTerms& t) { return t.pair; }) / kLog2;
  auto gap = gap_estimate(runs);
  c.lhs = gap.population_risk;
  c.lhs_se = gap.population_se;

  std::vector<double> rd(cfg.bootstrap), rp(cfg.bootstrap);
  for_each_replicate(cfg.bootstrap, exec, [&](std::size_t b) {
    auto idx = resample(runs.size(), RngStream(cfg.bootstrap_seed, {b}));
    auto mib = mi_by_group(p, idx, cfg.correction);
    rd[b] = cell_sum(p, idx, mib, [](const MiTerms& t) { return t.delta; }) / kLog2;
    rp[b] = cell_sum(p, idx, mib, [](const MiTerms& t) { return t.pair; }) / kLog2;
  });
  c.rhs_delta_se = stddev_of(rd);
  c.rhs_pair_se = stddev_of(rp);
  c.tolerance_delta = cfg.identity_z * std::hypot(c.lhs_se, c.rhs_delta_se);
  c.tolerance_pair = cfg.identity_z * std::hypot(c.lhs_se, c.rhs_pair_se);
  c.satisfied = std::abs(c.lhs - c.rhs_delta) <= c.tolerance_delta && std::abs(c.lhs - c.rhs_pair) <= c.tolerance_pair;
  return c;
}

const BoundEntry* BoundReport::find(const std::string& name) const {
  for (const auto& b : bounds)
    if (b.name == name) return &b;
  return nullptr;
}

BoundReport compute_bounds(std::span<const RunRecord> runs, const BoundSearchCfg& cfg, Execution exec) {
  cfg.validate();
  if (runs.size() < 2) throw std::invalid_argument("compute_bounds: MI-based entries need at least two runs");
  BoundReport rep;
  rep.gap = gap_estimate(runs);
  auto p = prepare(runs, cfg.mode);
  auto all = resolve(runs, {});
  const bool with_sgld = std::all_of(runs.begin(), runs.end(), [](const RunRecord& r) { return !r.probe_log.empty(); });
  const auto point = estimate(runs, p, all, cfg, with_sgld);

  auto strata = strata_of(runs, all);
  const bool with_cmi = std::all_of(strata.begin(), strata.end(), [](const auto& s) { return s.size() >= 2; });
  double e_cmi = 0.0;
  if (with_cmi)
    e_cmi = cell_sum(p, all, mi_by_group_stratified(p, strata, cfg.correction),
                     [](const MiTerms& t) { return sqrt_term(t, SqrtKind::e_mi); });

  std::vector<Estimates> reps(cfg.bootstrap);
  std::vector<double> cmi_reps(with_cmi ? cfg.bootstrap : 0);
  for_each_replicate(cfg.bootstrap, exec, [&](std::size_t b) {
    auto idx = resample(runs.size(), RngStream(cfg.bootstrap_seed, {b}));
    reps[b] = estimate(runs, p, idx, cfg, with_sgld);
    if (with_cmi) {
      auto picks = resample(strata.size(), RngStream(cfg.bootstrap_seed, {b, 1}));
      std::vector<std::vector<std::size_t>> drawn;
      std::vector<std::size_t> members;
      for (auto s : picks) {
        drawn.push_back(strata[s]);
        members.insert(members.end(), strata[s].begin(), strata[s].end());
      }
      cmi_reps[b] = cell_sum(p, members, mi_by_group_stratified(p, drawn, cfg.correction),
                             [](const MiTerms& t) { return sqrt_term(t, SqrtKind::e_mi); });
    }
  });
  auto se = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : reps) v.push_back(field(r));
    return stddev_of(v);
  };
  auto fast_params = [](const FastBound& f, bool with_gamma) {
    nlohmann::ordered_json j{{"c1", f.c1}, {"c2", f.c2}};
    if (with_gamma) j["gamma"] = f.gamma;
    return j;
  };

  rep.bounds.push_back({"e_mi", point.e_mi, se([](const Estimates& e) { return e.e_mi; }), {}});
  if (with_cmi)
    rep.bounds.push_back({"e_cmi", e_cmi, stddev_of(cmi_reps), {{"strata", strata.size()}}});
  rep.bounds.push_back({"ld_mi", point.ld_mi, se([](const Estimates& e) { return e.ld_mi; }), {}});
  rep.bounds.push_back({"binary_kl", point.kl_gap, se([](const Estimates& e) { return e.kl_gap; }),
                        {{"budget", point.kl_budget}, {"population_bound", point.kl_pop}}});
  rep.bounds.push_back({"fast_loss", point.fast_loss.value, se([](const Estimates& e) { return e.fast_loss.value; }),
                        fast_params(point.fast_loss, false)});
  rep.bounds.push_back({"fast_var", point.fast_var.value, se([](const Estimates& e) { return e.fast_var.value; }),
                        fast_params(point.fast_var, true)});
  rep.bounds.push_back({"fast_var_proof", point.fast_var_proof.value,
                        se([](const Estimates& e) { return e.fast_var_proof.value; }),
                        fast_params(point.fast_var_proof, true)});
  if (with_sgld) {
    rep.bounds.push_back({"sgld", point.sgld, se([](const Estimates& e) { return e.sgld; }), {{"pooled", true}}});
    rep.bounds.push_back({"sgld_per_run", point.sgld_per_run, se([](const Estimates& e) { return e.sgld_per_run; }),
                          {{"pooled", false}}});
  }

  rep.identity = check_interpolating_identity(runs, cfg, exec);

  const auto kl = runs.front().loss_table.buffer_cells();
  rep.metadata = {
      {"estimation_mode", cfg.mode == EstimationMode::pooled_by_group ? "pooled_by_group" : "per_index"},
      {"mi_estimator", cfg.correction == MiCorrection::none ? "plugin" : "plugin_miller_madow"},
      {"runs", runs.size()},
      {"strata", strata.size()},
      {"m", p.m},
      {"buffer_cells", kl},
      {"current_cells", p.m - kl},
      {"evaluation_loss", "zero_one"},
      {"bootstrap", cfg.bootstrap},
      {"bootstrap_seed", cfg.bootstrap_seed},
      {"c2_grid_points", cfg.c2_grid.size()},
      {"gamma_grid_points", cfg.gamma_grid.size()},
      {"fast_constants",
       {{"used", "loss variant: C1 >= -log(2 - exp(2 C2)) / (2 C2) - 1, C2 in (0, log(2)/2)"},
        {"alternative", "hypothesis variant: C1 >= -log(2 - exp(C2)) / C2 - 1, C2 in (0, log 2)"},
        {"fast_loss_alternative_value", point.fast_loss_statement}}},
      {"fast_var_proof_constants", "C1 = min_c1(C2) / gamma^2"}};
  return rep;
}

nlohmann::ordered_json report_to_json(const BoundReport& report) {
  nlohmann::ordered_json doc;
  doc["gap"] = {{"value", report.gap.gap},
                {"se", report.gap.gap_se},
                {"empirical_risk", report.gap.empirical_risk},
                {"empirical_risk_se", report.gap.empirical_se},
                {"population_risk", report.gap.population_risk},
                {"population_risk_se", report.gap.population_se},
                {"runs", report.gap.runs}};
  auto list = nlohmann::ordered_json::array();
  for (const auto& b : report.bounds)
    list.push_back({{"name", b.name}, {"value", b.value}, {"se", b.se}, {"params", b.params}});
  doc["bounds"] = list;
  const auto& id = report.identity;
  if (id.applicable)
    doc["interpolating_identity"] = {{"applicable", true},
                                     {"population_risk", id.lhs},
                                     {"population_risk_se", id.lhs_se},
                                     {"delta_form", id.rhs_delta},
                                     {"delta_form_se", id.rhs_delta_se},
                                     {"pair_form", id.rhs_pair},
                                     {"pair_form_se", id.rhs_pair_se},
                                     {"satisfied", id.satisfied}};
  else
    doc["interpolating_identity"] = {{"applicable", false}, {"status", "not applicable"}};
  doc["metadata"] = report.metadata;
  return doc;
}

}  // namespace clb
