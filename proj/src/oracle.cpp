#include "clb/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "clb/bounds.hpp"

namespace clb {

bool ToySpec::binary_losses() const {
  for (const auto& row : loss)
    for (double v : row)
      if (v != 0.0 && v != 1.0) return false;
  return true;
}

void ToySpec::validate() const {
  if (tasks < 2 || tasks > 4) throw std::invalid_argument("toy: T must lie in [2, 4]");
  if (n < 1 || n > 4) throw std::invalid_argument("toy: n must lie in [1, 4]");
  if (alphabet < 1 || alphabet > 4) throw std::invalid_argument("toy: alphabet must lie in [1, 4]");
  if (loss.empty() || loss.size() > 16) throw std::invalid_argument("toy: 1 to 16 hypotheses required");
  if (distributions.size() != tasks) throw std::invalid_argument("toy: one distribution per task required");
  for (const auto& row : distributions) {
    if (row.size() != alphabet) throw std::invalid_argument("toy: distribution row has the wrong length");
    double s = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw std::invalid_argument("toy: negative probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("toy: distribution row does not sum to 1");
  }
  for (const auto& row : loss) {
    if (row.size() != alphabet) throw std::invalid_argument("toy: loss row has the wrong length");
    for (double v : row)
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("toy: loss outside [0, 1]");
  }
  if (learner == LearnerKind::softmax && !(beta >= 0.0)) throw std::invalid_argument("toy: beta must be >= 0");
  if (learner == LearnerKind::constant) {
    if (weights.size() != loss.size()) throw std::invalid_argument("toy: constant learner needs one weight per hypothesis");
    double s = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("toy: learner weights do not sum to 1");
  }
}

nlohmann::ordered_json toy_to_json(const ToySpec& toy) {
  const char* kind = toy.learner == LearnerKind::erm ? "erm" : toy.learner == LearnerKind::softmax ? "softmax" : "constant";
  nlohmann::ordered_json learner{{"kind", kind}};
  if (toy.learner == LearnerKind::softmax) learner["beta"] = toy.beta;
  if (toy.learner == LearnerKind::constant) learner["weights"] = toy.weights;
  return {{"T", toy.tasks},
          {"n", toy.n},
          {"alphabet", toy.alphabet},
          {"distributions", toy.distributions},
          {"loss", toy.loss},
          {"learner", learner}};
}

ToySpec toy_from_json(const nlohmann::ordered_json& doc) {
  ToySpec toy;
  toy.tasks = doc.at("T").get<std::size_t>();
  toy.n = doc.at("n").get<std::size_t>();
  toy.alphabet = doc.at("alphabet").get<std::size_t>();
  toy.distributions = doc.at("distributions").get<std::vector<std::vector<double>>>();
  toy.loss = doc.at("loss").get<std::vector<std::vector<double>>>();
  const auto& learner = doc.at("learner");
  auto kind = learner.at("kind").get<std::string>();
  if (kind == "erm") {
    toy.learner = LearnerKind::erm;
  } else if (kind == "softmax") {
    toy.learner = LearnerKind::softmax;
    toy.beta = learner.at("beta").get<double>();
  } else if (kind == "constant") {
    toy.learner = LearnerKind::constant;
    toy.weights = learner.at("weights").get<std::vector<double>>();
  } else {
    throw std::invalid_argument("toy: unknown learner kind '" + kind + "'");
  }
  toy.validate();
  return toy;
}

ToySpec random_toy(RngStream rng, const ToyLimits& limits) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };
  ToySpec toy;
  toy.tasks = pick(2, limits.max_tasks);
  toy.n = pick(1, limits.max_n);
  toy.alphabet = pick(2, limits.max_alphabet);
  const std::size_t h = pick(2, limits.max_hypotheses);
  auto simplex = [&](std::size_t size) {
    std::vector<double> w(size);
    for (auto& x : w) x = -std::log(1.0 - rng.uniform());
    double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= s;
    // Renormalize so the row sums to 1 within rounding.
    s = std::accumulate(w.begin(), w.end() - 1, 0.0);
    w.back() = std::max(0.0, 1.0 - s);
    return w;
  };
  for (std::size_t t = 0; t < toy.tasks; ++t) toy.distributions.push_back(simplex(toy.alphabet));
  toy.loss.assign(h, std::vector<double>(toy.alphabet));
  for (auto& row : toy.loss)
    for (auto& v : row) v = limits.binary ? (rng.bit() ? 1.0 : 0.0) : 0.25 * static_cast<double>(rng.below(5));
  switch (rng.below(3)) {
    case 0:
      toy.learner = LearnerKind::erm;
      break;
    case 1:
      toy.learner = LearnerKind::softmax;
      toy.beta = std::exp(rng.uniform() * std::log(50.0));
      break;
    default:
      toy.learner = LearnerKind::constant;
      toy.weights = simplex(h);
      break;
  }
  toy.validate();
  return toy;
}

namespace {

double ipow(double base, std::size_t e) {
  double r = 1.0;
  for (std::size_t i = 0; i < e; ++i) r *= base;
  return r;
}

std::size_t upow(std::size_t base, std::size_t e) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < e; ++i) r *= base;
  return r;
}

double choose(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 0; i < k; ++i) r = r * static_cast<double>(n - i) / static_cast<double>(i + 1);
  return std::round(r);
}

std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  auto rec = [&](auto&& self, std::size_t start) -> void {
    if (cur.size() == k) {
      out.push_back(cur);
      return;
    }
    for (std::size_t i = start; i < n; ++i) {
      cur.push_back(i);
      self(self, i + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

// Subsets of previous tasks with their cell-to-task layout.
struct Layout {
  std::vector<std::size_t> u;
  std::vector<std::size_t> cell_task;
};

std::vector<Layout> layouts(const ToySpec& toy, std::size_t k, std::size_t l) {
  std::vector<Layout> out;
  const std::size_t last = toy.tasks - 1;
  if (k * l == 0) {
    out.push_back({{}, std::vector<std::size_t>(toy.n, last)});
    return out;
  }
  for (auto& u : subsets(toy.tasks - 1, k)) {
    Layout lay{u, {}};
    for (auto t : u)
      for (std::size_t j = 0; j < l; ++j) lay.cell_task.push_back(t);
    for (std::size_t j = 0; j < toy.n; ++j) lay.cell_task.push_back(last);
    out.push_back(std::move(lay));
  }
  return out;
}

void check_buffer(const ToySpec& toy, std::size_t k, std::size_t l) {
  if (k > toy.tasks - 1 || l > toy.n) throw std::invalid_argument("oracle: buffer larger than the data");
}

double xlogx_ratio(double p, double q) { return p > 0.0 ? p * std::log(p / q) : 0.0; }

// I(W; Y) for tuple probabilities py and learner rows.
// Exact MIs below this are summation rounding; sqrt would magnify them.
constexpr double kMiResolution = 1e-13;

double snap_mi(double mi) { return mi < kMiResolution ? 0.0 : mi; }

double mi_w_tuple(const std::vector<double>& py, const std::vector<double>& table, std::size_t h,
                  std::vector<double>* marginal_out = nullptr) {
  std::vector<double> pw(h, 0.0);
  for (std::size_t y = 0; y < py.size(); ++y)
    for (std::size_t w = 0; w < h; ++w) pw[w] += py[y] * table[y * h + w];
  double mi = 0.0;
  for (std::size_t y = 0; y < py.size(); ++y) {
    if (py[y] == 0.0) continue;
    for (std::size_t w = 0; w < h; ++w) mi += py[y] * xlogx_ratio(table[y * h + w], pw[w]);
  }
  if (marginal_out) *marginal_out = pw;
  return snap_mi(mi);
}

std::vector<double> tuple_probs(const ToySpec& toy, const std::vector<std::size_t>& cell_task) {
  const std::size_t m = cell_task.size(), a = toy.alphabet;
  const std::size_t count = upow(a, m);
  std::vector<double> py(count);
  std::vector<std::size_t> digit(m, 0);
  for (std::size_t y = 0; y < count; ++y) {
    double p = 1.0;
    for (std::size_t c = 0; c < m; ++c) p *= toy.distributions[cell_task[c]][digit[c]];
    py[y] = p;
    for (std::size_t c = 0; c < m; ++c) {
      if (++digit[c] < a) break;
      digit[c] = 0;
    }
  }
  return py;
}

}  // namespace

std::vector<double> learner_table(const ToySpec& toy, std::size_t cells) {
  const std::size_t a = toy.alphabet, h = toy.hypotheses();
  const std::size_t count = upow(a, cells);
  std::vector<double> table(count * h, 0.0);
  std::vector<std::size_t> digit(cells, 0);
  std::vector<double> risk(h);
  for (std::size_t y = 0; y < count; ++y) {
    for (std::size_t w = 0; w < h; ++w) {
      double s = 0.0;
      for (std::size_t c = 0; c < cells; ++c) s += toy.loss[w][digit[c]];
      risk[w] = s / static_cast<double>(cells);
    }
    double* row = table.data() + y * h;
    switch (toy.learner) {
      case LearnerKind::erm: {
        std::size_t best = 0;
        for (std::size_t w = 1; w < h; ++w)
          if (risk[w] < risk[best]) best = w;
        row[best] = 1.0;
        break;
      }
      case LearnerKind::softmax: {
        const double lo = *std::min_element(risk.begin(), risk.end());
        double z = 0.0;
        for (std::size_t w = 0; w < h; ++w) z += row[w] = std::exp(-toy.beta * (risk[w] - lo));
        for (std::size_t w = 0; w < h; ++w) row[w] /= z;
        break;
      }
      case LearnerKind::constant:
        std::copy(toy.weights.begin(), toy.weights.end(), row);
        break;
    }
    for (std::size_t c = 0; c < cells; ++c) {
      if (++digit[c] < a) break;
      digit[c] = 0;
    }
  }
  return table;
}

double joint_atom_count(const ToySpec& toy, std::size_t k, std::size_t l) {
  const double tn = static_cast<double>(toy.tasks * toy.n);
  return std::pow(static_cast<double>(toy.alphabet), 2.0 * tn) * std::pow(2.0, tn) * choose(toy.tasks - 1, k) *
         choose(toy.n, l) * static_cast<double>(toy.hypotheses());
}

double enumeration_work(const ToySpec& toy, std::size_t k, std::size_t l) {
  check_buffer(toy, k, l);
  const std::size_t m = k * l + toy.n;
  const double a = static_cast<double>(toy.alphabet), h = static_cast<double>(toy.hypotheses());
  const double per_subset = ipow(a, 2 * m) * ipow(2.0, m) * static_cast<double>(m) * h + ipow(a, m) * h;
  const double n_subsets = k * l == 0 ? 1.0 : choose(toy.tasks - 1, k);
  return n_subsets * per_subset;
}

double ExactJoint::empirical_risk() const {
  double r = 0.0;
  for (const auto& s : subsets) r += s.prob * s.empirical_risk;
  return r;
}

double ExactJoint::population_risk() const {
  double r = 0.0;
  for (const auto& s : subsets) r += s.prob * s.population_risk;
  return r;
}

double ExactJoint::total_mass() const {
  double r = 0.0;
  for (const auto& s : subsets) r += s.prob * s.mass_pairs;
  return r;
}

ExactJoint enumerate_joint(const ToySpec& toy, std::size_t k, std::size_t l) {
  toy.validate();
  ExactJoint joint;
  joint.toy = toy;
  joint.k = k;
  joint.l = l;
  joint.work = enumeration_work(toy, k, l);
  if (joint.work > kOracleWorkCap)
    throw EnumerationTooLarge("enumerate_joint: work " + std::to_string(joint.work) + " exceeds the cap");
  joint.atom_count = joint_atom_count(toy, k, l);

  const std::size_t m = joint.m(), a = toy.alphabet, h = toy.hypotheses();
  const auto table = learner_table(toy, m);
  const bool binary = toy.binary_losses();
  auto lays = layouts(toy, k, l);
  const double p_subset = 1.0 / static_cast<double>(lays.size());
  const double p_mask = 1.0 / static_cast<double>(std::size_t{1} << m);

  std::vector<std::size_t> place(m);
  for (std::size_t c = 0; c < m; ++c) place[c] = upow(a, c);

  for (auto& lay : lays) {
    SubsetJoint sj;
    sj.u = lay.u;
    sj.cell_task = lay.cell_task;
    sj.prob = p_subset;

    // Tuple level: I(W; data), risks and the W marginal.
    auto py = tuple_probs(toy, lay.cell_task);
    sj.mass_tuples = std::accumulate(py.begin(), py.end(), 0.0);
    sj.mi_w_data = mi_w_tuple(py, table, h, &sj.w_marginal);
    {
      // Expected test loss of hypothesis w on cell c.
      std::vector<double> test_loss(m * h, 0.0);
      for (std::size_t c = 0; c < m; ++c)
        for (std::size_t w = 0; w < h; ++w)
          for (std::size_t z = 0; z < a; ++z) test_loss[c * h + w] += toy.distributions[lay.cell_task[c]][z] * toy.loss[w][z];
      std::vector<std::size_t> digit(m, 0);
      for (std::size_t y = 0; y < py.size(); ++y) {
        for (std::size_t w = 0; w < h; ++w) {
          const double pw = py[y] * table[y * h + w];
          if (pw == 0.0) continue;
          double tr = 0.0, te = 0.0;
          for (std::size_t c = 0; c < m; ++c) {
            tr += toy.loss[w][digit[c]];
            te += test_loss[c * h + w];
          }
          sj.empirical_risk += pw * tr / static_cast<double>(m);
          sj.population_risk += pw * te / static_cast<double>(m);
        }
        for (std::size_t c = 0; c < m; ++c) {
          if (++digit[c] < a) break;
          digit[c] = 0;
        }
      }
    }

    // Pair level: supersample pairs and membership bits of the indexed cells.
    sj.cmi_cell.assign(m, 0.0);
    sj.sqrt_cmi_cell.assign(m, 0.0);
    sj.loss_joint.assign(m, std::array<double, 8>{});
    std::vector<std::size_t> digit(2 * m, 0);  // cell c: column 0 at 2c, column 1 at 2c + 1
    std::vector<double> pws(m * 2 * h);
    const std::size_t pair_count = upow(a, 2 * m);
    for (std::size_t z = 0; z < pair_count; ++z) {
      double pz = 1.0;
      for (std::size_t c = 0; c < m; ++c) {
        const auto& mu = toy.distributions[lay.cell_task[c]];
        pz *= mu[digit[2 * c]] * mu[digit[2 * c + 1]];
      }
      sj.mass_pairs += pz;
      if (pz > 0.0) {
        std::fill(pws.begin(), pws.end(), 0.0);
        for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
          std::size_t y = 0;
          for (std::size_t c = 0; c < m; ++c) y += digit[2 * c + ((mask >> c) & 1)] * place[c];
          const double* row = table.data() + y * h;
          for (std::size_t c = 0; c < m; ++c) {
            const std::size_t s = (mask >> c) & 1;
            double* cell = pws.data() + (c * 2 + s) * h;
            for (std::size_t w = 0; w < h; ++w) cell[w] += p_mask * row[w];
            if (binary) {
              const auto z0 = digit[2 * c], z1 = digit[2 * c + 1];
              for (std::size_t w = 0; w < h; ++w) {
                if (row[w] == 0.0) continue;
                const auto l0 = static_cast<std::size_t>(toy.loss[w][z0]);
                const auto l1 = static_cast<std::size_t>(toy.loss[w][z1]);
                sj.loss_joint[c][4 * l0 + 2 * l1 + s] += pz * p_mask * row[w];
              }
            }
          }
        }
        for (std::size_t c = 0; c < m; ++c) {
          double mi = 0.0;
          const double* p0 = pws.data() + (c * 2) * h;
          const double* p1 = p0 + h;
          for (std::size_t w = 0; w < h; ++w) {
            const double pw = p0[w] + p1[w];
            mi += xlogx_ratio(p0[w], 0.5 * pw) + xlogx_ratio(p1[w], 0.5 * pw);
          }
          mi = snap_mi(mi);
          sj.cmi_cell[c] += pz * mi;
          sj.sqrt_cmi_cell[c] += pz * std::sqrt(2.0 * mi);
        }
      }
      for (std::size_t c = 0; c < 2 * m; ++c) {
        if (++digit[c] < a) break;
        digit[c] = 0;
      }
    }
    joint.subsets.push_back(std::move(sj));
  }
  return joint;
}

double exact_hypothesis_bounds(const ExactJoint& joint, HypothesisBound which, double sigma) {
  const double m = static_cast<double>(joint.m());
  switch (which) {
    case HypothesisBound::io_mi: {
      double v = 0.0;
      for (const auto& s : joint.subsets) v += s.prob * std::sqrt(2.0 * sigma * sigma / m * s.mi_w_data);
      return v;
    }
    case HypothesisBound::cmi_sum: {
      double v = 0.0;
      for (const auto& s : joint.subsets)
        v += s.prob * std::accumulate(s.sqrt_cmi_cell.begin(), s.sqrt_cmi_cell.end(), 0.0) / m;
      return v;
    }
    case HypothesisBound::cmi_kl:
    case HypothesisBound::cmi_fast: {
      double budget = 0.0;
      for (const auto& s : joint.subsets)
        budget += s.prob * std::accumulate(s.cmi_cell.begin(), s.cmi_cell.end(), 0.0) / m;
      const double emp = std::clamp(joint.empirical_risk(), 0.0, 1.0);
      if (which == HypothesisBound::cmi_kl) return invert_binary_kl(emp, budget) - emp;
      if (emp == 0.0) return budget / kLog2;
      double best = std::numeric_limits<double>::infinity();
      for (double c2 : default_c2_grid(ConstantVariant::hypothesis, 512))
        best = std::min(best, min_c1(c2, ConstantVariant::hypothesis) * emp + budget / c2);
      return best;
    }
  }
  return 0.0;
}

BufferMonotonicityResult check_buffer_monotonicity(const ToySpec& toy, std::size_t k, std::size_t l, bool identity_g) {
  toy.validate();
  if (k < 1 || k + 2 > toy.tasks || l < 1 || l + 1 > toy.n)
    throw std::invalid_argument("check_buffer_monotonicity: need 1 <= k <= T-2 and 1 <= l <= n-1");
  auto g = [identity_g](double x) { return identity_g ? x : std::sqrt(x); };
  auto side = [&](std::size_t kk, std::size_t ll) {
    const std::size_t m = kk * ll + toy.n;
    const double work = choose(toy.tasks - 1, kk) * ipow(static_cast<double>(toy.alphabet), m) *
                        static_cast<double>(toy.hypotheses());
    if (work > kOracleWorkCap) throw EnumerationTooLarge("check_buffer_monotonicity: enumeration exceeds the cap");
    const auto table = learner_table(toy, m);
    auto lays = layouts(toy, kk, ll);
    double v = 0.0;
    for (const auto& lay : lays) {
      auto py = tuple_probs(toy, lay.cell_task);
      v += g(mi_w_tuple(py, table, toy.hypotheses()) / static_cast<double>(m));
    }
    return v / static_cast<double>(lays.size());
  };
  BufferMonotonicityResult r;
  r.lhs = side(k, l);
  r.rhs = side(k + 1, l + 1);
  r.holds = r.lhs <= r.rhs + 1e-10;
  return r;
}

double exact_mi(const std::vector<double>& table) {
  const std::size_t values = table.size() / 2;
  double ps[2] = {0.0, 0.0};
  std::vector<double> pv(values, 0.0);
  for (std::size_t v = 0; v < values; ++v)
    for (int s = 0; s < 2; ++s) {
      pv[v] += table[2 * v + s];
      ps[s] += table[2 * v + s];
    }
  double mi = 0.0;
  for (std::size_t v = 0; v < values; ++v)
    for (int s = 0; s < 2; ++s) {
      const double p = table[2 * v + s];
      if (p > 0.0) mi += p * std::log(p / (pv[v] * ps[s]));
    }
  return std::max(mi, 0.0);
}

std::vector<EstimatorError> oracle_validate_estimators(const ExactJoint& joint, std::size_t n_samples,
                                                       std::uint64_t seed) {
  if (!joint.toy.binary_losses()) throw std::invalid_argument("oracle_validate_estimators: needs 0-1 losses");
  if (n_samples < 1) throw std::invalid_argument("oracle_validate_estimators: n_samples must be >= 1");
  const auto& sj = joint.subsets.front();
  std::vector<EstimatorError> out;
  for (std::size_t c = 0; c < sj.loss_joint.size(); ++c) {
    const auto& p = sj.loss_joint[c];
    // Exact marginal tables over (value, s).
    std::vector<double> pair(8, 0.0), delta(6, 0.0), l1(4, 0.0);
    for (std::size_t l0 = 0; l0 < 2; ++l0)
      for (std::size_t l1v = 0; l1v < 2; ++l1v)
        for (std::size_t s = 0; s < 2; ++s) {
          const double q = p[4 * l0 + 2 * l1v + s];
          pair[2 * (2 * l0 + l1v) + s] += q;
          delta[2 * (l1v - l0 + 1) + s] += q;
          l1[2 * l1v + s] += q;
        }

    RngStream rng(seed, {c});
    std::discrete_distribution<std::size_t> draw(p.begin(), p.end());
    HistogramMap hists;
    auto& h = hists[GroupKey{false, 0, c}];
    for (std::size_t i = 0; i < n_samples; ++i) {
      const std::size_t atom = draw(rng.engine());
      const std::size_t l0 = atom >> 2, l1v = (atom >> 1) & 1;
      const int s = static_cast<int>(atom & 1);
      h.pair.add(2 * l0 + l1v, s);
      h.delta.add(l1v + 1 - l0, s);
      h.l1.add(l1v, s);
    }
    const auto est = group_mi(hists, MiCorrection::none).begin()->second;
    out.push_back({"pair", c, exact_mi(pair), est.pair});
    out.push_back({"delta", c, exact_mi(delta), est.delta});
    out.push_back({"l1", c, exact_mi(l1), est.l1});
  }
  return out;
}

}  // namespace clb
