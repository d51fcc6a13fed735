#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>

#include "clb/experiment.hpp"
#include "clb/oracle.hpp"

namespace clb {

std::vector<RunRecord> memorizer_runs(std::size_t runs, std::size_t tasks, std::size_t n, std::size_t k,
                                      std::size_t l, std::uint64_t seed) {
  std::vector<RunRecord> out;
  for (std::size_t r = 0; r < runs; ++r) {
    RngStream rng(seed, {r});
    TaskSequence seq(tasks, n, 2, 2);
    RngStream data_rng = rng.child(1);
    for (std::size_t t = 0; t < tasks; ++t)
      for (std::size_t j = 0; j < n; ++j)
        for (int c = 0; c < 2; ++c) {
          for (auto& x : seq.features(t, j, c)) x = data_rng.normal();
          seq.set_label(t, j, c, data_rng.bit() ? 1 : 0);
        }
    auto s = draw_membership(tasks, n, rng.child(2));
    auto buffer = draw_buffer_index(tasks, k, l, n, rng.child(3));

    std::map<std::vector<double>, int> memory;
    auto remember = [&](std::size_t t, std::size_t j) {
      auto f = seq.features(t, j, s.at(t, j));
      memory[{f.begin(), f.end()}] = seq.label(t, j, s.at(t, j));
    };
    for (auto [t, j] : buffer.cells()) remember(t, j);
    for (std::size_t j = 0; j < n; ++j) remember(tasks - 1, j);
    auto loss = [&](std::size_t t, std::size_t j, int c) {
      auto f = seq.features(t, j, c);
      auto it = memory.find({f.begin(), f.end()});
      const int pred = it == memory.end() ? 0 : it->second;
      return pred == seq.label(t, j, c) ? 0.0 : 1.0;
    };

    RunRecord rec;
    rec.seed = seed;
    rec.run_index = r;
    rec.membership = s;
    rec.buffers.assign(tasks, {});
    rec.buffers.back() = buffer;
    for (auto [t, j] : buffer.cells()) rec.loss_table.entries.push_back({t, j, loss(t, j, 0), loss(t, j, 1), s.at(t, j), true});
    for (std::size_t j = 0; j < n; ++j)
      rec.loss_table.entries.push_back({tasks - 1, j, loss(tasks - 1, j, 0), loss(tasks - 1, j, 1), s.at(tasks - 1, j), false});
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

struct Check {
  std::string name;
  double measured;
  double tolerance;
  bool pass;
  std::string note;
};

using Checks = std::vector<Check>;
using KlFn = std::function<double(double, double)>;

Check at_most(std::string name, double measured, double tol) { return {std::move(name), measured, tol, measured <= tol, ""}; }

double brute_mi(const std::vector<std::vector<double>>& counts) {
  // H(V) + H(S) - H(V, S) from raw counts.
  double n = 0.0;
  for (const auto& row : counts)
    for (double c : row) n += c;
  auto h = [n](const std::vector<double>& cs) {
    double e = 0.0;
    for (double c : cs)
      if (c > 0.0) e -= c / n * std::log(c / n);
    return e;
  };
  std::vector<double> rows, cols(2, 0.0), joint;
  for (const auto& row : counts) {
    rows.push_back(row[0] + row[1]);
    cols[0] += row[0];
    cols[1] += row[1];
    joint.push_back(row[0]);
    joint.push_back(row[1]);
  }
  return h(rows) + h(cols) - h(joint);
}

Checks numerics_checks(const KlFn& kl) {
  Checks out;
  out.push_back(at_most("binary_kl(0.25, 0.5) reference", std::abs(kl(0.25, 0.5) - 0.13081203594113697), 1e-12));

  double worst = 0.0;
  for (int i = 0; i <= 99; ++i)
    for (int j = 1; j <= 99; ++j) {
      const double p = i / 99.0, q = j / 100.0;
      worst = std::max(worst, 2.0 * (p - q) * (p - q) - kl(p, q));
    }
  out.push_back(at_most("pinsker slack on 100x100 grid", worst, 1e-15));

  double round_trip = 0.0;
  for (int i = 0; i < 20; ++i)
    for (int j = 1; j <= 20; ++j) {
      const double p = i / 20.0, budget = 0.02 * j;
      const double lstar = invert_binary_kl(p, budget);
      if (lstar < 1.0) round_trip = std::max(round_trip, std::abs(kl(p, 0.5 * (p + lstar)) - budget));
    }
  out.push_back(at_most("invert_binary_kl round trip", round_trip, 1e-9));

  RngStream rng(20240601, {1});
  double mi_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t values = 2 + rng.below(3);
    std::vector<double> alphabet(values);
    for (std::size_t v = 0; v < values; ++v) alphabet[v] = static_cast<double>(v);
    JointHistogram h(alphabet);
    std::vector<std::vector<double>> counts(values, std::vector<double>(2));
    for (std::size_t v = 0; v < values; ++v)
      for (int s = 0; s < 2; ++s) {
        auto c = rng.below(20);
        counts[v][s] = static_cast<double>(c);
        h.add(v, s, c);
      }
    if (h.total() == 0) continue;
    mi_err = std::max(mi_err, std::abs(plugin_mi(h) - std::max(0.0, brute_mi(counts))));
  }
  out.push_back(at_most("plugin_mi against entropy identity", mi_err, 1e-12));

  double det_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = static_cast<Eigen::Index>(1 + rng.below(8)), d = static_cast<Eigen::Index>(1 + rng.below(8));
    Eigen::MatrixXd a(m, d);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < d; ++j) a(i, j) = rng.normal();
    const double scale = 0.05 + rng.uniform();
    Eigen::MatrixXd dense = Eigen::MatrixXd::Identity(d, d) + scale * a.transpose() * a;
    const double ref = std::log(dense.determinant());
    det_err = std::max(det_err, std::abs(logdet_cov_gram(a, scale) - ref) / std::max(1.0, std::abs(ref)));
  }
  out.push_back(at_most("logdet Gram against dense determinant", det_err, 1e-8));
  return out;
}

double max_fd_error(const ModelSpec& spec, std::size_t cases, std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t c = 0; c < cases; ++c) {
    RngStream rng(seed, {c});
    auto params = init_params(spec, rng.child(1));
    RngStream draw = rng.child(2);
    std::vector<Sample> samples(1 + draw.below(6));
    for (auto& s : samples) {
      s.features.resize(spec.input_dim);
      for (auto& x : s.features) x = draw.normal();
      s.label = static_cast<int>(draw.below(spec.classes));
    }
    std::vector<SampleRef> batch;
    for (const auto& s : samples) batch.push_back(ref(s));
    worst = std::max(worst, fd_gradient_check(params, batch, 1e-5));
  }
  return worst;
}

Checks gradient_checks() {
  Checks out;
  ModelSpec lin{ModelKind::linear, 3, 0, 3, Activation::relu, 4.0};
  ModelSpec mlp{ModelKind::mlp, 3, 5, 2, Activation::tanh, 4.0};
  out.push_back(at_most("linear softmax, 100 cases", max_fd_error(lin, 100, 101), 1e-4));
  out.push_back(at_most("mlp tanh, 100 cases", max_fd_error(mlp, 100, 202), 1e-4));
  ModelSpec relu{ModelKind::mlp, 3, 5, 3, Activation::relu, 4.0};
  out.push_back(at_most("mlp relu, 100 cases", max_fd_error(relu, 100, 303), 1e-4));
  return out;
}

Checks oracle_checks() {
  Checks out;
  double worst_kl = -1e300, worst_fast = -1e300, worst_mass = 0.0, worst_sigma1 = -1e300;
  std::size_t cmi_over_io = 0, specs = 0;
  for (std::uint64_t i = 0; specs < 20; ++i) {
    ToyLimits lim;
    lim.max_tasks = 3;
    lim.max_n = 2;
    lim.max_alphabet = 3;
    lim.max_hypotheses = 6;
    auto toy = random_toy(RngStream(777, {i}), lim);
    const std::size_t k = toy.tasks >= 2 ? 1 : 0, l = 1;
    if (enumeration_work(toy, k, l) > kOracleWorkCap) continue;
    auto joint = enumerate_joint(toy, k, l);
    ++specs;
    const double gap = joint.gap();
    worst_kl = std::max(worst_kl, gap - exact_hypothesis_bounds(joint, HypothesisBound::cmi_kl));
    worst_fast = std::max(worst_fast, gap - exact_hypothesis_bounds(joint, HypothesisBound::cmi_fast));
    worst_mass = std::max(worst_mass, std::abs(joint.total_mass() - 1.0));
    const double t1 = exact_hypothesis_bounds(joint, HypothesisBound::io_mi);
    const double t2 = exact_hypothesis_bounds(joint, HypothesisBound::cmi_sum);
    if (t2 > t1 + 1e-12) ++cmi_over_io;
    worst_sigma1 = std::max(worst_sigma1, t2 - exact_hypothesis_bounds(joint, HypothesisBound::io_mi, 1.0));
  }
  out.push_back(at_most("joint mass sums to one", worst_mass, 1e-10));
  out.push_back(at_most("binary-KL bound minus exact gap (>= 0)", worst_kl, 1e-10));
  out.push_back(at_most("fast-rate bound minus exact gap (>= 0)", worst_fast, 1e-10));
  out.push_back(at_most("CMI sum minus input-output bound, sigma 1", worst_sigma1, 1e-12));
  Check info{"CMI sum above input-output bound, sigma 1/2 (count)", static_cast<double>(cmi_over_io), 0.0, true,
             "informational"};
  out.push_back(info);
  return out;
}

Checks estimator_checks() {
  ToySpec toy;
  toy.tasks = 2;
  toy.n = 1;
  toy.alphabet = 2;
  toy.distributions = {{0.5, 0.5}, {0.3, 0.7}};
  toy.loss = {{0.0, 1.0}, {1.0, 0.0}};
  toy.learner = LearnerKind::softmax;
  toy.beta = 3.0;
  auto joint = enumerate_joint(toy, 1, 1);
  double worst = 0.0;
  for (const auto& e : oracle_validate_estimators(joint, 100000, 99)) worst = std::max(worst, std::abs(e.error()));
  return {at_most("plug-in MI error at 1e5 samples", worst, 0.01)};
}

Checks identity_checks() {
  auto runs = memorizer_runs(400, 3, 6, 2, 3, 4242);
  auto cfg = BoundSearchCfg::defaults();
  auto id = check_interpolating_identity(runs, cfg);
  Checks out;
  out.push_back({"memorizer identity applicable", id.applicable ? 1.0 : 0.0, 1.0, id.applicable, ""});
  out.push_back({"delta form within band", std::abs(id.lhs - id.rhs_delta), id.tolerance_delta,
                 std::abs(id.lhs - id.rhs_delta) <= id.tolerance_delta, ""});
  out.push_back({"pair form within band", std::abs(id.lhs - id.rhs_pair), id.tolerance_pair,
                 std::abs(id.lhs - id.rhs_pair) <= id.tolerance_pair, ""});
  return out;
}

}  // namespace

int cmd_validate(const ValidateOptions& opts) {
  KlFn kl = [](double p, double q) { return binary_kl(p, q); };
  if (!opts.inject_fault.empty()) {
    if (opts.inject_fault != "binary_kl_sign") {
      std::cerr << "unknown fault '" << opts.inject_fault << "'\n";
      return kExitConfigError;
    }
    kl = [](double p, double q) { return -binary_kl(p, q); };
  }
  const std::vector<std::pair<std::string, std::function<Checks()>>> sections{
      {"numerics", [&] { return numerics_checks(kl); }},
      {"gradients", gradient_checks},
      {"oracle", oracle_checks},
      {"estimators", estimator_checks},
      {"identity", identity_checks}};
  bool known = opts.section.empty();
  for (const auto& [name, fn] : sections) known = known || name == opts.section;
  if (!known) {
    std::cerr << "unknown section '" << opts.section << "'\n";
    return kExitConfigError;
  }

  nlohmann::ordered_json doc{{"format", "clb.validation_report"}, {"version", 1}};
  auto list = nlohmann::ordered_json::array();
  bool all_pass = true;
  for (const auto& [name, fn] : sections) {
    if (!opts.section.empty() && name != opts.section) continue;
    auto checks = fn();
    bool pass = true;
    auto items = nlohmann::ordered_json::array();
    for (const auto& c : checks) {
      pass = pass && c.pass;
      nlohmann::ordered_json item{{"name", c.name}, {"measured", c.measured}, {"tolerance", c.tolerance}, {"pass", c.pass}};
      if (!c.note.empty()) item["note"] = c.note;
      items.push_back(item);
      std::cout << (c.pass ? "  ok    " : "  FAIL  ") << name << ": " << c.name << "  measured " << c.measured
                << "  tol " << c.tolerance << '\n';
    }
    std::cout << name << ": " << (pass ? "pass" : "fail") << '\n';
    all_pass = all_pass && pass;
    list.push_back({{"section", name}, {"status", pass ? "pass" : "fail"}, {"checks", items}});
  }
  doc["sections"] = list;
  doc["status"] = all_pass ? "pass" : "fail";
  if (!opts.inject_fault.empty()) doc["injected_fault"] = opts.inject_fault;
  std::ofstream(opts.report) << doc.dump(2) << '\n';
  return all_pass ? kExitOk : kExitCheckFailed;
}

}  // namespace clb
