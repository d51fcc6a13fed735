#include "clb/cl_train.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "clb/codec.hpp"

namespace clb {

namespace {

// Stream tags under a run's RngStream.
constexpr std::uint64_t kTagInit = 1;
constexpr std::uint64_t kTagBuffer = 2;
constexpr std::uint64_t kTagBatch = 3;
constexpr std::uint64_t kTagNoise = 4;
constexpr std::uint64_t kTagProbe = 5;

}  // namespace

double OptimizerCfg::eta_at(std::size_t r) const {
  if (r == 0) throw std::invalid_argument("eta_at: steps are 1-based");
  return eta_schedule == EtaSchedule::constant ? eta : eta / static_cast<double>(r);
}

void OptimizerCfg::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("optimizer: eta must be >= 0");
  if (kind == OptimizerKind::sgld && !(xi >= 0.0)) throw std::invalid_argument("optimizer: xi must be >= 0");
  if (steps_per_task < 1) throw std::invalid_argument("optimizer: steps_per_task must be >= 1");
  if (batch_current < 1) throw std::invalid_argument("optimizer: batch_current must be >= 1");
  if (probe && m_probes < 2) throw std::invalid_argument("optimizer: m_probes must be >= 2");
  if (kind == OptimizerKind::adam && !(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1))
    throw std::invalid_argument("optimizer: adam betas must lie in [0, 1)");
}

DataView::DataView(const TaskSequence& seq, const MembershipVectors& membership)
    : seq_(&seq), membership_(&membership) {
  if (membership.tasks != seq.tasks() || membership.n != seq.per_task())
    throw std::invalid_argument("DataView: membership shape does not match the sequence");
}

SampleRef DataView::read(std::size_t t, std::size_t j, int col) const {
  if (col == membership_->at(t, j))
    ++train_reads_;
  else
    ++test_reads_;
  return {seq_->features(t, j, col), seq_->label(t, j, col)};
}

std::vector<SampleRef> TrainingView::draw_batch(const OptimizerCfg& opt, RngStream& rng) const {
  std::vector<SampleRef> batch;
  if (!buffer_tasks.empty()) {
    const std::size_t row_len = buffer_rows.front().size();
    auto picked_tasks = rng.sample_without_replacement(buffer_tasks.size(),
                                                       std::min(opt.batch_buffer_tasks, buffer_tasks.size()));
    auto picked_pos = rng.sample_without_replacement(row_len, std::min(opt.batch_buffer_samples, row_len));
    std::sort(picked_tasks.begin(), picked_tasks.end());
    std::sort(picked_pos.begin(), picked_pos.end());
    for (auto u : picked_tasks)
      for (auto p : picked_pos) batch.push_back(data->train(buffer_tasks[u], buffer_rows[u][p]));
  }
  const std::size_t n = data->sequence().per_task();
  auto current = rng.sample_without_replacement(n, std::min(opt.batch_current, n));
  std::sort(current.begin(), current.end());
  for (auto j : current) batch.push_back(data->train(task, j));
  return batch;
}

std::vector<SampleRef> TrainingView::full_batch() const {
  std::vector<SampleRef> batch;
  for (std::size_t u = 0; u < buffer_tasks.size(); ++u)
    for (auto j : buffer_rows[u]) batch.push_back(data->train(buffer_tasks[u], j));
  for (std::size_t j = 0; j < data->sequence().per_task(); ++j) batch.push_back(data->train(task, j));
  return batch;
}

void optimizer_step(Params& params, std::span<const SampleRef> batch, std::size_t step, const OptimizerCfg& opt,
                    RngStream& noise_rng, AdamState& adam) {
  const double eta = opt.eta_at(step);
  auto g = grad_batch(params, batch);
  auto& th = params.theta;
  switch (opt.kind) {
    case OptimizerKind::sgd:
      for (std::size_t i = 0; i < th.size(); ++i) th[i] += eta * g[i];
      break;
    case OptimizerKind::sgld: {
      const double xi = opt.xi_at(step);
      for (std::size_t i = 0; i < th.size(); ++i) {
        double noise = xi * noise_rng.normal();
        th[i] += eta * g[i] + noise;
      }
      break;
    }
    case OptimizerKind::adam: {
      if (adam.m.size() != th.size()) {
        adam.m.assign(th.size(), 0.0);
        adam.v.assign(th.size(), 0.0);
        adam.t = 0;
      }
      ++adam.t;
      const double b1 = opt.adam_beta1, b2 = opt.adam_beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
      for (std::size_t i = 0; i < th.size(); ++i) {
        const double grad = -g[i];
        adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * grad;
        adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * grad * grad;
        th[i] -= eta * (adam.m[i] / c1) / (std::sqrt(adam.v[i] / c2) + opt.adam_eps);
      }
      break;
    }
  }
}

Eigen::MatrixXd probe_grad_covariance(const Params& params, const TrainingView& view, const OptimizerCfg& opt,
                                      std::size_t m_probes, RngStream rng) {
  if (m_probes < 2) throw std::invalid_argument("probe_grad_covariance: m_probes must be >= 2");
  const auto d = static_cast<Eigen::Index>(params.theta.size());
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(m_probes), d);
  for (std::size_t p = 0; p < m_probes; ++p) {
    auto batch = view.draw_batch(opt, rng);
    auto g = grad_batch(params, batch);
    rows.row(static_cast<Eigen::Index>(p)) = Eigen::Map<const Eigen::RowVectorXd>(g.data(), d);
  }
  Eigen::RowVectorXd mean = rows.colwise().mean();
  rows.rowwise() -= mean;
  return rows;
}

std::size_t LossTable::buffer_cells() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.buffer; }));
}

double LossTable::empirical_risk() const {
  if (entries.empty()) throw NoObservations("LossTable: no entries");
  double acc = 0.0;
  for (const auto& e : entries) acc += e.train_loss();
  return acc / static_cast<double>(entries.size());
}

double LossTable::population_risk() const {
  if (entries.empty()) throw NoObservations("LossTable: no entries");
  double acc = 0.0;
  for (const auto& e : entries) acc += e.test_loss();
  return acc / static_cast<double>(entries.size());
}

LossTable evaluate_losses(const Params& params, const TaskSequence& seq, const MembershipVectors& membership,
                          const BufferIndex& buffer, bool all_cells) {
  auto entry = [&](std::size_t t, std::size_t j, bool in_buffer) {
    LossEntry e;
    e.task = t;
    e.sample = j;
    e.l0 = loss_eval(params, {seq.features(t, j, 0), seq.label(t, j, 0)}, LossKind::zero_one);
    e.l1 = loss_eval(params, {seq.features(t, j, 1), seq.label(t, j, 1)}, LossKind::zero_one);
    e.s = membership.at(t, j);
    e.buffer = in_buffer;
    return e;
  };
  LossTable table;
  const std::size_t last = seq.tasks() - 1;
  for (auto [t, j] : buffer.cells()) table.entries.push_back(entry(t, j, true));
  for (std::size_t j = 0; j < seq.per_task(); ++j) table.entries.push_back(entry(last, j, false));
  if (all_cells) {
    std::set<std::pair<std::size_t, std::size_t>> in_buffer;
    for (auto c : buffer.cells()) in_buffer.insert(c);
    for (std::size_t t = 0; t < seq.tasks(); ++t)
      for (std::size_t j = 0; j < seq.per_task(); ++j) table.diagnostic.push_back(entry(t, j, in_buffer.count({t, j}) > 0));
  }
  return table;
}

namespace {

BufferIndex draw_index(std::size_t t, const BufferPlan& plan, std::size_t k, const TaskSequence& seq,
                       const MembershipVectors& membership, RngStream rng) {
  if (plan.sampling == BufferSampling::balanced)
    return draw_buffer_index_balanced(t, k, plan.l, seq, membership, rng);
  return draw_buffer_index(t, k, plan.l, seq.per_task(), rng);
}

// Replay rows visible at task index ti (0-based) under the fixed policy: the
// final index restricted to tasks already seen.
BufferIndex restrict_to_seen(const BufferIndex& final_index, std::size_t ti) {
  BufferIndex b;
  for (std::size_t u = 0; u < final_index.tasks.size(); ++u)
    if (final_index.tasks[u] < ti) {
      b.tasks.push_back(final_index.tasks[u]);
      b.samples.push_back(final_index.samples[u]);
    }
  return b;
}

}  // namespace

RunRecord run_continual(const TaskSequence& seq, const MembershipVectors& membership, const BufferPlan& plan,
                        const ModelSpec& spec, const OptimizerCfg& opt, RngStream rng) {
  opt.validate();
  const std::size_t T = seq.tasks();
  if (T < 2) throw InvalidTaskConfig("run_continual: need T >= 2");
  if (plan.k > T - 1 || plan.l > seq.per_task()) throw InvalidTaskConfig("run_continual: buffer exceeds the data");
  if (spec.input_dim != seq.dim() || spec.classes < seq.classes())
    throw DimensionMismatch("run_continual: model spec does not fit the sequence");

  RunRecord rec;
  rec.seed = rng.master_seed();
  rec.membership = membership;
  rec.buffers.resize(T);
  rec.config = {{"optimizer", optimizer_to_json(opt)},
                {"buffer",
                 {{"k", plan.k},
                  {"l", plan.l},
                  {"sampling", plan.sampling == BufferSampling::uniform ? "uniform" : "balanced"},
                  {"policy", plan.policy == BufferPolicy::fixed ? "fixed" : "redraw"}}},
                {"model", spec_to_json(spec)}};

  const RngStream buffer_rng = rng.child(kTagBuffer);
  if (plan.policy == BufferPolicy::fixed) {
    BufferIndex final_index = draw_index(T, plan, plan.k, seq, membership, buffer_rng.child(T));
    for (std::size_t ti = 1; ti < T; ++ti) rec.buffers[ti] = restrict_to_seen(final_index, ti);
  } else {
    for (std::size_t ti = 1; ti < T; ++ti)
      rec.buffers[ti] = draw_index(ti + 1, plan, std::min(plan.k, ti), seq, membership, buffer_rng.child(ti + 1));
  }

  DataView data(seq, membership);
  Params params = init_params(spec, rng.child(kTagInit));
  const bool probing = opt.probe && opt.kind == OptimizerKind::sgld;

  for (std::size_t ti = 0; ti < T; ++ti) {
    rec.task_start.push_back(params.theta);
    TrainingView view{&data, ti, rec.buffers[ti].tasks, rec.buffers[ti].samples};
    RngStream batch_rng = rng.child(kTagBatch).child(ti);
    RngStream noise_rng = rng.child(kTagNoise).child(ti);
    const RngStream probe_rng = rng.child(kTagProbe).child(ti);
    AdamState adam;
    for (std::size_t r = 1; r <= opt.steps_per_task; ++r) {
      if (probing && ti == T - 1) {
        rec.probe_log.push_back(probe_grad_covariance(params, view, opt, opt.m_probes, probe_rng.child(r)));
        rec.probe_eta.push_back(opt.eta_at(r));
        rec.probe_xi.push_back(opt.xi_at(r));
      }
      auto batch = view.draw_batch(opt, batch_rng);
      optimizer_step(params, batch, r, opt, noise_rng, adam);
      if (!params.finite())
        throw NonFiniteParams("non-finite parameters at task " + std::to_string(ti + 1) + ", step " +
                              std::to_string(r));
    }
    rec.task_end.push_back(params.theta);
  }

  rec.test_reads = data.test_reads();
  rec.final_params = params;
  rec.loss_table = evaluate_losses(params, seq, membership, rec.buffers.back());
  return rec;
}

nlohmann::ordered_json optimizer_to_json(const OptimizerCfg& opt) {
  const char* kind = opt.kind == OptimizerKind::sgd ? "sgd" : opt.kind == OptimizerKind::sgld ? "sgld" : "adam";
  return {{"kind", kind},
          {"eta", opt.eta},
          {"eta_schedule", opt.eta_schedule == EtaSchedule::constant ? "constant" : "inverse"},
          {"xi", opt.xi},
          {"steps_per_task", opt.steps_per_task},
          {"batch_buffer_tasks", opt.batch_buffer_tasks},
          {"batch_buffer_samples", opt.batch_buffer_samples},
          {"batch_current", opt.batch_current},
          {"adam_beta1", opt.adam_beta1},
          {"adam_beta2", opt.adam_beta2},
          {"adam_eps", opt.adam_eps},
          {"probe", opt.probe},
          {"m_probes", opt.m_probes}};
}

OptimizerCfg optimizer_from_json(const nlohmann::ordered_json& doc) {
  OptimizerCfg opt;
  for (const auto& [key, value] : doc.items()) {
    if (key == "kind") {
      auto k = value.get<std::string>();
      if (k == "sgd")
        opt.kind = OptimizerKind::sgd;
      else if (k == "sgld")
        opt.kind = OptimizerKind::sgld;
      else if (k == "adam")
        opt.kind = OptimizerKind::adam;
      else
        throw std::invalid_argument("unknown optimizer kind '" + k + "'");
    } else if (key == "eta") {
      opt.eta = value.get<double>();
    } else if (key == "eta_schedule") {
      auto s = value.get<std::string>();
      if (s != "constant" && s != "inverse") throw std::invalid_argument("unknown eta_schedule '" + s + "'");
      opt.eta_schedule = s == "constant" ? EtaSchedule::constant : EtaSchedule::inverse;
    } else if (key == "xi") {
      opt.xi = value.get<double>();
    } else if (key == "steps_per_task") {
      opt.steps_per_task = value.get<std::size_t>();
    } else if (key == "batch_buffer_tasks") {
      opt.batch_buffer_tasks = value.get<std::size_t>();
    } else if (key == "batch_buffer_samples") {
      opt.batch_buffer_samples = value.get<std::size_t>();
    } else if (key == "batch_current") {
      opt.batch_current = value.get<std::size_t>();
    } else if (key == "adam_beta1") {
      opt.adam_beta1 = value.get<double>();
    } else if (key == "adam_beta2") {
      opt.adam_beta2 = value.get<double>();
    } else if (key == "adam_eps") {
      opt.adam_eps = value.get<double>();
    } else if (key == "probe") {
      opt.probe = value.get<bool>();
    } else if (key == "m_probes") {
      opt.m_probes = value.get<std::size_t>();
    } else {
      throw std::invalid_argument("unknown optimizer key '" + key + "'");
    }
  }
  opt.validate();
  return opt;
}

nlohmann::ordered_json run_to_json(const RunRecord& run) {
  nlohmann::ordered_json doc;
  doc["format"] = "clb.run_record";
  doc["version"] = 1;
  doc["seed"] = run.seed;
  doc["run_index"] = run.run_index;
  doc["block"] = run.block;
  doc["config"] = run.config;

  std::vector<bool> sbits(run.membership.bits.begin(), run.membership.bits.end());
  doc["membership"] = {{"tasks", run.membership.tasks},
                       {"n", run.membership.n},
                       {"bits", codec::base64_encode(codec::pack_bits(sbits))}};
  const auto& buf = run.final_buffer();
  doc["buffer"] = {{"tasks", buf.tasks}, {"samples", buf.samples}};
  doc["params"] = {{"spec", spec_to_json(run.final_params.spec)},
                   {"theta", codec::f64_to_base64(run.final_params.theta)}};

  // Loss table: per entry the bits (l0, l1, s); cells listed separately.
  std::vector<bool> lbits;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  bool binary = true;
  for (const auto& e : run.loss_table.entries) {
    binary = binary && (e.l0 == 0.0 || e.l0 == 1.0) && (e.l1 == 0.0 || e.l1 == 1.0);
    lbits.push_back(e.l0 != 0.0);
    lbits.push_back(e.l1 != 0.0);
    lbits.push_back(e.s != 0);
    cells.push_back({e.task, e.sample});
  }
  if (!binary) throw std::logic_error("run_to_json: loss table is not 0-1 valued");
  doc["loss_table"] = {{"entries", run.loss_table.entries.size()},
                       {"buffer_cells", run.loss_table.buffer_cells()},
                       {"cells", cells},
                       {"bits", codec::base64_encode(codec::pack_bits(lbits))}};

  nlohmann::ordered_json probes = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < run.probe_log.size(); ++r) {
    const auto& m = run.probe_log[r];
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(i, c);
      rows.push_back(row);
    }
    probes.push_back({{"step", r + 1}, {"eta", run.probe_eta[r]}, {"xi", run.probe_xi[r]}, {"rows", rows}});
  }
  doc["probe_log"] = probes;
  doc["audit"] = {{"test_reads", run.test_reads}};
  return doc;
}

}  // namespace clb
