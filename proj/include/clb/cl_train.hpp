#pragma once

// Replay-based continual learning driver: sequential task loop, replay
// mini-batches, SGD / SGLD / Adam steps, gradient-covariance probes and
// loss-table evaluation.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "clb/model.hpp"
#include "clb/numerics.hpp"
#include "clb/tasks.hpp"

namespace clb {

enum class OptimizerKind { sgd, sgld, adam };
enum class EtaSchedule { constant, inverse };  // inverse: eta / r
enum class BufferPolicy { fixed, redraw };

struct OptimizerCfg {
  OptimizerKind kind = OptimizerKind::sgd;
  double eta = 0.1;
  EtaSchedule eta_schedule = EtaSchedule::constant;
  double xi = 0.0;  // sgld noise standard deviation
  std::size_t steps_per_task = 200;
  std::size_t batch_buffer_tasks = 2;    // |B^U|
  std::size_t batch_buffer_samples = 4;  // |B^V|
  std::size_t batch_current = 16;        // |B^T|
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool probe = false;
  std::size_t m_probes = 16;

  /// Step size at step r (1-based within a task).
  double eta_at(std::size_t r) const;
  double xi_at(std::size_t /*r*/) const { return xi; }
  void validate() const;
};

struct BufferPlan {
  std::size_t k = 0;
  std::size_t l = 0;
  BufferSampling sampling = BufferSampling::uniform;
  BufferPolicy policy = BufferPolicy::fixed;
};

struct NonFiniteParams : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Access point for training data. Every read is tallied by whether it hits
/// the training column (S) or the held-out column (1 - S).
class DataView {
 public:
  DataView(const TaskSequence& seq, const MembershipVectors& membership);

  SampleRef train(std::size_t t, std::size_t j) const { return read(t, j, membership_->at(t, j)); }
  SampleRef read(std::size_t t, std::size_t j, int col) const;

  std::uint64_t train_reads() const { return train_reads_; }
  std::uint64_t test_reads() const { return test_reads_; }
  const TaskSequence& sequence() const { return *seq_; }

 private:
  const TaskSequence* seq_;
  const MembershipVectors* membership_;
  mutable std::uint64_t train_reads_ = 0;
  mutable std::uint64_t test_reads_ = 0;
};

/// What the learner may draw from while training on one task: the current
/// task's training halves plus the replay rows visible at that step.
struct TrainingView {
  const DataView* data = nullptr;
  std::size_t task = 0;
  std::vector<std::size_t> buffer_tasks;
  std::vector<std::vector<std::size_t>> buffer_rows;

  /// Independent B^U x B^V and B^T draws, concatenated. Indices are sorted so
  /// that a batch covering the whole view is order-canonical.
  std::vector<SampleRef> draw_batch(const OptimizerCfg& opt, RngStream& rng) const;
  std::vector<SampleRef> full_batch() const;
};

struct AdamState {
  std::vector<double> m, v;
  std::size_t t = 0;
};

/// One update W <- W + eta_r G (+ N for sgld, N ~ Normal(0, xi_r^2 I)).
/// Adam applies the usual moment update to the loss gradient -G.
void optimizer_step(Params& params, std::span<const SampleRef> batch, std::size_t step, const OptimizerCfg& opt,
                    RngStream& noise_rng, AdamState& adam);

/// m_probes x d matrix of batch gradients drawn at the current parameters,
/// with the probe mean subtracted.
Eigen::MatrixXd probe_grad_covariance(const Params& params, const TrainingView& view, const OptimizerCfg& opt,
                                      std::size_t m_probes, RngStream rng);

struct LossEntry {
  std::size_t task = 0;
  std::size_t sample = 0;
  double l0 = 0.0;
  double l1 = 0.0;
  int s = 0;
  bool buffer = false;

  double delta() const { return l1 - l0; }
  double train_loss() const { return s == 0 ? l0 : l1; }
  double test_loss() const { return s == 0 ? l1 : l0; }
  bool operator==(const LossEntry&) const = default;
};

/// Loss pairs over {U,V} u {T,[n]}: buffer cells first, then the final task.
struct LossTable {
  std::vector<LossEntry> entries;
  std::vector<LossEntry> diagnostic;  // every (i, j), filled on request

  std::size_t buffer_cells() const;
  double empirical_risk() const;
  double population_risk() const;
  double gap() const { return population_risk() - empirical_risk(); }
  bool operator==(const LossTable&) const = default;
};

/// 0-1 losses at the final parameters for every indexed cell, both columns.
LossTable evaluate_losses(const Params& params, const TaskSequence& seq, const MembershipVectors& membership,
                          const BufferIndex& buffer, bool all_cells = false);

struct RunRecord {
  std::uint64_t seed = 0;
  std::size_t run_index = 0;
  std::size_t block = 0;  // supersample block for conditional estimates
  MembershipVectors membership;
  std::vector<BufferIndex> buffers;  // buffers[t] is the replay index at task t; buffers[0] is empty
  Params final_params;
  LossTable loss_table;
  std::vector<Eigen::MatrixXd> probe_log;  // one matrix per step of the final task
  std::vector<double> probe_eta;
  std::vector<double> probe_xi;
  std::vector<std::vector<double>> task_start;  // parameters entering each task
  std::vector<std::vector<double>> task_end;    // parameters leaving each task
  std::uint64_t test_reads = 0;
  nlohmann::ordered_json config;

  const BufferIndex& final_buffer() const { return buffers.back(); }
};

RunRecord run_continual(const TaskSequence& seq, const MembershipVectors& membership, const BufferPlan& plan,
                        const ModelSpec& spec, const OptimizerCfg& opt, RngStream rng);

nlohmann::ordered_json run_to_json(const RunRecord& run);

nlohmann::ordered_json optimizer_to_json(const OptimizerCfg& opt);
OptimizerCfg optimizer_from_json(const nlohmann::ordered_json& doc);

}  // namespace clb
