#pragma once

// Sequential task data: synthetic generators, IDX ingestion, split-class
// sequencing, label noise, and the membership / buffer random variables.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clb/numerics.hpp"

namespace clb {

struct Sample {
  std::vector<double> features;
  int label = 0;
};

struct InvalidTaskConfig : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SequenceMeta {
  std::string generator;                         // "synthetic" or "split_classes"
  std::vector<std::vector<int>> class_assignment;  // source labels per task
  double noise_delta = 0.0;
  nlohmann::ordered_json descriptor;               // generator parameters
};

/// T supersample datasets of n pairs each. Cell (t, j, col) is the sample
/// Z~^t_{j,col}; column `col` is selected for training when S^t_j == col.
class TaskSequence {
 public:
  TaskSequence() = default;
  TaskSequence(std::size_t tasks, std::size_t n, std::size_t dim, std::size_t classes);

  std::size_t tasks() const { return tasks_; }
  std::size_t per_task() const { return n_; }
  std::size_t dim() const { return dim_; }
  std::size_t classes() const { return classes_; }

  std::span<const double> features(std::size_t t, std::size_t j, int col) const {
    return {features_.data() + offset(t, j, col) * dim_, dim_};
  }
  std::span<double> features(std::size_t t, std::size_t j, int col) {
    return {features_.data() + offset(t, j, col) * dim_, dim_};
  }
  int label(std::size_t t, std::size_t j, int col) const { return labels_[offset(t, j, col)]; }
  void set_label(std::size_t t, std::size_t j, int col, int y) { labels_[offset(t, j, col)] = y; }

  Sample sample(std::size_t t, std::size_t j, int col) const;

  const std::vector<double>& raw_features() const { return features_; }
  const std::vector<int>& raw_labels() const { return labels_; }

  bool operator==(const TaskSequence& o) const {
    return tasks_ == o.tasks_ && n_ == o.n_ && dim_ == o.dim_ && classes_ == o.classes_ &&
           features_ == o.features_ && labels_ == o.labels_;
  }

  SequenceMeta meta;

 private:
  std::size_t offset(std::size_t t, std::size_t j, int col) const {
    return (t * n_ + j) * 2 + static_cast<std::size_t>(col);
  }
  std::size_t tasks_ = 0, n_ = 0, dim_ = 0, classes_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
};

/// S^{1:T}: one fair bit per supersample pair.
struct MembershipVectors {
  std::size_t tasks = 0, n = 0;
  std::vector<std::uint8_t> bits;  // row-major T x n

  int at(std::size_t t, std::size_t j) const { return bits[t * n + j]; }
  bool operator==(const MembershipVectors&) const = default;
};

enum class BufferSampling { uniform, balanced };

/// Random task subset U and per-task sample subsets. In uniform mode every
/// row of `samples` is the same l-subset V; balanced mode stratifies each
/// selected task's row by class.
struct BufferIndex {
  std::vector<std::size_t> tasks;
  std::vector<std::vector<std::size_t>> samples;

  std::size_t k() const { return tasks.size(); }
  std::size_t l() const { return samples.empty() ? 0 : samples.front().size(); }
  std::size_t capacity() const { return k() * l(); }
  std::vector<std::pair<std::size_t, std::size_t>> cells() const;
  bool operator==(const BufferIndex&) const = default;
};

struct SyntheticConfig {
  std::size_t tasks = 5;
  std::size_t n = 100;
  std::size_t dim = 2;
  double class_sep = 4.0;
  double rotation_per_task = 0.6;
};

/// Two unit-covariance Gaussian classes per task; the class means are
/// +-class_sep/2 on the first axis, rotated by t * rotation_per_task in the
/// plane of the first two axes.
TaskSequence gen_synthetic_sequence(const SyntheticConfig& cfg, RngStream rng);

struct IdxError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IdxMagicError : IdxError {
  using IdxError::IdxError;
};
struct IdxCountMismatch : IdxError {
  using IdxError::IdxError;
};
struct IdxTruncated : IdxError {
  using IdxError::IdxError;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads an IDX image/label pair; pixels are scaled to [0, 1].
std::vector<Sample> load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes an IDX pair. Features are mapped back to bytes by round(255 x).
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
               const std::vector<Sample>& samples, std::uint32_t rows, std::uint32_t cols);

/// Partitions sorted distinct labels into T consecutive groups of
/// classes_per_task and draws 2n samples per task without replacement.
TaskSequence split_classes(const std::vector<Sample>& data, std::size_t classes_per_task, std::size_t tasks,
                           std::size_t n, RngStream rng);

/// Replaces each label by a uniformly drawn different label with
/// probability delta, independently for every stored cell.
TaskSequence flip_labels(const TaskSequence& seq, double delta, RngStream rng);

MembershipVectors draw_membership(std::size_t tasks, std::size_t n, RngStream rng);

/// U uniform over k-subsets of the t-1 tasks before task t (1-based), V
/// uniform over l-subsets of [0, n).
BufferIndex draw_buffer_index(std::size_t t, std::size_t k, std::size_t l, std::size_t n, RngStream rng);

/// Balanced variant: per selected task, the l samples are spread across
/// classes of the training-side labels in round-robin order.
BufferIndex draw_buffer_index_balanced(std::size_t t, std::size_t k, std::size_t l, const TaskSequence& seq,
                                       const MembershipVectors& membership, RngStream rng);

nlohmann::ordered_json sequence_to_json(const TaskSequence& seq);
TaskSequence sequence_from_json(const nlohmann::ordered_json& doc);

}  // namespace clb
