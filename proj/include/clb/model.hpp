#pragma once

// Small differentiable classifiers with exact gradients: a linear softmax
// model and a one-hidden-layer MLP.

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "clb/numerics.hpp"
#include "clb/tasks.hpp"

namespace clb {

enum class ModelKind { linear, mlp };
enum class Activation { relu, tanh };
enum class LossKind { zero_one, surrogate };

struct ModelSpec {
  ModelKind kind = ModelKind::linear;
  std::size_t input_dim = 2;
  std::size_t hidden_dim = 0;  // mlp only
  std::size_t classes = 2;
  Activation activation = Activation::relu;
  double surrogate_clip = 4.0;

  std::size_t param_count() const;
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Flat parameter vector. Linear layout: W (classes x input, row-major), b.
/// MLP layout: W1 (hidden x input), b1, W2 (classes x hidden), b2.
struct Params {
  ModelSpec spec;
  std::vector<double> theta;

  bool finite() const;
  bool operator==(const Params&) const = default;
};

/// Non-owning view of one labelled sample.
struct SampleRef {
  std::span<const double> features;
  int label = 0;
};

inline SampleRef ref(const Sample& s) { return {s.features, s.label}; }

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
Params init_params(const ModelSpec& spec, RngStream rng);

std::vector<double> forward(const Params& params, std::span<const double> features);

/// Argmax with ties resolved toward the larger class index.
int predict(const Params& params, std::span<const double> features);

/// zero_one: 1 iff the prediction differs from the label.
/// surrogate: min(cross_entropy, clip) / clip.
double loss_eval(const Params& params, SampleRef sample, LossKind kind);

double mean_surrogate(const Params& params, std::span<const SampleRef> batch);

/// Negative mean surrogate gradient over the batch, so a descent step is
/// theta + eta * G.
std::vector<double> grad_batch(const Params& params, std::span<const SampleRef> batch);

/// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8).
double fd_gradient_check(const Params& params, std::span<const SampleRef> batch, double eps);

nlohmann::ordered_json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::ordered_json& doc);

/// Binary params file: "CLBP", u32 LE header length, JSON header, then the
/// float64 LE payload.
void save_params(const std::filesystem::path& path, const Params& params);
Params load_params(const std::filesystem::path& path);

}  // namespace clb
