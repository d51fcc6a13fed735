#include "clb/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "clb/codec.hpp"

namespace clb {

std::size_t ModelSpec::param_count() const {
  if (kind == ModelKind::linear) return classes * input_dim + classes;
  return hidden_dim * input_dim + hidden_dim + classes * hidden_dim + classes;
}

void ModelSpec::validate() const {
  if (input_dim < 1 || classes < 1) throw std::invalid_argument("ModelSpec: dims must be >= 1");
  if (kind == ModelKind::mlp && hidden_dim < 1) throw std::invalid_argument("ModelSpec: mlp needs hidden_dim >= 1");
  if (!(surrogate_clip > 0.0)) throw std::invalid_argument("ModelSpec: surrogate_clip must be positive");
}

bool Params::finite() const {
  return std::all_of(theta.begin(), theta.end(), [](double v) { return std::isfinite(v); });
}

Params init_params(const ModelSpec& spec, RngStream rng) {
  spec.validate();
  Params p{spec, std::vector<double>(spec.param_count(), 0.0)};
  auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) p.theta[offset + i] = (2.0 * rng.uniform() - 1.0) * bound;
  };
  if (spec.kind == ModelKind::linear) {
    fill(0, spec.classes * spec.input_dim, spec.input_dim);
  } else {
    const std::size_t w1 = spec.hidden_dim * spec.input_dim;
    fill(0, w1, spec.input_dim);
    fill(w1 + spec.hidden_dim, spec.classes * spec.hidden_dim, spec.hidden_dim);
  }
  return p;
}

namespace {

double activate(Activation a, double z) { return a == Activation::relu ? std::max(z, 0.0) : std::tanh(z); }

double activate_grad(Activation a, double z, double h) {
  if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  return 1.0 - h * h;
}

// logits = W x + b for a row-major W starting at `w`.
void affine(const double* w, const double* b, std::span<const double> x, std::size_t out_dim, double* out) {
  for (std::size_t c = 0; c < out_dim; ++c) {
    const double* row = w + c * x.size();
    double acc = b[c];
    for (std::size_t i = 0; i < x.size(); ++i) acc += row[i] * x[i];
    out[c] = acc;
  }
}

struct Pass {
  std::vector<double> pre;     // hidden pre-activations (mlp)
  std::vector<double> hidden;  // hidden activations (mlp)
  std::vector<double> logits;
};

void run_forward(const Params& params, std::span<const double> x, Pass& pass) {
  const auto& s = params.spec;
  if (x.size() != s.input_dim)
    throw DimensionMismatch("forward: feature dimension " + std::to_string(x.size()) + " != " +
                            std::to_string(s.input_dim));
  const double* th = params.theta.data();
  pass.logits.resize(s.classes);
  if (s.kind == ModelKind::linear) {
    affine(th, th + s.classes * s.input_dim, x, s.classes, pass.logits.data());
    return;
  }
  const std::size_t w1 = s.hidden_dim * s.input_dim;
  pass.pre.resize(s.hidden_dim);
  pass.hidden.resize(s.hidden_dim);
  affine(th, th + w1, x, s.hidden_dim, pass.pre.data());
  for (std::size_t h = 0; h < s.hidden_dim; ++h) pass.hidden[h] = activate(s.activation, pass.pre[h]);
  const double* w2 = th + w1 + s.hidden_dim;
  affine(w2, w2 + s.classes * s.hidden_dim, pass.hidden, s.classes, pass.logits.data());
}

// Softmax probabilities in place, returns -log p[label].
double softmax_xent(std::vector<double>& logits, int label) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  double log_z = mx + std::log(z);
  double xent = log_z - logits[static_cast<std::size_t>(label)];
  for (auto& v : logits) v = std::exp(v - log_z);
  return xent;
}

int argmax_high(const std::vector<double>& logits) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c)
    if (logits[c] >= logits[best]) best = c;
  return static_cast<int>(best);
}

void check_label(const ModelSpec& s, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= s.classes)
    throw std::out_of_range("label " + std::to_string(label) + " outside [0, classes)");
}

}  // namespace

std::vector<double> forward(const Params& params, std::span<const double> features) {
  Pass pass;
  run_forward(params, features, pass);
  return pass.logits;
}

int predict(const Params& params, std::span<const double> features) {
  Pass pass;
  run_forward(params, features, pass);
  return argmax_high(pass.logits);
}

double loss_eval(const Params& params, SampleRef sample, LossKind kind) {
  check_label(params.spec, sample.label);
  Pass pass;
  run_forward(params, sample.features, pass);
  if (kind == LossKind::zero_one) return argmax_high(pass.logits) == sample.label ? 0.0 : 1.0;
  double xent = softmax_xent(pass.logits, sample.label);
  return std::min(xent, params.spec.surrogate_clip) / params.spec.surrogate_clip;
}

double mean_surrogate(const Params& params, std::span<const SampleRef> batch) {
  if (batch.empty()) throw std::invalid_argument("mean_surrogate: empty batch");
  double acc = 0.0;
  for (const auto& s : batch) acc += loss_eval(params, s, LossKind::surrogate);
  return acc / static_cast<double>(batch.size());
}

std::vector<double> grad_batch(const Params& params, std::span<const SampleRef> batch) {
  if (batch.empty()) throw std::invalid_argument("grad_batch: empty batch");
  const auto& s = params.spec;
  const double clip = s.surrogate_clip;
  std::vector<double> grad(params.theta.size(), 0.0);
  Pass pass;
  std::vector<double> dlogit(s.classes), dhidden(s.hidden_dim);

  for (const auto& sample : batch) {
    check_label(s, sample.label);
    run_forward(params, sample.features, pass);
    double xent = softmax_xent(pass.logits, sample.label);
    if (xent > clip) continue;  // flat region of the clipped loss
    for (std::size_t c = 0; c < s.classes; ++c)
      dlogit[c] = (pass.logits[c] - (static_cast<int>(c) == sample.label ? 1.0 : 0.0)) / clip;

    const auto x = sample.features;
    if (s.kind == ModelKind::linear) {
      double* gw = grad.data();
      double* gb = gw + s.classes * s.input_dim;
      for (std::size_t c = 0; c < s.classes; ++c) {
        for (std::size_t i = 0; i < s.input_dim; ++i) gw[c * s.input_dim + i] += dlogit[c] * x[i];
        gb[c] += dlogit[c];
      }
      continue;
    }
    const std::size_t w1n = s.hidden_dim * s.input_dim;
    double* gw1 = grad.data();
    double* gb1 = gw1 + w1n;
    double* gw2 = gb1 + s.hidden_dim;
    double* gb2 = gw2 + s.classes * s.hidden_dim;
    const double* w2 = params.theta.data() + w1n + s.hidden_dim;
    std::fill(dhidden.begin(), dhidden.end(), 0.0);
    for (std::size_t c = 0; c < s.classes; ++c) {
      for (std::size_t h = 0; h < s.hidden_dim; ++h) {
        gw2[c * s.hidden_dim + h] += dlogit[c] * pass.hidden[h];
        dhidden[h] += w2[c * s.hidden_dim + h] * dlogit[c];
      }
      gb2[c] += dlogit[c];
    }
    for (std::size_t h = 0; h < s.hidden_dim; ++h) {
      double da = dhidden[h] * activate_grad(s.activation, pass.pre[h], pass.hidden[h]);
      if (da == 0.0) continue;
      for (std::size_t i = 0; i < s.input_dim; ++i) gw1[h * s.input_dim + i] += da * x[i];
      gb1[h] += da;
    }
  }
  const double scale = -1.0 / static_cast<double>(batch.size());
  for (auto& g : grad) g *= scale;
  return grad;
}

double fd_gradient_check(const Params& params, std::span<const SampleRef> batch, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw std::domain_error("fd_gradient_check: eps outside [1e-6, 1e-3]");
  auto g = grad_batch(params, batch);
  Params probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double analytic = -g[i];
    const double saved = probe.theta[i];
    probe.theta[i] = saved + eps;
    double up = mean_surrogate(probe, batch);
    probe.theta[i] = saved - eps;
    double down = mean_surrogate(probe, batch);
    probe.theta[i] = saved;
    double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8));
  }
  return worst;
}

nlohmann::ordered_json spec_to_json(const ModelSpec& spec) {
  return {{"kind", spec.kind == ModelKind::linear ? "linear" : "mlp"},
          {"input_dim", spec.input_dim},
          {"hidden_dim", spec.hidden_dim},
          {"classes", spec.classes},
          {"activation", spec.activation == Activation::relu ? "relu" : "tanh"},
          {"surrogate_clip", spec.surrogate_clip}};
}

ModelSpec spec_from_json(const nlohmann::ordered_json& doc) {
  ModelSpec s;
  auto kind = doc.at("kind").get<std::string>();
  if (kind != "linear" && kind != "mlp") throw std::invalid_argument("unknown model kind '" + kind + "'");
  s.kind = kind == "linear" ? ModelKind::linear : ModelKind::mlp;
  s.input_dim = doc.at("input_dim").get<std::size_t>();
  s.hidden_dim = doc.at("hidden_dim").get<std::size_t>();
  s.classes = doc.at("classes").get<std::size_t>();
  auto act = doc.at("activation").get<std::string>();
  if (act != "relu" && act != "tanh") throw std::invalid_argument("unknown activation '" + act + "'");
  s.activation = act == "relu" ? Activation::relu : Activation::tanh;
  s.surrogate_clip = doc.at("surrogate_clip").get<double>();
  s.validate();
  return s;
}

void save_params(const std::filesystem::path& path, const Params& params) {
  nlohmann::ordered_json header{{"format", "clb.params"}, {"version", 1}, {"spec", spec_to_json(params.spec)},
                                {"d", params.theta.size()}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("CLBP", 4);
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int b = 0; b < 4; ++b) out.put(static_cast<char>(len >> (8 * b)));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto payload = codec::pack_f64_le(params.theta);
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

Params load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  unsigned char len_bytes[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "CLBP") throw std::runtime_error("bad params magic");
  if (!in.read(reinterpret_cast<char*>(len_bytes), 4)) throw std::runtime_error("truncated params header");
  std::uint32_t len = 0;
  for (int b = 0; b < 4; ++b) len |= std::uint32_t{len_bytes[b]} << (8 * b);
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw std::runtime_error("truncated params header");
  auto header = nlohmann::ordered_json::parse(text);
  Params p;
  p.spec = spec_from_json(header.at("spec"));
  const auto d = header.at("d").get<std::size_t>();
  if (d != p.spec.param_count()) throw std::runtime_error("params length does not match spec layout");
  std::vector<std::uint8_t> payload(d * 8);
  if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size())))
    throw std::runtime_error("truncated params payload");
  p.theta = codec::unpack_f64_le(payload);
  return p;
}

}  // namespace clb
