#include "clb/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace clb {

namespace {

constexpr std::uint64_t kTagData = 11;
constexpr std::uint64_t kTagNoise = 12;
constexpr std::uint64_t kTagRun = 13;

std::size_t line_of(const std::string& text, const std::string& key) {
  auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
}

[[noreturn]] void fail(const std::string& text, const std::string& key, const std::string& message) {
  auto line = line_of(text, key);
  throw ConfigError(line ? "line " + std::to_string(line) + ": " + message : message);
}

using Json = nlohmann::ordered_json;

// Key-checked view of one config object.
class Section {
 public:
  Section(const Json& doc, std::string name, const std::string& text) : doc_(doc), name_(std::move(name)), text_(text) {
    if (!doc_.is_object()) fail(text_, name_, "section '" + name_ + "' must be an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [key, value] : doc_.items())
      if (!ok.count(key)) fail(text_, key, "unknown key '" + key + "' in section '" + name_ + "'");
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!doc_.contains(key)) return fallback;
    try {
      return doc_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(text_, key, "key '" + key + "' in section '" + name_ + "' has the wrong type");
    }
  }

  const Json& at(const std::string& key) const { return doc_.at(key); }

 private:
  const Json& doc_;
  std::string name_;
  const std::string& text_;
};

std::string mode_name(EstimationMode m) { return m == EstimationMode::pooled_by_group ? "pooled_by_group" : "per_index"; }

}  // namespace

std::pair<std::size_t, std::size_t> split_buffer_size(std::size_t m, std::size_t tasks) {
  if (m == 0) return {0, 0};
  for (std::size_t k = std::min(tasks - 1, m); k >= 1; --k)
    if (m % k == 0) return {k, m / k};
  return {0, 0};
}

Json ExperimentConfig::canonical() const {
  Json data_j{{"generator", data.generator}, {"T", data.tasks}, {"n", data.n}, {"delta", data.delta}};
  if (data.generator == "synthetic") {
    data_j["dim"] = data.dim;
    data_j["class_sep"] = data.class_sep;
    data_j["rotation_per_task"] = data.rotation_per_task;
  } else {
    data_j["images"] = data.images.string();
    data_j["labels"] = data.labels.string();
    data_j["classes_per_task"] = data.classes_per_task;
  }
  const auto& s = estimation.search;
  return {{"version", version},
          {"seed", seed},
          {"data", data_j},
          {"buffer",
           {{"k", buffer.k},
            {"l", buffer.l},
            {"sampling", buffer.sampling == BufferSampling::uniform ? "uniform" : "balanced"},
            {"policy", buffer.policy == BufferPolicy::fixed ? "fixed" : "redraw"}}},
          {"model", spec_to_json(model)},
          {"optimizer", optimizer_to_json(optimizer)},
          {"estimation",
           {{"runs", estimation.runs},
            {"blocks", estimation.blocks},
            {"mode", mode_name(s.mode)},
            {"miller_madow", s.correction == MiCorrection::miller_madow},
            {"bootstrap", s.bootstrap},
            {"bootstrap_seed", s.bootstrap_seed},
            {"confidence", s.confidence},
            {"identity_z", s.identity_z},
            {"c2_points", s.c2_grid.size()},
            {"gamma_grid", s.gamma_grid}}}};
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(canonical().dump())); }

ExperimentConfig parse_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto byte = std::min<std::size_t>(e.byte, text.size());
    auto line = std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n') + 1;
    throw ConfigError("line " + std::to_string(line) + ": malformed JSON");
  }
  ExperimentConfig cfg;
  Section top(doc, "config", text);
  top.allow({"version", "seed", "data", "buffer", "model", "optimizer", "estimation", "output"});
  cfg.version = top.get<int>("version", 1);
  if (cfg.version != 1) fail(text, "version", "unsupported config version " + std::to_string(cfg.version));
  cfg.seed = top.get<std::uint64_t>("seed", 0);

  if (top.has("data")) {
    Section d(top.at("data"), "data", text);
    d.allow({"generator", "T", "n", "dim", "class_sep", "rotation_per_task", "images", "labels", "classes_per_task",
             "delta"});
    cfg.data.generator = d.get<std::string>("generator", "synthetic");
    if (cfg.data.generator != "synthetic" && cfg.data.generator != "idx")
      fail(text, "generator", "data.generator must be 'synthetic' or 'idx'");
    cfg.data.tasks = d.get<std::size_t>("T", cfg.data.tasks);
    cfg.data.n = d.get<std::size_t>("n", cfg.data.n);
    cfg.data.dim = d.get<std::size_t>("dim", cfg.data.dim);
    cfg.data.class_sep = d.get<double>("class_sep", cfg.data.class_sep);
    cfg.data.rotation_per_task = d.get<double>("rotation_per_task", cfg.data.rotation_per_task);
    cfg.data.images = d.get<std::string>("images", "");
    cfg.data.labels = d.get<std::string>("labels", "");
    cfg.data.classes_per_task = d.get<std::size_t>("classes_per_task", cfg.data.classes_per_task);
    cfg.data.delta = d.get<double>("delta", 0.0);
  }
  if (cfg.data.tasks < 2) fail(text, "T", "data.T must be >= 2");
  if (cfg.data.n < 1) fail(text, "n", "data.n must be >= 1");
  if (!(cfg.data.delta >= 0.0 && cfg.data.delta <= 1.0)) fail(text, "delta", "data.delta must lie in [0, 1]");
  if (cfg.data.generator == "synthetic" && !(cfg.data.class_sep > 0.0))
    fail(text, "class_sep", "data.class_sep must be positive");
  if (cfg.data.generator == "idx") {
    if (!std::filesystem::exists(cfg.data.images)) fail(text, "images", "images file not found: " + cfg.data.images.string());
    if (!std::filesystem::exists(cfg.data.labels)) fail(text, "labels", "labels file not found: " + cfg.data.labels.string());
  }

  if (top.has("buffer")) {
    Section b(top.at("buffer"), "buffer", text);
    b.allow({"k", "l", "m", "sampling", "policy"});
    if (b.has("m")) {
      if (b.has("k") || b.has("l")) fail(text, "m", "buffer: give either m or (k, l)");
      auto m = b.get<std::size_t>("m", 0);
      auto [k, l] = split_buffer_size(m, cfg.data.tasks);
      if (m > 0 && k == 0) fail(text, "m", "buffer.m has no admissible split");
      cfg.buffer.k = k;
      cfg.buffer.l = l;
    } else {
      cfg.buffer.k = b.get<std::size_t>("k", 0);
      cfg.buffer.l = b.get<std::size_t>("l", 0);
    }
    auto sampling = b.get<std::string>("sampling", "uniform");
    if (sampling != "uniform" && sampling != "balanced") fail(text, "sampling", "buffer.sampling must be uniform or balanced");
    cfg.buffer.sampling = sampling == "uniform" ? BufferSampling::uniform : BufferSampling::balanced;
    auto policy = b.get<std::string>("policy", "fixed");
    if (policy != "fixed" && policy != "redraw") fail(text, "policy", "buffer.policy must be fixed or redraw");
    cfg.buffer.policy = policy == "fixed" ? BufferPolicy::fixed : BufferPolicy::redraw;
  }
  if (cfg.buffer.k * cfg.buffer.l > (cfg.data.tasks - 1) * cfg.data.n)
    fail(text, "buffer", "buffer capacity k*l exceeds (T-1)*n");
  if (cfg.buffer.k > cfg.data.tasks - 1) fail(text, "k", "buffer.k exceeds T-1");
  if (cfg.buffer.l > cfg.data.n) fail(text, "l", "buffer.l exceeds n");

  // Model dimensions follow the data.
  std::size_t input_dim = cfg.data.dim, classes = 2;
  if (cfg.data.generator == "idx") {
    input_dim = 0;  // filled from the IDX header below
    std::ifstream img(cfg.data.images, std::ios::binary);
    unsigned char hdr[16];
    if (!img.read(reinterpret_cast<char*>(hdr), 16)) fail(text, "images", "images file too short");
    auto be = [&](int o) {
      return (std::uint32_t{hdr[o]} << 24) | (std::uint32_t{hdr[o + 1]} << 16) | (std::uint32_t{hdr[o + 2]} << 8) |
             std::uint32_t{hdr[o + 3]};
    };
    input_dim = static_cast<std::size_t>(be(8)) * be(12);
    classes = cfg.data.classes_per_task;
  }
  cfg.model.input_dim = input_dim;
  cfg.model.classes = classes;
  if (top.has("model")) {
    Section m(top.at("model"), "model", text);
    m.allow({"kind", "hidden_dim", "activation", "surrogate_clip", "input_dim", "classes"});
    if (m.get<std::size_t>("input_dim", input_dim) != input_dim)
      fail(text, "input_dim", "model.input_dim must match the data dimension " + std::to_string(input_dim));
    if (m.get<std::size_t>("classes", classes) != classes)
      fail(text, "classes", "model.classes must match the data (" + std::to_string(classes) + ")");
    auto kind = m.get<std::string>("kind", "linear");
    if (kind != "linear" && kind != "mlp") fail(text, "kind", "model.kind must be linear or mlp");
    cfg.model.kind = kind == "linear" ? ModelKind::linear : ModelKind::mlp;
    cfg.model.hidden_dim = m.get<std::size_t>("hidden_dim", cfg.model.kind == ModelKind::mlp ? 16 : 0);
    auto act = m.get<std::string>("activation", "relu");
    if (act != "relu" && act != "tanh") fail(text, "activation", "model.activation must be relu or tanh");
    cfg.model.activation = act == "relu" ? Activation::relu : Activation::tanh;
    cfg.model.surrogate_clip = m.get<double>("surrogate_clip", 4.0);
  }
  try {
    cfg.model.validate();
  } catch (const std::exception& e) {
    fail(text, "model", e.what());
  }

  if (top.has("optimizer")) {
    try {
      cfg.optimizer = optimizer_from_json(top.at("optimizer"));
    } catch (const std::exception& e) {
      std::string msg = e.what();
      auto q = msg.find('\'');
      auto key = q == std::string::npos ? std::string("optimizer") : msg.substr(q + 1, msg.find('\'', q + 1) - q - 1);
      fail(text, key, "optimizer: " + msg);
    }
  }

  if (top.has("estimation")) {
    Section e(top.at("estimation"), "estimation", text);
    e.allow({"runs", "blocks", "mode", "miller_madow", "bootstrap", "bootstrap_seed", "confidence", "identity_z",
             "c2_points", "gamma_grid"});
    cfg.estimation.runs = e.get<std::size_t>("runs", 256);
    cfg.estimation.blocks = e.get<std::size_t>("blocks", 16);
    auto mode = e.get<std::string>("mode", "pooled_by_group");
    if (mode != "pooled_by_group" && mode != "per_index") fail(text, "mode", "estimation.mode must be pooled_by_group or per_index");
    auto& s = cfg.estimation.search;
    s.mode = mode == "pooled_by_group" ? EstimationMode::pooled_by_group : EstimationMode::per_index;
    s.correction = e.get<bool>("miller_madow", false) ? MiCorrection::miller_madow : MiCorrection::none;
    s.bootstrap = e.get<std::size_t>("bootstrap", 200);
    s.bootstrap_seed = e.get<std::uint64_t>("bootstrap_seed", s.bootstrap_seed);
    s.confidence = e.get<double>("confidence", 2.0);
    s.identity_z = e.get<double>("identity_z", 3.0);
    auto points = e.get<std::size_t>("c2_points", 64);
    if (points < 2) fail(text, "c2_points", "estimation.c2_points must be >= 2");
    s.c2_grid = default_c2_grid(ConstantVariant::loss, points);
    if (e.has("gamma_grid")) s.gamma_grid = e.get<std::vector<double>>("gamma_grid", {});
    try {
      s.validate();
    } catch (const std::exception& ex) {
      fail(text, "estimation", ex.what());
    }
  }
  if (cfg.estimation.runs < 2) fail(text, "runs", "estimation.runs must be >= 2");
  if (cfg.estimation.blocks < 1 || cfg.estimation.runs % cfg.estimation.blocks != 0)
    fail(text, "blocks", "estimation.blocks must divide estimation.runs");

  if (top.has("output")) {
    Section o(top.at("output"), "output", text);
    o.allow({"dir", "write_runs"});
    cfg.output_dir = o.get<std::string>("dir", cfg.output_dir.string());
    cfg.write_runs = o.get<bool>("write_runs", true);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

TaskSequence build_sequence(const ExperimentConfig& cfg, std::size_t block) {
  RngStream rng(cfg.seed, {kTagData, block});
  TaskSequence seq;
  if (cfg.data.generator == "synthetic") {
    SyntheticConfig sc{cfg.data.tasks, cfg.data.n, cfg.data.dim, cfg.data.class_sep, cfg.data.rotation_per_task};
    seq = gen_synthetic_sequence(sc, rng);
  } else {
    auto data = load_idx(cfg.data.images, cfg.data.labels);
    seq = split_classes(data, cfg.data.classes_per_task, cfg.data.tasks, cfg.data.n, rng);
  }
  if (cfg.data.delta > 0.0) seq = flip_labels(seq, cfg.data.delta, RngStream(cfg.seed, {kTagNoise, block}));
  return seq;
}

void apply_worker_env() {
  if (const char* w = std::getenv("CLB_WORKERS")) {
    int n = std::atoi(w);
    if (n >= 1) omp_set_num_threads(n);
  }
}

RunOutcome execute_runs(const ExperimentConfig& cfg, Execution exec) {
  const std::size_t runs = cfg.estimation.runs, blocks = cfg.estimation.blocks;
  const std::size_t per_block = runs / blocks;
  std::vector<TaskSequence> seqs(blocks);
  for (std::size_t b = 0; b < blocks; ++b) seqs[b] = build_sequence(cfg, b);

  std::vector<std::optional<RunRecord>> slots(runs);
  std::vector<std::string> errors(runs);
  auto one = [&](std::size_t r) {
    const std::size_t b = r / per_block;
    RngStream rng(cfg.seed, {kTagRun, r});
    try {
      auto s = draw_membership(cfg.data.tasks, cfg.data.n, rng.child(1));
      auto rec = run_continual(seqs[b], s, cfg.buffer, cfg.model, cfg.optimizer, rng.child(2));
      rec.run_index = r;
      rec.block = b;
      slots[r] = std::move(rec);
    } catch (const std::exception& e) {
      errors[r] = "run " + std::to_string(r) + ": " + e.what();
    }
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::size_t r = 0; r < runs; ++r) one(r);
  } else {
    for (std::size_t r = 0; r < runs; ++r) one(r);
  }
  RunOutcome out;
  for (std::size_t r = 0; r < runs; ++r) {
    if (slots[r]) out.runs.push_back(std::move(*slots[r]));
    if (!errors[r].empty()) out.errors.push_back(errors[r]);
  }
  return out;
}

RunResult run_experiment(const ExperimentConfig& cfg, Execution exec) {
  auto outcome = execute_runs(cfg, exec);
  RunResult res;
  res.failed = outcome.errors.size();
  if (outcome.runs.size() < 2) throw std::runtime_error("fewer than two runs completed");
  res.report = compute_bounds(outcome.runs, cfg.estimation.search, exec);

  std::uint64_t test_reads = 0;
  for (const auto& r : outcome.runs) test_reads += r.test_reads;

  Json doc;
  doc["format"] = "clb.bound_report";
  doc["version"] = 1;
  doc["config_hash"] = cfg.hash();
  doc["master_seed"] = cfg.seed;
  doc["config"] = cfg.canonical();
  auto body = report_to_json(res.report);
  for (auto& [key, value] : body.items()) doc[key] = value;
  auto& meta = doc["metadata"];
  meta["k"] = cfg.buffer.k;
  meta["l"] = cfg.buffer.l;
  meta["n"] = cfg.data.n;
  meta["T"] = cfg.data.tasks;
  meta["buffer_policy"] = cfg.buffer.policy == BufferPolicy::fixed ? "fixed" : "redraw";
  meta["training_loss"] = "clipped cross-entropy min(CE, clip) / clip, clip " + std::to_string(cfg.model.surrogate_clip);
  meta["run_count_note"] = "runs far exceed the three seeds of the original protocol; plug-in MI needs many draws";
  meta["test_reads_during_training"] = test_reads;
  meta["failed_runs"] = outcome.errors;
  res.document = std::move(doc);

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    if (cfg.write_runs) {
      std::filesystem::create_directories(cfg.output_dir / "runs");
      for (const auto& r : outcome.runs) {
        char name[32];
        std::snprintf(name, sizeof name, "run_%05zu.json", r.run_index);
        auto rec = run_to_json(r);
        rec["config_hash"] = cfg.hash();
        std::ofstream(cfg.output_dir / "runs" / name) << rec.dump(1) << '\n';
      }
    }
    std::ofstream(cfg.output_dir / "report.json") << res.document.dump(2) << '\n';
  }
  return res;
}

int cmd_run(const std::filesystem::path& config_path) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << config_path.string() << ": " << e.what() << '\n';
    return kExitConfigError;
  }
  apply_worker_env();
  auto res = run_experiment(cfg);
  const auto& g = res.report.gap;
  std::cout << "config " << cfg.hash() << "  runs " << g.runs << "  gap " << g.gap << " +- " << g.gap_se << '\n';
  for (const auto& b : res.report.bounds) std::cout << "  " << b.name << " " << b.value << " +- " << b.se << '\n';
  std::cout << "report: " << (cfg.output_dir / "report.json").string() << '\n';
  return res.failed == 0 ? kExitOk : kExitCheckFailed;
}

SweepSpec parse_sweep(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto byte = std::min<std::size_t>(e.byte, text.size());
    auto line = std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n') + 1;
    throw ConfigError("line " + std::to_string(line) + ": malformed JSON");
  }
  Section top(doc, "sweep", text);
  top.allow({"version", "base", "axes", "xi_scale", "output"});
  if (top.get<int>("version", 1) != 1) fail(text, "version", "unsupported sweep version");
  SweepSpec spec;
  spec.base = top.has("base") ? top.at("base") : Json::object();
  spec.xi_scale = top.get<double>("xi_scale", spec.xi_scale);
  if (!top.has("axes")) fail(text, "axes", "sweep needs an 'axes' section");
  static const std::set<std::string> known{"n", "m", "eta", "xi", "theta", "eta_theta", "delta"};
  for (const auto& [name, values] : top.at("axes").items()) {
    if (!known.count(name)) fail(text, name, "unknown sweep axis '" + name + "'");
    if (!values.is_array() || values.empty()) fail(text, name, "axis '" + name + "' must be a nonempty array");
    std::vector<Json> vals(values.begin(), values.end());
    spec.axes.emplace_back(name, std::move(vals));
  }
  if (spec.axes.empty()) fail(text, "axes", "sweep grid is empty");
  if (top.has("output")) {
    Section o(top.at("output"), "output", text);
    o.allow({"csv", "plot_csv", "reports_dir"});
    spec.csv = o.get<std::string>("csv", spec.csv.string());
    spec.plot_csv = o.get<std::string>("plot_csv", spec.plot_csv.string());
    spec.reports_dir = o.get<std::string>("reports_dir", spec.reports_dir.string());
  }
  // Validate the base against an empty cell early.
  parse_config(spec.base.dump(2));
  return spec;
}

std::vector<SweepCell> expand_sweep(const SweepSpec& spec) {
  std::vector<SweepCell> cells;
  std::vector<std::size_t> index(spec.axes.size(), 0);
  for (bool done = false; !done;) {
    Json doc = spec.base;
    for (const char* s : {"data", "buffer", "optimizer"})
      if (!doc.contains(s)) doc[s] = Json::object();
    Json axes = Json::object();
    for (std::size_t a = 0; a < spec.axes.size(); ++a) {
      const auto& [name, values] = spec.axes[a];
      const auto& v = values[index[a]];
      axes[name] = v;
      if (name == "n") {
        doc["data"]["n"] = v;
      } else if (name == "delta") {
        doc["data"]["delta"] = v;
      } else if (name == "m") {
        doc["buffer"].erase("k");
        doc["buffer"].erase("l");
        doc["buffer"]["m"] = v;
      } else if (name == "eta") {
        doc["optimizer"]["eta"] = v;
      } else if (name == "xi") {
        doc["optimizer"]["xi"] = v;
      } else if (name == "theta") {
        doc["optimizer"]["xi"] = std::sqrt(v.get<double>()) * spec.xi_scale;
      } else if (name == "eta_theta") {
        doc["optimizer"]["eta"] = v.at(0);
        doc["optimizer"]["xi"] = std::sqrt(v.at(1).get<double>()) * spec.xi_scale;
      }
    }
    SweepCell cell;
    cell.axes = axes;
    cell.config = parse_config(doc.dump(2));
    cell.config.output_dir = spec.reports_dir / cell.config.hash();
    cells.push_back(std::move(cell));

    // Odometer over the axes, last axis fastest.
    std::size_t a = spec.axes.size();
    while (true) {
      if (a == 0) {
        done = true;
        break;
      }
      --a;
      if (++index[a] < spec.axes[a].second.size()) break;
      index[a] = 0;
    }
  }
  return cells;
}

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

std::vector<std::string> sweep_rows(const ExperimentConfig& cfg, const BoundReport& report) {
  std::vector<std::string> rows;
  const std::string prefix = cfg.hash() + "," + std::to_string(cfg.seed) + "," + std::to_string(cfg.data.tasks) + "," +
                             std::to_string(cfg.data.n) + "," + std::to_string(cfg.buffer.k * cfg.buffer.l) + "," +
                             std::to_string(cfg.buffer.k) + "," + std::to_string(cfg.buffer.l) + "," +
                             num(cfg.optimizer.eta) + "," + num(cfg.optimizer.xi) + "," + num(cfg.data.delta) + ",";
  const std::string tail = "," + num(report.gap.gap) + "," + num(report.gap.gap_se);
  for (const auto& b : report.bounds) rows.push_back(prefix + b.name + "," + num(b.value) + "," + num(b.se) + tail);
  return rows;
}

void merge_csv(const std::filesystem::path& path, const std::string& header, const std::vector<std::string>& rows) {
  std::set<std::string> hashes;
  for (const auto& r : rows) hashes.insert(r.substr(0, r.find(',')));
  std::vector<std::string> kept;
  if (std::ifstream in(path); in) {
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        if (line != header) throw std::runtime_error(path.string() + ": unexpected CSV header");
        continue;
      }
      if (line.empty()) continue;
      if (!hashes.count(line.substr(0, line.find(',')))) kept.push_back(line);
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << header << '\n';
  for (const auto& r : kept) out << r << '\n';
  for (const auto& r : rows) out << r << '\n';
}

int cmd_sweep(const std::filesystem::path& sweep_path) {
  std::vector<SweepCell> cells;
  SweepSpec spec;
  try {
    std::ifstream in(sweep_path);
    if (!in) throw ConfigError("cannot read sweep spec " + sweep_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    spec = parse_sweep(ss.str());
    cells = expand_sweep(spec);
  } catch (const ConfigError& e) {
    std::cerr << sweep_path.string() << ": " << e.what() << '\n';
    return kExitConfigError;
  }
  apply_worker_env();
  std::vector<std::string> rows, plot_rows;
  std::size_t failed = 0;
  for (const auto& cell : cells) {
    auto res = run_experiment(cell.config);
    failed += res.failed;
    auto r = sweep_rows(cell.config, res.report);
    rows.insert(rows.end(), r.begin(), r.end());
    // Plot rows restate report numbers; only the clamp is applied here.
    const auto& c = cell.config;
    for (const auto& b : res.report.bounds)
      plot_rows.push_back(c.hash() + "," + std::to_string(c.data.n) + "," + std::to_string(c.buffer.k * c.buffer.l) + "," +
                          num(c.optimizer.eta) + "," + num(c.optimizer.xi) + "," + num(c.data.delta) + "," + b.name + "," +
                          num(b.value) + "," + num(std::min(b.value, 1.0)) + "," + num(res.report.gap.gap));
    std::cout << "cell " << c.hash() << " " << cell.axes.dump() << " gap " << res.report.gap.gap << '\n';
  }
  merge_csv(spec.csv, kSweepHeader, rows);
  merge_csv(spec.plot_csv, "config_hash,n,m,eta,xi,delta,bound,value,value_clamped,gap", plot_rows);
  std::cout << "wrote " << spec.csv.string() << " and " << spec.plot_csv.string() << '\n';
  return failed == 0 ? kExitOk : kExitCheckFailed;
}

}  // namespace clb
