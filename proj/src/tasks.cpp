#include "clb/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "clb/codec.hpp"

namespace clb {

TaskSequence::TaskSequence(std::size_t tasks, std::size_t n, std::size_t dim, std::size_t classes)
    : tasks_(tasks), n_(n), dim_(dim), classes_(classes), features_(tasks * n * 2 * dim, 0.0),
      labels_(tasks * n * 2, 0) {}

Sample TaskSequence::sample(std::size_t t, std::size_t j, int col) const {
  auto f = features(t, j, col);
  return Sample{std::vector<double>(f.begin(), f.end()), label(t, j, col)};
}

std::vector<std::pair<std::size_t, std::size_t>> BufferIndex::cells() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(capacity());
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (auto j : samples[i]) out.emplace_back(tasks[i], j);
  return out;
}

TaskSequence gen_synthetic_sequence(const SyntheticConfig& cfg, RngStream rng) {
  if (cfg.tasks < 2) throw InvalidTaskConfig("synthetic sequence needs T >= 2");
  if (cfg.n < 1) throw InvalidTaskConfig("synthetic sequence needs n >= 1");
  if (cfg.dim < 2) throw InvalidTaskConfig("synthetic sequence needs dim >= 2");
  if (!(cfg.class_sep > 0.0)) throw InvalidTaskConfig("class_sep must be positive");

  TaskSequence seq(cfg.tasks, cfg.n, cfg.dim, 2);
  for (std::size_t t = 0; t < cfg.tasks; ++t) {
    double angle = static_cast<double>(t) * cfg.rotation_per_task;
    double ux = std::cos(angle), uy = std::sin(angle);
    for (std::size_t j = 0; j < cfg.n; ++j)
      for (int col = 0; col < 2; ++col) {
        int y = rng.bit() ? 1 : 0;
        double sign = y == 1 ? 1.0 : -1.0;
        auto x = seq.features(t, j, col);
        for (auto& v : x) v = rng.normal();
        x[0] += sign * 0.5 * cfg.class_sep * ux;
        x[1] += sign * 0.5 * cfg.class_sep * uy;
        seq.set_label(t, j, col, y);
      }
  }
  seq.meta.generator = "synthetic";
  seq.meta.class_assignment.assign(cfg.tasks, {0, 1});
  seq.meta.descriptor = {{"T", cfg.tasks},
                         {"n", cfg.n},
                         {"dim", cfg.dim},
                         {"class_sep", cfg.class_sep},
                         {"rotation_per_task", cfg.rotation_per_task}};
  return seq;
}

namespace {

std::uint32_t read_be32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IdxTruncated(std::string("IDX header truncated: ") + what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

std::ifstream open_binary(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IdxError("cannot open " + p.string());
  return in;
}

}  // namespace

std::vector<Sample> load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  auto img = open_binary(images);
  auto lab = open_binary(labels);

  if (read_be32(img, "image magic") != kIdxImageMagic) throw IdxMagicError("bad image magic in " + images.string());
  if (read_be32(lab, "label magic") != kIdxLabelMagic) throw IdxMagicError("bad label magic in " + labels.string());
  const std::uint32_t count = read_be32(img, "image count");
  const std::uint32_t rows = read_be32(img, "rows");
  const std::uint32_t cols = read_be32(img, "cols");
  const std::uint32_t label_count = read_be32(lab, "label count");
  if (count != label_count)
    throw IdxCountMismatch("image count " + std::to_string(count) + " != label count " + std::to_string(label_count));

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  std::vector<Sample> out(count);
  std::vector<unsigned char> pixels(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(dim)))
      throw IdxTruncated("image payload truncated at item " + std::to_string(i));
    char y;
    if (!lab.read(&y, 1)) throw IdxTruncated("label payload truncated at item " + std::to_string(i));
    out[i].features.resize(dim);
    std::transform(pixels.begin(), pixels.end(), out[i].features.begin(),
                   [](unsigned char p) { return static_cast<double>(p) / 255.0; });
    out[i].label = static_cast<unsigned char>(y);
  }
  return out;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
               const std::vector<Sample>& samples, std::uint32_t rows, std::uint32_t cols) {
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw IdxError("cannot open IDX output files");
  const auto count = static_cast<std::uint32_t>(samples.size());
  write_be32(img, kIdxImageMagic);
  write_be32(img, count);
  write_be32(img, rows);
  write_be32(img, cols);
  write_be32(lab, kIdxLabelMagic);
  write_be32(lab, count);
  for (const auto& s : samples) {
    if (s.features.size() != static_cast<std::size_t>(rows) * cols)
      throw IdxError("write_idx: feature length does not match rows * cols");
    for (double v : s.features) {
      double c = std::clamp(std::round(v * 255.0), 0.0, 255.0);
      img.put(static_cast<char>(static_cast<unsigned char>(c)));
    }
    lab.put(static_cast<char>(static_cast<unsigned char>(s.label)));
  }
}

TaskSequence split_classes(const std::vector<Sample>& data, std::size_t classes_per_task, std::size_t tasks,
                           std::size_t n, RngStream rng) {
  if (tasks < 2) throw InvalidTaskConfig("split_classes needs T >= 2");
  if (classes_per_task < 1 || n < 1) throw InvalidTaskConfig("split_classes needs classes_per_task, n >= 1");
  if (data.empty()) throw InvalidTaskConfig("split_classes: empty dataset");

  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < data.size(); ++i) by_label[data[i].label].push_back(i);
  if (tasks * classes_per_task > by_label.size())
    throw InvalidTaskConfig("split_classes: not enough distinct labels for T * classes_per_task");

  std::vector<int> labels;
  for (const auto& [y, _] : by_label) labels.push_back(y);

  const std::size_t dim = data.front().features.size();
  TaskSequence seq(tasks, n, dim, classes_per_task);
  seq.meta.generator = "split_classes";
  for (std::size_t t = 0; t < tasks; ++t) {
    std::vector<int> assigned(labels.begin() + static_cast<std::ptrdiff_t>(t * classes_per_task),
                              labels.begin() + static_cast<std::ptrdiff_t>((t + 1) * classes_per_task));
    seq.meta.class_assignment.push_back(assigned);

    std::vector<std::pair<std::size_t, int>> picked;  // (source index, within-task label)
    for (std::size_t c = 0; c < classes_per_task; ++c) {
      std::size_t quota = 2 * n / classes_per_task + (c < (2 * n) % classes_per_task ? 1 : 0);
      const auto& pool = by_label[assigned[c]];
      if (pool.size() < quota)
        throw InvalidTaskConfig("split_classes: class " + std::to_string(assigned[c]) + " has " +
                                std::to_string(pool.size()) + " samples, needs " + std::to_string(quota));
      for (auto idx : rng.sample_without_replacement(pool.size(), quota))
        picked.emplace_back(pool[idx], static_cast<int>(c));
    }
    // Random arrangement into n supersample pairs.
    for (std::size_t i = picked.size(); i > 1; --i) std::swap(picked[i - 1], picked[rng.below(i)]);
    for (std::size_t j = 0; j < n; ++j)
      for (int col = 0; col < 2; ++col) {
        const auto& [src, y] = picked[2 * j + col];
        if (data[src].features.size() != dim) throw InvalidTaskConfig("split_classes: ragged feature dimension");
        std::copy(data[src].features.begin(), data[src].features.end(), seq.features(t, j, col).begin());
        seq.set_label(t, j, col, y);
      }
  }
  seq.meta.descriptor = {{"T", tasks}, {"n", n}, {"classes_per_task", classes_per_task}, {"dim", dim}};
  return seq;
}

TaskSequence flip_labels(const TaskSequence& seq, double delta, RngStream rng) {
  if (!(delta >= 0.0 && delta <= 1.0)) throw InvalidTaskConfig("flip_labels: delta outside [0, 1]");
  TaskSequence out = seq;
  out.meta.noise_delta = delta;
  if (delta == 0.0) return out;
  const auto classes = seq.classes();
  if (classes < 2) throw InvalidTaskConfig("flip_labels needs at least two classes");
  for (std::size_t t = 0; t < seq.tasks(); ++t)
    for (std::size_t j = 0; j < seq.per_task(); ++j)
      for (int col = 0; col < 2; ++col) {
        if (!rng.bernoulli(delta)) continue;
        int y = seq.label(t, j, col);
        int other = static_cast<int>(rng.below(classes - 1));
        out.set_label(t, j, col, other >= y ? other + 1 : other);
      }
  return out;
}

MembershipVectors draw_membership(std::size_t tasks, std::size_t n, RngStream rng) {
  MembershipVectors s{tasks, n, std::vector<std::uint8_t>(tasks * n)};
  for (auto& b : s.bits) b = rng.bit() ? 1 : 0;
  return s;
}

namespace {
void check_buffer_args(std::size_t t, std::size_t k, std::size_t l, std::size_t n) {
  if (t < 1) throw InvalidTaskConfig("buffer index: task number is 1-based");
  if (k > t - 1) throw InvalidTaskConfig("buffer index: k exceeds the number of previous tasks");
  if (l > n) throw InvalidTaskConfig("buffer index: l exceeds n");
}
}  // namespace

BufferIndex draw_buffer_index(std::size_t t, std::size_t k, std::size_t l, std::size_t n, RngStream rng) {
  check_buffer_args(t, k, l, n);
  BufferIndex b;
  if (k == 0 || l == 0) return b;
  b.tasks = rng.sample_without_replacement(t - 1, k);
  std::sort(b.tasks.begin(), b.tasks.end());
  auto v = rng.sample_without_replacement(n, l);
  std::sort(v.begin(), v.end());
  b.samples.assign(k, v);
  return b;
}

BufferIndex draw_buffer_index_balanced(std::size_t t, std::size_t k, std::size_t l, const TaskSequence& seq,
                                       const MembershipVectors& membership, RngStream rng) {
  const std::size_t n = seq.per_task();
  check_buffer_args(t, k, l, n);
  BufferIndex b;
  if (k == 0 || l == 0) return b;
  b.tasks = rng.sample_without_replacement(t - 1, k);
  std::sort(b.tasks.begin(), b.tasks.end());
  for (auto u : b.tasks) {
    std::vector<std::vector<std::size_t>> groups(seq.classes());
    for (auto j : rng.sample_without_replacement(n, n))
      groups[static_cast<std::size_t>(seq.label(u, j, membership.at(u, j)))].push_back(j);
    std::vector<std::size_t> row;
    std::vector<std::size_t> cursor(groups.size(), 0);
    while (row.size() < l) {
      for (std::size_t c = 0; c < groups.size() && row.size() < l; ++c)
        if (cursor[c] < groups[c].size()) row.push_back(groups[c][cursor[c]++]);
    }
    std::sort(row.begin(), row.end());
    b.samples.push_back(std::move(row));
  }
  return b;
}

nlohmann::ordered_json sequence_to_json(const TaskSequence& seq) {
  nlohmann::ordered_json doc;
  doc["format"] = "clb.task_sequence";
  doc["version"] = 1;
  doc["T"] = seq.tasks();
  doc["n"] = seq.per_task();
  doc["dim"] = seq.dim();
  doc["classes"] = seq.classes();
  doc["generator"] = seq.meta.generator;
  doc["descriptor"] = seq.meta.descriptor;
  doc["class_assignment"] = seq.meta.class_assignment;
  doc["noise_delta"] = seq.meta.noise_delta;
  doc["labels"] = seq.raw_labels();
  doc["features_f64le_b64"] = codec::f64_to_base64(seq.raw_features());
  return doc;
}

TaskSequence sequence_from_json(const nlohmann::ordered_json& doc) {
  if (doc.value("format", "") != "clb.task_sequence") throw std::invalid_argument("not a task sequence document");
  if (doc.at("version").get<int>() != 1) throw std::invalid_argument("unsupported task sequence version");
  TaskSequence seq(doc.at("T").get<std::size_t>(), doc.at("n").get<std::size_t>(), doc.at("dim").get<std::size_t>(),
                   doc.at("classes").get<std::size_t>());
  auto features = codec::f64_from_base64(doc.at("features_f64le_b64").get<std::string>());
  auto labels = doc.at("labels").get<std::vector<int>>();
  if (features.size() != seq.raw_features().size() || labels.size() != seq.raw_labels().size())
    throw std::invalid_argument("task sequence payload size mismatch");
  for (std::size_t t = 0; t < seq.tasks(); ++t)
    for (std::size_t j = 0; j < seq.per_task(); ++j)
      for (int col = 0; col < 2; ++col) {
        std::size_t cell = (t * seq.per_task() + j) * 2 + static_cast<std::size_t>(col);
        std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(cell * seq.dim()), seq.dim(),
                    seq.features(t, j, col).begin());
        seq.set_label(t, j, col, labels[cell]);
      }
  seq.meta.generator = doc.at("generator").get<std::string>();
  seq.meta.descriptor = doc.at("descriptor");
  seq.meta.class_assignment = doc.at("class_assignment").get<std::vector<std::vector<int>>>();
  seq.meta.noise_delta = doc.at("noise_delta").get<double>();
  return seq;
}

}  // namespace clb
