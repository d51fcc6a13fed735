#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <doctest.h>

#include "clb/experiment.hpp"

using namespace clb;

namespace {

const char* kSmall = R"({
  "seed": 3,
  "data": {"T": 3, "n": 12},
  "buffer": {"m": 4},
  "optimizer": {"kind": "sgd", "eta": 0.5, "steps_per_task": 20, "batch_current": 6},
  "estimation": {"runs": 8, "blocks": 2, "bootstrap": 10},
  "output": {"dir": ""}
})";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("buffer size split") {
  CHECK(split_buffer_size(0, 5) == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(split_buffer_size(4, 5) == std::pair<std::size_t, std::size_t>{4, 1});
  CHECK(split_buffer_size(16, 5) == std::pair<std::size_t, std::size_t>{4, 4});
  CHECK(split_buffer_size(64, 5) == std::pair<std::size_t, std::size_t>{4, 16});
  CHECK(split_buffer_size(9, 5) == std::pair<std::size_t, std::size_t>{3, 3});
  CHECK(split_buffer_size(7, 5) == std::pair<std::size_t, std::size_t>{1, 7});
}

TEST_CASE("config parsing") {
  auto cfg = parse_config(kSmall);
  CHECK(cfg.seed == 3);
  CHECK(cfg.buffer.k == 2);
  CHECK(cfg.buffer.l == 2);
  CHECK(cfg.model.input_dim == 2);
  CHECK(cfg.hash().size() == 16);

  SUBCASE("hash ignores the output section and formatting") {
    std::string moved = kSmall;
    moved.replace(moved.find("\"dir\": \"\""), 9, "\"dir\": \"elsewhere\"");
    CHECK(parse_config(moved).hash() == cfg.hash());
    auto canon = cfg.canonical().dump();
    CHECK(parse_config(canon).hash() == cfg.hash());
  }

  SUBCASE("hash changes with content") {
    std::string other = kSmall;
    other.replace(other.find("\"seed\": 3"), 9, "\"seed\": 4");
    CHECK(parse_config(other).hash() != cfg.hash());
  }
}

TEST_CASE("config errors carry line numbers") {
  CHECK(config_error("{\n\"seed\": 1,\n\"data\": {\"T\": 3, \"nn\": 4}\n}") == "line 3: unknown key 'nn' in section 'data'");
  CHECK(config_error("{\n\"seed\": 1,\n\"bogus\": 2\n}").rfind("line 3:", 0) == 0);
  CHECK(config_error("{\n\"data\": {\"T\": 1}\n}").find("T must be >= 2") != std::string::npos);
  CHECK(config_error("{\"estimation\": {\"runs\": 10, \"blocks\": 3}}").find("divide") != std::string::npos);
  CHECK(config_error("{\"buffer\": {\"k\": 9, \"l\": 1}}").find("buffer") != std::string::npos);
  CHECK(config_error("{\"buffer\": {\"m\": 4, \"k\": 2}}").find("either m") != std::string::npos);
  CHECK(config_error("{\n\"optimizer\": {\n\"kind\": \"sgd\",\n\"momentum\": 1}}").rfind("line 4:", 0) == 0);
  CHECK(config_error("{\"data\": {\"generator\": \"idx\", \"images\": \"/nonexistent\"}}").find("not found") !=
        std::string::npos);
  CHECK(config_error("{ \"seed\": 1,, }").rfind("line 1: malformed", 0) == 0);
  CHECK(config_error(kSmall).empty());
}

TEST_CASE("runs are identical under parallel and serial execution") {
  auto cfg = parse_config(kSmall);
  auto a = execute_runs(cfg, Execution::parallel);
  auto b = execute_runs(cfg, Execution::serial);
  REQUIRE(a.runs.size() == 8);
  REQUIRE(b.runs.size() == 8);
  for (std::size_t r = 0; r < 8; ++r) {
    CHECK(a.runs[r].run_index == r);
    CHECK(a.runs[r].block == r / 4);
    CHECK(run_to_json(a.runs[r]).dump() == run_to_json(b.runs[r]).dump());
  }
  CHECK(a.runs[0].membership != a.runs[1].membership);
}

TEST_CASE("blocks share their task sequence") {
  auto cfg = parse_config(kSmall);
  CHECK(build_sequence(cfg, 0) == build_sequence(cfg, 0));
  CHECK_FALSE(build_sequence(cfg, 0) == build_sequence(cfg, 1));
}

TEST_CASE("run_experiment writes reproducible artifacts") {
  auto dir = std::filesystem::temp_directory_path() / "clb_test_run";
  std::filesystem::remove_all(dir);
  auto cfg = parse_config(kSmall);
  cfg.output_dir = dir / "a";
  auto first = run_experiment(cfg);
  cfg.output_dir = dir / "b";
  run_experiment(cfg);
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
  CHECK(slurp(dir / "a" / "runs" / "run_00003.json") == slurp(dir / "b" / "runs" / "run_00003.json"));
  CHECK(first.document["metadata"]["test_reads_during_training"] == 0);
  CHECK(first.document["config_hash"] == cfg.hash());
  CHECK(first.failed == 0);
}

TEST_CASE("diverging runs are reported, not fatal") {
  std::string text = kSmall;
  text.replace(text.find("\"kind\": \"sgd\""), 13, "\"kind\": \"sgld\", \"xi\": 1e307");
  auto cfg = parse_config(text);
  auto out = execute_runs(cfg, Execution::serial);
  CHECK(out.runs.empty());
  CHECK(out.errors.size() == 8);
  CHECK(out.errors[0].find("non-finite") != std::string::npos);
  CHECK_THROWS(run_experiment(cfg));
}

TEST_CASE("sweep expansion") {
  auto spec = parse_sweep(R"({
    "base": {"data": {"T": 5, "n": 20}, "estimation": {"runs": 4, "blocks": 2}},
    "axes": {"n": [10, 20], "m": [0, 4, 16], "theta": [4.0]},
    "xi_scale": 0.5
  })");
  auto cells = expand_sweep(spec);
  REQUIRE(cells.size() == 6);
  CHECK(cells[0].axes["n"] == 10);
  CHECK(cells[1].axes["m"] == 4);
  CHECK(cells[3].config.data.n == 20);
  CHECK(cells[2].config.buffer.k == 4);
  CHECK(cells[2].config.buffer.l == 4);
  CHECK(cells[0].config.optimizer.xi == doctest::Approx(1.0));
  std::set<std::string> hashes;
  for (const auto& c : cells) hashes.insert(c.config.hash());
  CHECK(hashes.size() == 6);

  CHECK_THROWS_AS(parse_sweep(R"({"axes": {"width": [1]}})"), ConfigError);
  CHECK_THROWS_AS(parse_sweep(R"({"axes": {"n": []}})"), ConfigError);
  CHECK_THROWS_AS(parse_sweep(R"({"base": {"data": {"bad": 1}}, "axes": {"n": [2]}})"), ConfigError);
}

TEST_CASE("csv merge replaces rows of the same config") {
  auto path = std::filesystem::temp_directory_path() / "clb_test_merge.csv";
  std::filesystem::remove(path);
  merge_csv(path, "config_hash,value", {"aaa,1", "bbb,2"});
  merge_csv(path, "config_hash,value", {"aaa,3"});
  CHECK(slurp(path) == "config_hash,value\nbbb,2\naaa,3\n");
  CHECK_THROWS(merge_csv(path, "other,header", {"ccc,1"}));
}

TEST_CASE("validate command") {
  auto report = std::filesystem::temp_directory_path() / "clb_test_validation.json";
  ValidateOptions opts;
  opts.section = "numerics";
  opts.report = report;
  CHECK(cmd_validate(opts) == kExitOk);
  auto doc = nlohmann::json::parse(slurp(report));
  CHECK(doc["sections"][0]["status"] == "pass");

  opts.inject_fault = "binary_kl_sign";
  CHECK(cmd_validate(opts) == kExitCheckFailed);

  opts.inject_fault = "no_such_fault";
  CHECK(cmd_validate(opts) == kExitConfigError);
  opts.inject_fault.clear();
  opts.section = "no_such_section";
  CHECK(cmd_validate(opts) == kExitConfigError);
}

TEST_CASE("memorizer fixture") {
  auto runs = memorizer_runs(50, 3, 6, 2, 3, 1);
  REQUIRE(runs.size() == 50);
  for (const auto& r : runs) {
    CHECK(r.loss_table.empirical_risk() == 0.0);
    CHECK(r.loss_table.entries.size() == 12);
  }
}
