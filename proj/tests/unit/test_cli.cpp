// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cakt/cli/commands.hpp"
#include "cakt/error.hpp"
#include "doctest.h"

using namespace cakt;
using namespace cakt::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cakt_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.set("vocab_size", "5");
  cfg.set("feat_dim", "8");
  cfg.set("d_model", "16");
  cfg.set("encoder.n_heads", "2");
  cfg.set("encoder.n_layers", "1");
  cfg.set("encoder.ffn_dim", "16");
  cfg.set("teacher.n_heads", "2");
  cfg.set("teacher.n_layers", "1");
  cfg.set("kt.n_heads", "2");
  cfg.set("data.n_train", "24");
  cfg.set("data.n_dev", "6");
  cfg.set("data.n_test", "6");
  cfg.set("data.seq_len_max", "5");
  cfg.set("train.max_epochs", "2");
  cfg.set("train.freeze_encoder_until", "2");
  cfg.set("train.warmup_steps", "4");
  return cfg;
}

}  // namespace

TEST_CASE("run config text round trip") {
  RunConfig cfg = tiny_config();
  cfg.set("train.lambda", "0.1");
  cfg.set("kt.shift", "+1");
  const auto text = cfg.canonical_text();
  CHECK(RunConfig::parse(text).canonical_text() == text);
  CHECK(cfg.get("kt.shift") == "right");
  CHECK(cfg.get("train.lambda") == "0.1");
  CHECK(text.find("train.lambda = 0.1\n") != std::string::npos);
  CHECK(RunConfig::keys().size() == std::count(text.begin(), text.end(), '\n'));

  const auto before = cfg.fingerprint();
  cfg.set("train.lambda", "0.2");
  CHECK(cfg.fingerprint() != before);
  CHECK(RunConfig{}.fingerprint() == RunConfig{}.fingerprint());
}

TEST_CASE("shared dimensions propagate") {
  RunConfig cfg;
  cfg.set("vocab_size", "7");
  cfg.set("d_model", "32");
  cfg.set("feat_dim", "12");
  CHECK(cfg.model.encoder.vocab_size == 7);
  CHECK(cfg.model.teacher.vocab_size == 7);
  CHECK(cfg.synth.vocab_size == 7);
  CHECK(cfg.model.teacher.d_teacher == 32);
  CHECK(cfg.model.encoder.feat_dim == 12);
}

TEST_CASE("run config rejects bad input") {
  CHECK_THROWS_AS(RunConfig::parse("nope = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("train.lambda = abc\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("train.max_epochs = -3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("kt.enabled = maybe\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("train.seed = 1\ntrain.seed = 2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("just words\n"), ConfigError);
  try {
    RunConfig::parse("# header\n\nteacher.mode = sometimes\n", "cfg.txt");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cfg.txt:3") != std::string::npos);
  }
  RunConfig cfg = RunConfig::parse("  train.seed = 9   # trailing comment\n");
  CHECK(cfg.train.seed == 9);

  RunConfig small;
  small.set("d_model", "16");
  small.set("encoder.n_heads", "2");
  small.set("teacher.n_heads", "2");
  small.set("kt.n_heads", "2");
  small.set("teacher.mode", "oracle");
  small.set("vocab_size", "14");
  CHECK_THROWS_AS(small.validate(), ConfigError);

  RunConfig odd;
  odd.set("train.lambda", "1.5");
  CHECK_THROWS_AS(odd.validate(), ConfigError);
  CHECK_THROWS_AS(apply_overrides(odd, {"train.seed"}), ConfigError);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(DataError("x")) == 3);
  CHECK(exit_code_for(InfeasibleError("x")) == 3);
  CHECK(exit_code_for(NumericError("x")) == 4);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("run root from the environment") {
  ::setenv("CAKT_RUN_ROOT", "/tmp/root", 1);
  CHECK(resolve_run_dir("exp1") == fs::path("/tmp/root/exp1"));
  CHECK(resolve_run_dir("/abs/exp") == fs::path("/abs/exp"));
  ::unsetenv("CAKT_RUN_ROOT");
  CHECK(resolve_run_dir("exp1") == fs::path("exp1"));
}

TEST_CASE("ablation grid row order") {
  const auto grid = ablation_grid();
  REQUIRE(grid.size() == 6);
  const std::vector<std::pair<std::string, int>> rows = {
      {"pos", 0}, {"pos", -1}, {"pos", 1}, {"token_pos", 0}, {"token_pos", -1}, {"token_pos", 1}};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(kt::to_string(grid[i].first) == rows[i].first);
    CHECK(kt::offset(grid[i].second) == rows[i].second);
  }
}

TEST_CASE("mean, sd and directional verdicts") {
  auto [m, sd] = mean_sd({0.1, 0.2, 0.3});
  CHECK(m == doctest::Approx(0.2));
  CHECK(sd == doctest::Approx(0.1));
  CHECK(mean_sd({0.4}).second == 0.0);
  CHECK(directional_verdict(0.04, 0.05, 0.001) == "holds");
  CHECK(directional_verdict(0.05, 0.05, 0.0) == "holds");
  CHECK(directional_verdict(0.055, 0.05, 0.01) == "tie");
  CHECK(directional_verdict(0.07, 0.05, 0.01) == "reversal");

  AblationReport r;
  r.seeds = {1, 2};
  r.teacher_mode = "oracle";
  for (const auto& [q, s] : ablation_grid()) r.cells.push_back({q, s, {0.1, 0.2}, {0.1, 0.2}});
  const auto md = r.to_markdown();
  CHECK(std::count(md.begin(), md.end(), '\n') >= 8);
  CHECK(md.find("| Token + Positional Embeddings | -1 |") != std::string::npos);
  CHECK(md.find("| Positional Embeddings | 0 |") < md.find("| Positional Embeddings | -1 |"));
}

TEST_CASE("gen-data, train, decode and eval round trip") {
  const auto dir = fresh("pipeline");
  RunConfig cfg = tiny_config();
  std::ostringstream log;
  auto gen = cmd_gen_data(cfg, dir / "data", log);
  CHECK(log.str().find("24/6/6") != std::string::npos);
  CHECK(gen.checksums.size() == 3);
  CHECK(RunConfig::load(dir / "data" / "config.txt").canonical_text() == cfg.canonical_text());

  auto r = cmd_train(cfg, dir / "data", dir / "run", log);
  for (const auto* f : {"config.txt", "metrics.jsonl", "summary.json", "final.ckpt", "inference.ckpt"})
    CHECK(fs::exists(dir / "run" / f));
  std::ifstream metrics(dir / "run" / "metrics.jsonl");
  std::string first;
  std::getline(metrics, first);
  for (const auto* key : {"\"step\"", "\"epoch\"", "\"l_ctc\"", "\"l_kt\"", "\"l_total\"", "\"lr\"", "\"grad_norm\""})
    CHECK(first.find(key) != std::string::npos);

  CHECK(cmd_decode(dir / "run" / "inference.ckpt", dir / "data" / "test.jsonl", dir / "hyp.jsonl", log) == 6);
  const auto report = cmd_eval(dir / "data" / "test.jsonl", dir / "hyp.jsonl", dir / "cer.json", log);
  CHECK(report.cer == doctest::Approx(r.test_cer).epsilon(1e-15));

  // hypotheses in a different order still match by id
  std::vector<std::string> lines;
  {
    std::ifstream is(dir / "hyp.jsonl");
    for (std::string l; std::getline(is, l);) lines.push_back(l);
  }
  std::reverse(lines.begin(), lines.end());
  {
    std::ofstream os(dir / "hyp_shuffled.jsonl");
    for (const auto& l : lines) os << l << "\n";
  }
  CHECK(cmd_eval(dir / "data" / "test.jsonl", dir / "hyp_shuffled.jsonl", "", log).cer == report.cer);

  // a perfect hypothesis file
  {
    std::ofstream os(dir / "perfect.jsonl");
    for (const auto& u : data::read_manifest(dir / "data" / "test.jsonl")) {
      os << "{\"id\":\"" << u.id << "\",\"hyp_tokens\":[";
      for (std::size_t i = 0; i < u.tokens.size(); ++i) os << (i ? "," : "") << u.tokens[i];
      os << "]}\n";
    }
  }
  CHECK(cmd_eval(dir / "data" / "test.jsonl", dir / "perfect.jsonl", "", log).cer == 0.0);

  // empty manifest decodes to an empty file
  { std::ofstream(dir / "empty.jsonl"); }
  CHECK(cmd_decode(dir / "run" / "inference.ckpt", dir / "empty.jsonl", dir / "empty_hyp.jsonl", log) == 0);
  CHECK(fs::exists(dir / "empty_hyp.jsonl"));
  CHECK(fs::file_size(dir / "empty_hyp.jsonl") == 0);

  CHECK_THROWS_AS(cmd_decode(dir / "missing.ckpt", dir / "data" / "test.jsonl", dir / "x.jsonl", log), DataError);
  CHECK_THROWS_AS(cmd_decode(dir / "run" / "final.ckpt", dir / "data" / "test.jsonl", dir / "x.jsonl", log), DataError);
  CHECK_THROWS_AS(cmd_train(cfg, dir / "nowhere", dir / "run2", log), DataError);

  RunConfig wrong = cfg;
  wrong.set("feat_dim", "9");
  CHECK_THROWS_AS(cmd_train(wrong, dir / "data", dir / "run3", log), DataError);
}

TEST_CASE("kt off and lambda one give bit-identical final encoders") {
  const auto dir = fresh("lambda");
  RunConfig cfg = tiny_config();
  std::ostringstream log;
  cmd_gen_data(cfg, dir / "data", log);
  RunConfig off = cfg, one = cfg;
  off.set("kt.enabled", "off");
  one.set("train.lambda", "1");
  auto a = cmd_train(off, dir / "data", dir / "off", log);
  auto b = cmd_train(one, dir / "data", dir / "one", log);
  CHECK(a.fit.final_dev_loss == b.fit.final_dev_loss);
  const auto ea = training::load_checkpoint(dir / "off" / "inference.ckpt");
  const auto eb = training::load_checkpoint(dir / "one" / "inference.ckpt");
  REQUIRE(ea.params.size() == eb.params.size());
  for (const auto& [name, t] : ea.params) CHECK(bit_equal(t, eb.params.at(name)));
}
