// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cakt/cli/commands.hpp"
#include "cakt/error.hpp"

using namespace cakt;
using namespace cakt::cli;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key = value config file");
    cmd->add_option("--set", overrides, "override a config key (key=value), repeatable");
  }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    apply_overrides(cfg, overrides);
    return cfg;
  }
};

struct KtFlags {
  std::string kt, shift, query;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--kt", kt, "knowledge transfer branch")->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--shift", shift, "KT alignment shift: left|none|right");
    cmd->add_option("--query", query, "KT queries: pos|token_pos");
    cmd->add_option("--seed", seed, "training seed (train.seed)");
  }

  void apply(RunConfig& cfg) const {
    if (!kt.empty()) cfg.set("kt.enabled", kt);
    if (!shift.empty()) cfg.set("kt.shift", shift);
    if (!query.empty()) cfg.set("kt.query", query);
    if (seed) cfg.set("train.seed", std::to_string(*seed));
  }
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--seeds expects comma-separated integers, got '" + text + "'");
    }
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cakt: context-aware knowledge transfer for CTC speech recognition (desk scale)"};
  app.require_subcommand(1);

  ConfigFlags show_flags;
  auto* show = app.add_subcommand("config", "print the effective configuration");
  show_flags.attach(show);

  ConfigFlags gen_flags;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  gen_flags.attach(gen);
  gen->add_option("--out", gen_out, "output directory")->required();

  ConfigFlags train_flags;
  KtFlags train_kt;
  std::string train_data, train_run;
  auto* train = app.add_subcommand("train", "train a model and export the inference model");
  train_flags.attach(train);
  train_kt.attach(train);
  train->add_option("--data", train_data, "directory written by gen-data")->required();
  train->add_option("--run-dir", train_run, "run directory (relative paths go under $CAKT_RUN_ROOT)")
      ->required();

  std::string dec_model, dec_manifest, dec_out;
  auto* decode = app.add_subcommand("decode", "greedy CTC decoding with an exported model");
  decode->add_option("--model", dec_model, "inference.ckpt from a run directory")->required();
  decode->add_option("--manifest", dec_manifest, "utterance manifest (.jsonl)")->required();
  decode->add_option("--out", dec_out, "hypotheses (.jsonl)")->required();

  std::string eval_ref, eval_hyp, eval_out;
  auto* eval = app.add_subcommand("eval", "score hypotheses against a reference manifest");
  eval->add_option("--ref", eval_ref, "reference manifest")->required();
  eval->add_option("--hyp", eval_hyp, "hypotheses from decode")->required();
  eval->add_option("--out", eval_out, "report path (default: stdout)");

  std::string suite;
  auto* verify = app.add_subcommand("verify", "run a verification suite");
  verify->add_option("suite", suite, "ctc-oracle|gradcheck|kt-props|all")
      ->required()
      ->check(CLI::IsMember({"ctc-oracle", "gradcheck", "kt-props", "all"}));

  ConfigFlags abl_flags;
  std::string abl_data, abl_out, abl_seeds = "1,2,3";
  auto* ablate = app.add_subcommand("ablate", "query x shift grid across seeds");
  abl_flags.attach(ablate);
  ablate->add_option("--data", abl_data, "directory written by gen-data")->required();
  ablate->add_option("--out", abl_out, "output directory (relative paths go under $CAKT_RUN_ROOT)")
      ->required();
  ablate->add_option("--seeds", abl_seeds, "comma-separated training seeds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (show->parsed()) {
      auto cfg = show_flags.resolve();
      cfg.validate();
      std::cout << cfg.canonical_text();
    } else if (gen->parsed()) {
      cmd_gen_data(gen_flags.resolve(), gen_out, std::cout);
    } else if (train->parsed()) {
      auto cfg = train_flags.resolve();
      train_kt.apply(cfg);
      cmd_train(cfg, train_data, resolve_run_dir(train_run), std::cout);
    } else if (decode->parsed()) {
      cmd_decode(dec_model, dec_manifest, dec_out, std::cout);
    } else if (eval->parsed()) {
      cmd_eval(eval_ref, eval_hyp, eval_out, std::cout);
    } else if (verify->parsed()) {
      if (!cmd_verify(suite, std::cout)) return kExitVerification;
    } else if (ablate->parsed()) {
      const auto report = cmd_ablate(abl_flags.resolve(), abl_data, resolve_run_dir(abl_out),
                                     parse_seeds(abl_seeds), std::cout);
      if (!report.passed) return kExitVerification;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
