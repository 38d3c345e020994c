// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cakt/cli/run_config.hpp"
#include "cakt/cli/verify.hpp"
#include "cakt/data/scoring.hpp"
#include "cakt/training/trainer.hpp"

namespace cakt::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitVerification = 5,
};

int exit_code_for(const std::exception& e);

/// Relative run directories are placed under $CAKT_RUN_ROOT when it is set.
std::filesystem::path resolve_run_dir(const std::filesystem::path& dir);

struct GenDataResult {
  data::Corpus corpus;
  /// File name -> SHA-256 of its bytes.
  std::map<std::string, std::string> checksums;
};

/// Writes train/dev/test.jsonl, vocab.json and config.txt into out_dir.
GenDataResult cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out_dir,
                           std::ostream& log);

struct TrainResult {
  training::FitResult fit;
  double test_cer = 0.0;
};

/// Trains on data_dir/train.jsonl with dev.jsonl for selection. The run dir
/// receives config.txt, metrics.jsonl, checkpoints/, final.ckpt,
/// inference.ckpt and summary.json.
TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& data_dir,
                      const std::filesystem::path& run_dir, std::ostream& log);

/// One line {id, hyp_tokens, hyp_text} per utterance. Returns the count.
std::size_t cmd_decode(const std::filesystem::path& model, const std::filesystem::path& manifest,
                       const std::filesystem::path& out, std::ostream& log);

/// Scores a hypothesis file against a reference manifest by utterance id.
/// Writes the JSON report to out when given, else to log.
data::CerReport cmd_eval(const std::filesystem::path& refs, const std::filesystem::path& hyps,
                         const std::filesystem::path& out, std::ostream& log);

/// Prints one line per check; true when every check passed.
bool cmd_verify(const std::string& suite, std::ostream& log);

struct AblationCell {
  kt::QueryMode query;
  kt::ShiftMode shift;
  std::vector<double> dev_cer;
  std::vector<double> test_cer;
  double dev_mean = 0.0, dev_sd = 0.0;
  double test_mean = 0.0, test_sd = 0.0;
};

struct DirectionalCheck {
  std::string claim;
  double lhs = 0.0;  // mean test CER expected to be lower or equal
  double rhs = 0.0;
  double sd = 0.0;   // larger of the two cells' sample sd
  /// "holds", "tie" (reversed by at most one sd) or "reversal".
  std::string verdict;
};

struct AblationReport {
  std::vector<std::uint64_t> seeds;
  std::string teacher_mode;
  std::vector<AblationCell> cells;  // ablation_grid() order
  std::vector<DirectionalCheck> checks;
  bool passed = false;

  std::string to_markdown() const;
  std::string to_json() const;
};

/// The six cells in report order: positional-only then token+positional,
/// each with shift 0, -1, +1.
std::vector<std::pair<kt::QueryMode, kt::ShiftMode>> ablation_grid();

/// Sample mean and standard deviation (n - 1 denominator; 0 for n = 1).
std::pair<double, double> mean_sd(const std::vector<double>& xs);

/// "holds" when lhs <= rhs, "tie" when the reversal is within sd, else "reversal".
std::string directional_verdict(double lhs, double rhs, double sd);

/// Trains every grid cell for each seed (train.seed = seed) and reports
/// mean and sd of dev/test CER. Writes ablation.json and ablation.md.
AblationReport cmd_ablate(const RunConfig& cfg, const std::filesystem::path& data_dir,
                          const std::filesystem::path& out_dir,
                          const std::vector<std::uint64_t>& seeds, std::ostream& log);

}  // namespace cakt::cli
