// SPDX-License-Identifier: Apache-2.0
#include "cakt/cli/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <tuple>

#include "cakt/error.hpp"
#include "json.hpp"

namespace cakt::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot read " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + p.string());
  os << text;
}

std::vector<data::Utterance> load_split(const RunConfig& cfg, const fs::path& data_dir,
                                        const std::string& split) {
  const fs::path path = data_dir / (split + ".jsonl");
  if (!fs::exists(path)) throw DataError("missing manifest " + path.string() + " (run gen-data first)");
  auto utts = data::read_manifest(path);
  for (const auto& u : utts) {
    if (u.dim != cfg.synth.f_in) {
      throw DataError(path.string() + ": utterance " + u.id + " has feature dim " +
                      std::to_string(u.dim) + ", config feat_dim is " + std::to_string(cfg.synth.f_in));
    }
    for (int y : u.tokens) {
      if (y < 1 || static_cast<std::size_t>(y) > cfg.synth.vocab_size) {
        throw DataError(path.string() + ": utterance " + u.id + " has token " + std::to_string(y) +
                        " outside 1.." + std::to_string(cfg.synth.vocab_size));
      }
    }
  }
  return utts;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string query_label(kt::QueryMode q) {
  return q == kt::QueryMode::PositionalOnly ? "Positional Embeddings"
                                            : "Token + Positional Embeddings";
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const ShapeError*>(&e)) return kExitData;
  return kExitOther;
}

fs::path resolve_run_dir(const fs::path& dir) {
  if (dir.is_absolute()) return dir;
  if (const char* root = std::getenv("CAKT_RUN_ROOT"); root != nullptr && *root != '\0') {
    return fs::path(root) / dir;
  }
  return dir;
}

GenDataResult cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  GenDataResult r;
  r.corpus = data::generate_corpus(cfg.synth, cfg.geometry());
  fs::create_directories(out_dir);
  data::write_manifest(out_dir / "train.jsonl", r.corpus.train);
  data::write_manifest(out_dir / "dev.jsonl", r.corpus.dev);
  data::write_manifest(out_dir / "test.jsonl", r.corpus.test);
  write_file(out_dir / "vocab.json", r.corpus.vocab.to_json() + "\n");
  cfg.save(out_dir / "config.txt");

  log << "corpus: " << r.corpus.train.size() << "/" << r.corpus.dev.size() << "/"
      << r.corpus.test.size() << " train/dev/test utterances, vocab " << cfg.synth.vocab_size
      << ", feat_dim " << cfg.synth.f_in << "\n";
  for (const auto* name : {"train", "dev", "test"}) {
    const auto& split = std::string(name) == "train" ? r.corpus.train
                        : std::string(name) == "dev" ? r.corpus.dev
                                                     : r.corpus.test;
    std::size_t frames = 0, tokens = 0;
    for (const auto& u : split) {
      frames += u.frames;
      tokens += u.tokens.size();
    }
    const std::string file = std::string(name) + ".jsonl";
    r.checksums[file] = training::fingerprint(read_file(out_dir / file));
    log << "  " << std::left << std::setw(11) << file << " frames " << frames << ", tokens "
        << tokens << ", sha256 " << r.checksums[file] << "\n";
  }
  return r;
}

TrainResult cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& run_dir,
                      std::ostream& log) {
  cfg.validate();
  const auto train = load_split(cfg, data_dir, "train");
  const auto dev = load_split(cfg, data_dir, "dev");
  const bool have_test = fs::exists(data_dir / "test.jsonl");
  const auto test = have_test ? load_split(cfg, data_dir, "test") : std::vector<data::Utterance>{};

  fs::create_directories(run_dir);
  cfg.save(run_dir / "config.txt");
  const std::string text = cfg.canonical_text();
  log << "run " << run_dir.string() << " (config " << cfg.fingerprint().substr(0, 12) << ", kt "
      << (cfg.train.kt_enabled ? "on" : "off");
  if (cfg.train.kt_enabled) {
    log << ", query " << kt::to_string(cfg.model.kt.query_mode) << ", shift "
        << kt::to_string(cfg.model.kt.shift_mode) << ", lambda " << cfg.train.lambda;
  }
  log << ")\n";

  training::CaktModel model(cfg.model, cfg.train.kt_enabled, cfg.train.seed);
  training::FitOptions options;
  options.run_dir = run_dir;
  options.config_text = text;
  options.on_epoch = [&log](const training::EpochSummary& e) {
    log << "  epoch " << std::setw(2) << e.epoch << "  updates " << std::setw(5) << e.updates
        << "  train " << fixed(e.train_l_total, 4) << "  dev loss " << fixed(e.dev_loss, 4)
        << "  dev cer " << fixed(e.dev_cer, 4) << "\n";
  };
  TrainResult r;
  r.fit = training::fit(model, cfg.train, train, dev, options);
  if (have_test && !test.empty()) r.test_cer = training::evaluate(model.encoder(), test).cer.cer;

  ordered_json summary;
  summary["fingerprint"] = cfg.fingerprint();
  summary["updates"] = r.fit.final_checkpoint.updates;
  summary["epochs_run"] = r.fit.epochs.size();
  summary["early_stopped"] = r.fit.early_stopped;
  summary["averaged_epochs"] = r.fit.averaged_epochs;
  summary["final_dev_loss"] = r.fit.final_dev_loss;
  summary["final_dev_cer"] = r.fit.final_dev_cer;
  if (have_test) summary["test_cer"] = r.test_cer;
  summary["inference_parameters"] = parameter_count(model.encoder().parameters());
  ordered_json epochs = ordered_json::array();
  for (const auto& e : r.fit.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"updates", e.updates}, {"train_l_total", e.train_l_total},
                      {"dev_loss", e.dev_loss}, {"dev_cer", e.dev_cer}});
  }
  summary["epochs"] = epochs;
  write_file(run_dir / "summary.json", summary.dump(2) + "\n");

  std::string averaged;
  for (auto e : r.fit.averaged_epochs) averaged += (averaged.empty() ? "" : ",") + std::to_string(e);
  log << "final (mean of epochs " << averaged << "): dev loss " << fixed(r.fit.final_dev_loss, 4)
      << ", dev cer " << fixed(r.fit.final_dev_cer, 4);
  if (have_test) log << ", test cer " << fixed(r.test_cer, 4);
  log << "\n";
  return r;
}

std::size_t cmd_decode(const fs::path& model_path, const fs::path& manifest, const fs::path& out,
                       std::ostream& log) {
  if (!fs::exists(model_path)) throw DataError("model " + model_path.string() + " not found");
  const auto ckpt = training::load_checkpoint(model_path);
  if (ckpt.kind != training::Checkpoint::Kind::Inference) {
    throw DataError(model_path.string() + " is a training checkpoint; decode needs the exported inference.ckpt");
  }
  const RunConfig cfg = RunConfig::parse(ckpt.config_text, model_path.string() + " (embedded config)");
  training::InferenceModel model(cfg.model.encoder, ckpt);
  const auto utts = data::read_manifest(manifest);
  const data::Vocab vocab(cfg.synth.vocab_size);

  std::ostringstream os;
  for (const auto& u : utts) {
    if (u.dim != cfg.synth.f_in) {
      throw DataError("utterance " + u.id + " has feature dim " + std::to_string(u.dim) +
                      ", model expects " + std::to_string(cfg.synth.f_in));
    }
    const auto hyp = model.decode(u.feature_tensor());
    ordered_json j;
    j["id"] = u.id;
    j["hyp_tokens"] = hyp;
    j["hyp_text"] = vocab.render(hyp);
    os << j.dump() << "\n";
  }
  write_file(out, os.str());
  log << "decoded " << utts.size() << " utterances with " << model.parameter_count()
      << " parameters -> " << out.string() << "\n";
  return utts.size();
}

data::CerReport cmd_eval(const fs::path& refs_path, const fs::path& hyps_path, const fs::path& out,
                         std::ostream& log) {
  const auto refs = data::read_manifest(refs_path);
  std::map<std::string, ctc::LabelSeq> hyps;
  std::istringstream is(read_file(hyps_path));
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = hyps_path.string() + ":" + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      const auto id = j.at("id").get<std::string>();
      if (!hyps.emplace(id, j.at("hyp_tokens").get<ctc::LabelSeq>()).second) {
        throw DataError(where + ": duplicate hypothesis for " + id);
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  std::set<std::string> ref_ids;
  for (const auto& u : refs) ref_ids.insert(u.id);
  for (const auto& [id, h] : hyps) {
    if (!ref_ids.count(id)) throw DataError("hypothesis for unknown utterance " + id);
  }
  auto report = data::score(refs, hyps);
  const std::string text = report.to_json(true);
  if (out.empty()) {
    log << text << "\n";
  } else {
    write_file(out, text + "\n");
    log << "CER " << fixed(report.cer, 4) << " (S " << report.subs << ", I " << report.ins
        << ", D " << report.dels << ", N " << report.n_ref_tokens << ") -> " << out.string() << "\n";
  }
  return report;
}

bool cmd_verify(const std::string& suite, std::ostream& log) {
  bool ok = true;
  for (const auto& r : run_verify_suite(suite)) {
    log << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << fixed(r.seconds, 2) << " s): "
        << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok;
}

std::vector<std::pair<kt::QueryMode, kt::ShiftMode>> ablation_grid() {
  std::vector<std::pair<kt::QueryMode, kt::ShiftMode>> grid;
  for (auto q : {kt::QueryMode::PositionalOnly, kt::QueryMode::TokenPlusPositional})
    for (auto s : {kt::ShiftMode::None, kt::ShiftMode::Left, kt::ShiftMode::Right})
      grid.emplace_back(q, s);
  return grid;
}

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::string directional_verdict(double lhs, double rhs, double sd) {
  if (lhs <= rhs) return "holds";
  if (lhs - rhs <= sd) return "tie";
  return "reversal";
}

std::string AblationReport::to_markdown() const {
  std::ostringstream os;
  os << "| Query | Shift |";
  for (auto s : seeds) os << " dev s" << s << " | test s" << s << " |";
  os << " dev mean ± sd | test mean ± sd |\n|---|---|";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << "---|---|";
  os << "---|---|\n";
  for (const auto& c : cells) {
    os << "| " << query_label(c.query) << " | " << kt::offset(c.shift) << " |";
    for (std::size_t i = 0; i < seeds.size(); ++i)
      os << " " << fixed(100 * c.dev_cer[i], 2) << " | " << fixed(100 * c.test_cer[i], 2) << " |";
    os << " " << fixed(100 * c.dev_mean, 2) << " ± " << fixed(100 * c.dev_sd, 2) << " | "
       << fixed(100 * c.test_mean, 2) << " ± " << fixed(100 * c.test_sd, 2) << " |\n";
  }
  os << "\nCER in %, teacher mode " << teacher_mode << ".\n\n";
  for (const auto& d : checks) {
    os << "- " << d.claim << ": " << fixed(100 * d.lhs, 2) << " vs " << fixed(100 * d.rhs, 2)
       << " (1 sd = " << fixed(100 * d.sd, 2) << ") -> " << d.verdict << "\n";
  }
  os << "\nDirectional check " << (passed ? "PASSED" : "FAILED") << "\n";
  return os.str();
}

std::string AblationReport::to_json() const {
  ordered_json j;
  j["seeds"] = seeds;
  j["teacher_mode"] = teacher_mode;
  ordered_json rows = ordered_json::array();
  for (const auto& c : cells) {
    rows.push_back({{"query", kt::to_string(c.query)},
                    {"shift", kt::offset(c.shift)},
                    {"dev_cer", c.dev_cer},
                    {"test_cer", c.test_cer},
                    {"dev_mean", c.dev_mean},
                    {"dev_sd", c.dev_sd},
                    {"test_mean", c.test_mean},
                    {"test_sd", c.test_sd}});
  }
  j["rows"] = rows;
  ordered_json cj = ordered_json::array();
  for (const auto& d : checks) {
    cj.push_back({{"claim", d.claim}, {"lhs", d.lhs}, {"rhs", d.rhs}, {"sd", d.sd}, {"verdict", d.verdict}});
  }
  j["checks"] = cj;
  j["passed"] = passed;
  return j.dump(2);
}

AblationReport cmd_ablate(const RunConfig& base, const fs::path& data_dir, const fs::path& out_dir,
                          const std::vector<std::uint64_t>& seeds, std::ostream& log) {
  if (seeds.empty()) throw ConfigError("ablate needs at least one seed");
  base.validate();
  AblationReport report;
  report.seeds = seeds;
  report.teacher_mode = base.model.teacher.mode == model::TeacherMode::Oracle ? "oracle" : "random";
  fs::create_directories(out_dir);

  for (const auto& [query, shift] : ablation_grid()) {
    AblationCell cell{query, shift, {}, {}};
    for (auto seed : seeds) {
      RunConfig cfg = base;
      cfg.set("kt.enabled", "on");
      cfg.set("kt.query", kt::to_string(query));
      cfg.set("kt.shift", kt::to_string(shift));
      cfg.set("train.seed", std::to_string(seed));
      const fs::path dir =
          out_dir / "cells" / (kt::to_string(query) + "_" + kt::to_string(shift) + "_seed" + std::to_string(seed));
      std::ostringstream cell_log;
      const auto r = cmd_train(cfg, data_dir, dir, cell_log);
      write_file(dir / "train.log", cell_log.str());
      cell.dev_cer.push_back(r.fit.final_dev_cer);
      cell.test_cer.push_back(r.test_cer);
      log << "  " << std::left << std::setw(9) << kt::to_string(query) << " shift " << std::right
          << std::setw(2) << kt::offset(shift) << " seed " << seed << ": dev cer "
          << fixed(r.fit.final_dev_cer, 4) << ", test cer " << fixed(r.test_cer, 4) << "\n";
    }
    std::tie(cell.dev_mean, cell.dev_sd) = mean_sd(cell.dev_cer);
    std::tie(cell.test_mean, cell.test_sd) = mean_sd(cell.test_cer);
    report.cells.push_back(std::move(cell));
  }

  auto find = [&](kt::QueryMode q, kt::ShiftMode s) -> const AblationCell& {
    for (const auto& c : report.cells)
      if (c.query == q && c.shift == s) return c;
    throw Error("ablation cell missing");
  };
  const auto& p0 = find(kt::QueryMode::PositionalOnly, kt::ShiftMode::None);
  const auto& t0 = find(kt::QueryMode::TokenPlusPositional, kt::ShiftMode::None);
  const auto& tl = find(kt::QueryMode::TokenPlusPositional, kt::ShiftMode::Left);
  const auto& tr = find(kt::QueryMode::TokenPlusPositional, kt::ShiftMode::Right);
  auto check = [&](const std::string& claim, const AblationCell& lhs, const AblationCell& rhs) {
    DirectionalCheck d{claim, lhs.test_mean, rhs.test_mean, std::max(lhs.test_sd, rhs.test_sd), ""};
    d.verdict = directional_verdict(d.lhs, d.rhs, d.sd);
    report.checks.push_back(d);
  };
  check("token+pos shift 0 <= pos shift 0", t0, p0);
  check("token+pos shift -1 <= token+pos shift 0", tl, t0);
  check("token+pos shift +1 <= token+pos shift 0", tr, t0);
  report.passed = true;
  for (const auto& d : report.checks) report.passed = report.passed && d.verdict != "reversal";

  write_file(out_dir / "ablation.json", report.to_json() + "\n");
  write_file(out_dir / "ablation.md", report.to_markdown());
  log << "\n" << report.to_markdown();
  return report;
}

}  // namespace cakt::cli
