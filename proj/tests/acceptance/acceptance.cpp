// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [criterion...]
//
// With no criterion names every criterion runs in order.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cakt/cli/commands.hpp"
#include "cakt/error.hpp"

using namespace cakt;
using namespace cakt::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

fs::path g_work = fs::temp_directory_path() / "cakt_acceptance";

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string secs(double s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << s << " s";
  return os.str();
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome from_check(const CheckResult& r, double limit_s) {
  Outcome o{r.passed, r.detail};
  const auto nl = o.detail.find('\n');
  if (nl != std::string::npos) o.detail.resize(nl);
  o.detail += ", " + secs(r.seconds);
  if (limit_s > 0 && r.seconds >= limit_s) {
    o.passed = false;
    o.detail += " exceeds the " + secs(limit_s) + " budget";
  }
  return o;
}

// Default synthetic corpus (seed 42), generated once per work dir.
fs::path default_data() {
  const fs::path dir = g_work / "data-default";
  if (!fs::exists(dir / "test.jsonl")) {
    std::ostringstream log;
    cmd_gen_data(RunConfig{}, dir, log);
  }
  return dir;
}

Outcome ctc_oracle() { return from_check(verify_ctc_oracle(100, 1), 10.0); }

Outcome ctc_hand_case() { return from_check(verify_ctc_hand_case(), 0.0); }

Outcome gradient_audit() { return from_check(verify_gradcheck(), 60.0); }

Outcome kt_analytics() { return from_check(verify_kt_properties(1000, 3), 0.0); }

Outcome shift_semantics() { return from_check(verify_shift_semantics(), 0.0); }

Outcome inference_parity() {
  RunConfig cfg;
  cfg.set("data.n_train", "64");
  cfg.set("data.n_dev", "20");
  cfg.set("data.n_test", "20");
  cfg.set("train.max_epochs", "2");
  cfg.set("train.freeze_encoder_until", "4");
  cfg.set("kt.shift", "right");
  const fs::path data_dir = g_work / "data-parity";
  std::ostringstream log;
  cmd_gen_data(cfg, data_dir, log);

  RunConfig vanilla = cfg;
  vanilla.set("kt.enabled", "off");
  cmd_train(cfg, data_dir, g_work / "parity-cakt", log);
  cmd_train(vanilla, data_dir, g_work / "parity-vanilla", log);

  const auto cakt_ckpt = training::load_checkpoint(g_work / "parity-cakt" / "inference.ckpt");
  const auto van_ckpt = training::load_checkpoint(g_work / "parity-vanilla" / "inference.ckpt");
  training::InferenceModel cakt_model(cfg.model.encoder, cakt_ckpt);
  training::InferenceModel van_model(vanilla.model.encoder, van_ckpt);
  const std::size_t n_cakt = cakt_model.parameter_count(), n_van = van_model.parameter_count();
  bool ok = n_cakt == n_van;
  for (const auto& [name, t] : cakt_ckpt.params) ok = ok && name.rfind("encoder.", 0) == 0;

  // the full training model decodes through its CTC branch without touching
  // the KT module or the teacher
  training::CaktModel full(cfg.model, true, cfg.train.seed);
  const auto final_ckpt = training::load_checkpoint(g_work / "parity-cakt" / "final.ckpt");
  training::restore(full.trainable_parameters(), final_ckpt.params);
  ParameterList watched = full.kt()->parameters();
  for (auto* p : full.teacher().parameters()) watched.push_back(p);
  for (auto* p : watched) p->reset_access_count();

  const auto test = data::read_manifest(data_dir / "test.jsonl");
  std::size_t mismatches = 0;
  for (const auto& u : test) {
    const auto feats = u.feature_tensor();
    if (cakt_model.decode(feats) != training::decode_features(full.encoder(), feats)) ++mismatches;
  }
  std::size_t touched = 0;
  for (const auto* p : watched) touched += p->access_count();
  ok = ok && mismatches == 0 && touched == 0;
  return {ok, "exported parameters " + std::to_string(n_cakt) + " (CAKT) vs " +
                  std::to_string(n_van) + " (vanilla); KT/teacher parameter reads while decoding " +
                  std::to_string(touched) + "; decode mismatches " + std::to_string(mismatches) +
                  "/" + std::to_string(test.size())};
}

Outcome learnability() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path data_dir = default_data();
  RunConfig cfg;
  cfg.set("kt.enabled", "off");
  std::ostringstream log;
  const auto r = cmd_train(cfg, data_dir, g_work / "learnability", log);
  const double t = elapsed(t0);
  std::size_t best_epoch = 0;
  double best_cer = 1.0;
  for (const auto& e : r.fit.epochs) {
    if (e.dev_cer < best_cer) {
      best_cer = e.dev_cer;
      best_epoch = e.epoch;
    }
  }
  const bool ok = r.fit.final_dev_cer < 0.10 && r.fit.epochs.size() <= 20 && t < 600.0;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << "vanilla CTC final dev CER " << 100 * r.fit.final_dev_cer
     << "% after " << r.fit.epochs.size() << " epochs (best single epoch " << best_epoch << ": "
     << 100 * best_cer << "%), " << secs(t) << " (budget 600 s)";
  return {ok, os.str()};
}

Outcome query_shift_direction() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path data_dir = default_data();
  RunConfig cfg;
  cfg.set("teacher.mode", "oracle");
  std::ostringstream log;
  const auto report = cmd_ablate(cfg, data_dir, g_work / "ablation", {1, 2, 3}, log);
  const double t = elapsed(t0);
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  for (const auto& d : report.checks) {
    os << d.claim << ": " << 100 * d.lhs << " vs " << 100 * d.rhs << " (sd " << 100 * d.sd << ") "
       << d.verdict << "; ";
  }
  os << secs(t) << " (budget 3600 s); table in " << (g_work / "ablation" / "ablation.md").string();
  std::cout << report.to_markdown();
  return {report.passed && t < 3600.0, os.str()};
}

Outcome determinism() {
  RunConfig cfg;
  cfg.set("data.n_train", "48");
  cfg.set("data.n_dev", "12");
  cfg.set("data.n_test", "12");
  cfg.set("train.max_epochs", "3");
  cfg.set("train.freeze_encoder_until", "6");
  cfg.set("kt.shift", "left");
  std::ostringstream log;
  const auto a = cmd_gen_data(cfg, g_work / "det-data-a", log);
  const auto b = cmd_gen_data(cfg, g_work / "det-data-b", log);
  bool ok = a.checksums == b.checksums;
  std::string detail = std::string("gen-data checksums ") + (ok ? "equal" : "differ");

  std::vector<std::string> artifacts = {"metrics.jsonl", "summary.json", "config.txt",
                                        "final.ckpt", "inference.ckpt"};
  for (const auto* run : {"det-run-a", "det-run-b"}) {
    cmd_train(cfg, g_work / "det-data-a", g_work / run, log);
    cmd_decode(g_work / run / "inference.ckpt", g_work / "det-data-a" / "test.jsonl",
               g_work / run / "hyp.jsonl", log);
    cmd_eval(g_work / "det-data-a" / "test.jsonl", g_work / run / "hyp.jsonl",
             g_work / run / "cer.json", log);
  }
  artifacts.push_back("hyp.jsonl");
  artifacts.push_back("cer.json");
  std::size_t differing = 0;
  for (const auto& f : artifacts) {
    if (slurp(g_work / "det-run-a" / f) != slurp(g_work / "det-run-b" / f)) {
      ++differing;
      detail += ", " + f + " differs";
    }
  }
  ok = ok && differing == 0;
  detail += "; train/decode/eval reruns: " + std::to_string(artifacts.size() - differing) + "/" +
            std::to_string(artifacts.size()) + " artifacts byte-identical";
  return {ok, detail};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> list = {
      {"ctc_oracle_equivalence", ctc_oracle},
      {"ctc_hand_case", ctc_hand_case},
      {"gradient_audit", gradient_audit},
      {"kt_loss_analytics", kt_analytics},
      {"shift_semantics", shift_semantics},
      {"inference_parity", inference_parity},
      {"learnability", learnability},
      {"query_shift_direction", query_shift_direction},
      {"determinism", determinism},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else {
      wanted.push_back(arg);
    }
  }
  fs::create_directories(g_work);

  int failures = 0;
  for (const auto& [name, run] : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.passed ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    if (!o.passed) ++failures;
  }
  for (const auto& w : wanted) {
    bool known = false;
    for (const auto& [name, run] : criteria()) known = known || name == w;
    if (!known) {
      std::cout << "FAIL " << w << ": unknown criterion" << std::endl;
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}
