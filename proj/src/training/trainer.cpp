// SPDX-License-Identifier: Apache-2.0
#include "cakt/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "cakt/ctc/ctc.hpp"
#include "cakt/error.hpp"
#include "cakt/numerics/ops.hpp"
#include "json.hpp"

namespace cakt::training {

std::string to_string(SelectMetric m) { return m == SelectMetric::Loss ? "loss" : "cer"; }

SelectMetric parse_select_metric(const std::string& s) {
  if (s == "loss") return SelectMetric::Loss;
  if (s == "cer") return SelectMetric::Cer;
  throw ConfigError("select_metric must be loss or cer, got '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (!(lr_peak > 0.0) || !std::isfinite(lr_peak)) throw ConfigError("lr_peak must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (grad_accum == 0) throw ConfigError("grad_accum must be at least 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
  if (avg_best_k == 0) throw ConfigError("avg_best_k must be at least 1");
}

double total_loss(double l_ctc, double l_kt, double lambda) {
  if (!std::isfinite(l_ctc) || !std::isfinite(l_kt)) {
    throw NumericError("total_loss: non-finite input (l_ctc " + std::to_string(l_ctc) +
                       ", l_kt " + std::to_string(l_kt) + ")");
  }
  return lambda * l_ctc + (1.0 - lambda) * l_kt;
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step == 0) throw ConfigError("lr_at: steps are 1-based");
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return cfg.lr_peak;
  return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

CaktModel::CaktModel(const ModelConfig& cfg, bool kt_enabled, std::uint64_t seed) : cfg_(cfg) {
  cfg_.encoder.validate();
  if (cfg_.teacher.vocab_size != cfg_.encoder.vocab_size) {
    throw ConfigError("teacher vocab_size " + std::to_string(cfg_.teacher.vocab_size) +
                      " differs from encoder vocab_size " + std::to_string(cfg_.encoder.vocab_size));
  }
  encoder_ = std::make_unique<model::Encoder>(cfg_.encoder, seed);
  teacher_ = model::build_teacher(cfg_.teacher, cfg_.encoder.d_model);
  encoder_->init_output_from_embeddings(teacher_->token_embeddings());
  encoder_->set_conv_frozen(true);
  if (kt_enabled) {
    cfg_.kt.validate();
    kt_ = std::make_unique<kt::KtModule>(cfg_.encoder.vocab_size, cfg_.encoder.d_model, cfg_.kt,
                                         teacher_->token_embeddings(), seed);
  }
}

ParameterList CaktModel::trainable_parameters() {
  ParameterList out = encoder_->parameters();
  if (kt_) {
    auto extra = kt_->parameters();
    out.insert(out.end(), extra.begin(), extra.end());
  }
  return out;
}

const Tensor& CaktModel::teacher_average(const ctc::LabelSeq& tokens) {
  auto it = teacher_cache_.find(tokens);
  if (it == teacher_cache_.end()) {
    it = teacher_cache_.emplace(tokens, teacher_->encode(tokens).average).first;
  }
  return it->second;
}

void unfreeze_schedule(std::size_t update, const TrainConfig& cfg, model::Encoder& encoder) {
  encoder.set_conv_frozen(true);
  encoder.set_transformer_frozen(update <= cfg.freeze_encoder_until);
}

UtteranceLoss utterance_objective(Tape& tape, CaktModel& model, const TrainConfig& cfg,
                                  const Tensor& features, const ctc::LabelSeq& tokens,
                                  const std::string& id, Rng* dropout_rng) {
  const double lambda = cfg.effective_lambda();
  Var hx = model.encoder().encode(tape, features, dropout_rng);
  Var l_ctc = ctc::ctc_loss(model.encoder().ctc_head(tape, hx), tokens, id);
  UtteranceLoss out{l_ctc, l_ctc.value().item(), 0.0};
  auto* kt = model.kt();
  if (kt == nullptr) return out;
  const Tensor& target = model.teacher_average(tokens);
  if (lambda == 1.0) {
    // reported only: evaluated off the training tape so no gradient path exists
    Tape side(false);
    out.l_kt = kt->forward(side, tokens, side.constant(hx.value()), target).loss.value().item();
    return out;
  }
  Var h = cfg.kt_stop_gradient ? ops::detach(hx) : hx;
  Var loss = kt->forward(tape, tokens, h, target).loss;
  out.l_kt = loss.value().item();
  out.objective = ops::add(ops::scale(l_ctc, lambda), ops::scale(loss, 1.0 - lambda));
  return out;
}

std::string StepMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["l_ctc"] = l_ctc;
  j["l_kt"] = l_kt;
  j["l_total"] = l_total;
  j["lr"] = lr;
  j["grad_norm"] = grad_norm;
  return j.dump();
}

Trainer::Trainer(CaktModel& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), dropout_rng_(derive_seed(cfg.seed, "dropout")) {
  cfg_.validate();
}

StepMetrics Trainer::train_step(const data::UtteranceBatch& batch) {
  return train_step(std::vector<data::UtteranceBatch>{batch});
}

StepMetrics Trainer::train_step(const std::vector<data::UtteranceBatch>& micro_batches) {
  if (micro_batches.empty()) throw DataError("train_step: no batches");
  const std::size_t update = updates_ + 1;
  unfreeze_schedule(update, cfg_, model_.encoder());
  const ParameterList params = model_.trainable_parameters();
  for (auto* p : params) p->zero_grad();

  const double lambda = cfg_.effective_lambda();
  const bool use_dropout = model_.encoder().config().dropout_rate > 0.0;
  StepMetrics m;
  m.step = update;
  m.lr = lr_at(update, cfg_);

  const double accum = static_cast<double>(micro_batches.size());
  for (const auto& batch : micro_batches) {
    if (batch.size() == 0) throw DataError("train_step: empty batch");
    const double weight = 1.0 / (static_cast<double>(batch.size()) * accum);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& id = batch.ids[i];
      const auto& tokens = batch.tokens[i];
      try {
        Tape tape;
        auto u = utterance_objective(tape, model_, cfg_, batch.valid_features(i), tokens, id,
                                     use_dropout ? &dropout_rng_ : nullptr);
        m.l_ctc += weight * u.l_ctc;
        m.l_kt += weight * u.l_kt;
        m.l_total += weight * total_loss(u.l_ctc, u.l_kt, lambda);
        tape.backward(ops::scale(u.objective, weight));
      } catch (const NumericError& e) {
        throw NumericError("training update " + std::to_string(update) + ", utterance " + id +
                           ": " + e.what());
      }
    }
  }

  double sq = 0.0;
  for (const auto* p : params) {
    if (p->frozen()) continue;
    for (std::size_t k = 0; k < p->size(); ++k) sq += p->grad()[k] * p->grad()[k];
  }
  m.grad_norm = std::sqrt(sq);
  if (!std::isfinite(m.grad_norm)) {
    std::string ids;
    for (const auto& b : micro_batches)
      for (const auto& id : b.ids) ids += (ids.empty() ? "" : ",") + id;
    throw NumericError("training update " + std::to_string(update) +
                       ": non-finite gradient norm over utterances " + ids);
  }
  adam_.step(params, m.lr);
  updates_ = update;
  return m;
}

ctc::LabelSeq decode_features(model::Encoder& encoder, const Tensor& features) {
  Tape tape(false);
  Var hx = encoder.encode(tape, features);
  return ctc::greedy_decode(encoder.ctc_head(tape, hx).value());
}

EvalResult evaluate(model::Encoder& encoder, const std::vector<data::Utterance>& utts) {
  if (utts.empty()) throw DataError("evaluate: empty utterance set");
  EvalResult r;
  std::map<std::string, ctc::LabelSeq> hyps;
  double total = 0.0;
  for (const auto& u : utts) {
    Tape tape(false);
    Var hx = encoder.encode(tape, u.feature_tensor());
    const Tensor& lp = encoder.ctc_head(tape, hx).value();
    total += ctc::ctc_loss_value(lp, u.tokens, u.id);
    hyps[u.id] = ctc::greedy_decode(lp);
  }
  r.ctc_loss = total / static_cast<double>(utts.size());
  r.cer = data::score(utts, hyps);
  return r;
}

Checkpoint make_checkpoint(CaktModel& model, const Trainer* trainer, const std::string& config_text) {
  Checkpoint c;
  c.config_text = config_text;
  c.fingerprint = fingerprint(config_text);
  c.params = snapshot(model.trainable_parameters());
  if (trainer != nullptr) {
    c.updates = trainer->updates();
    c.optimizer = optimizer_state(const_cast<Trainer*>(trainer)->optimizer());
  }
  return c;
}

namespace {

std::string epoch_name(std::size_t epoch) {
  std::ostringstream os;
  os << "epoch-" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
  return os.str();
}

double selection_value(const EpochSummary& e, SelectMetric m) {
  return m == SelectMetric::Loss ? e.dev_loss : e.dev_cer;
}

}  // namespace

FitResult fit(CaktModel& model, const TrainConfig& cfg, const std::vector<data::Utterance>& train,
              const std::vector<data::Utterance>& dev, const FitOptions& options) {
  cfg.validate();
  if (train.empty()) throw DataError("fit: empty training set");
  if (dev.empty()) throw DataError("fit: empty dev set");

  const bool to_disk = !options.run_dir.empty();
  std::ofstream metrics;
  if (to_disk) {
    std::filesystem::create_directories(options.run_dir / "checkpoints");
    metrics.open(options.run_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw DataError("cannot write metrics to " + options.run_dir.string());
  }

  Trainer trainer(model, cfg);
  FitResult result;
  std::vector<Checkpoint> history;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto plan = data::plan_batches(train, cfg.batch_size, cfg.seed, epoch);
    double epoch_total = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t b = 0; b < plan.size(); b += cfg.grad_accum) {
      std::vector<data::UtteranceBatch> group;
      for (std::size_t j = b; j < std::min(plan.size(), b + cfg.grad_accum); ++j) {
        std::vector<const data::Utterance*> ptrs;
        for (auto idx : plan[j]) ptrs.push_back(&train[idx]);
        group.push_back(data::make_batch(ptrs));
      }
      StepMetrics m = trainer.train_step(group);
      m.epoch = epoch;
      epoch_total += m.l_total;
      ++epoch_steps;
      if (to_disk) metrics << m.to_json() << '\n';
      result.steps.push_back(m);
    }
    if (to_disk) metrics.flush();

    const EvalResult ev = evaluate(model.encoder(), dev);
    EpochSummary summary{epoch, trainer.updates(), epoch_total / static_cast<double>(epoch_steps),
                         ev.ctc_loss, ev.cer.cer};
    result.epochs.push_back(summary);

    Checkpoint ckpt = make_checkpoint(model, &trainer, options.config_text);
    ckpt.epoch = epoch;
    ckpt.dev_loss = summary.dev_loss;
    ckpt.dev_cer = summary.dev_cer;
    if (to_disk) save_checkpoint(options.run_dir / "checkpoints" / epoch_name(epoch), ckpt);
    ckpt.optimizer.clear();
    history.push_back(std::move(ckpt));
    if (options.on_epoch) options.on_epoch(summary);

    const double value = selection_value(summary, cfg.select_metric);
    if (value < best) {
      best = value;
      stale = 0;
    } else if (++stale >= cfg.patience && cfg.patience > 0) {
      result.early_stopped = true;
      break;
    }
  }

  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return selection_value(result.epochs[a], cfg.select_metric) <
           selection_value(result.epochs[b], cfg.select_metric);
  });
  order.resize(std::min(order.size(), cfg.avg_best_k));
  std::vector<const Checkpoint*> chosen;
  for (auto i : order) {
    chosen.push_back(&history[i]);
    result.averaged_epochs.push_back(history[i].epoch);
  }
  Checkpoint final_ckpt = average_checkpoints(chosen);
  restore(model.trainable_parameters(), final_ckpt.params);
  const EvalResult ev = evaluate(model.encoder(), dev);
  final_ckpt.updates = trainer.updates();
  final_ckpt.epoch = result.epochs.back().epoch;
  final_ckpt.dev_loss = ev.ctc_loss;
  final_ckpt.dev_cer = ev.cer.cer;
  result.final_dev_loss = ev.ctc_loss;
  result.final_dev_cer = ev.cer.cer;
  if (to_disk) {
    save_checkpoint(options.run_dir / "final.ckpt", final_ckpt);
    save_checkpoint(options.run_dir / "inference.ckpt", export_inference_model(final_ckpt));
  }
  result.final_checkpoint = std::move(final_ckpt);
  return result;
}

InferenceModel::InferenceModel(const model::EncoderConfig& cfg, const Checkpoint& ckpt)
    : encoder_(std::make_unique<model::Encoder>(cfg, 0)) {
  restore(encoder_->parameters(), ckpt.params);
}

}  // namespace cakt::training
