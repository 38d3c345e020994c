// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "cakt/data/batching.hpp"
#include "cakt/data/scoring.hpp"
#include "cakt/kt/kt.hpp"
#include "cakt/model/encoder.hpp"
#include "cakt/model/teacher.hpp"
#include "cakt/numerics/random.hpp"
#include "cakt/training/checkpoint.hpp"
#include "cakt/training/optimizer.hpp"

namespace cakt::training {

enum class SelectMetric { Loss, Cer };

std::string to_string(SelectMetric m);
SelectMetric parse_select_metric(const std::string& s);

struct TrainConfig {
  double lambda = 0.3;
  double lr_peak = 1e-3;
  std::size_t warmup_steps = 500;
  std::size_t freeze_encoder_until = 100;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  std::size_t avg_best_k = 5;
  std::size_t batch_size = 8;
  std::size_t grad_accum = 1;
  std::uint64_t seed = 42;
  /// Off builds no KT module at all and trains on the CTC loss alone.
  bool kt_enabled = true;
  /// Detach H^X before the KT branch so L_KT cannot reach the encoder.
  bool kt_stop_gradient = false;
  SelectMetric select_metric = SelectMetric::Loss;

  void validate() const;
  double effective_lambda() const { return kt_enabled ? lambda : 1.0; }
};

/// lambda * l_ctc + (1 - lambda) * l_kt. Throws NumericError on non-finite input.
double total_loss(double l_ctc, double l_kt, double lambda);

/// Linear ramp to lr_peak over warmup_steps (1-based), constant afterwards.
double lr_at(std::size_t step, const TrainConfig& cfg);

struct ModelConfig {
  model::EncoderConfig encoder;
  model::TeacherConfig teacher;
  kt::KtConfig kt;
};

/// Student encoder, frozen teacher and (optionally) the KT branch. The
/// output projection is initialised from the teacher token table in every
/// case, so a run without KT starts from the same encoder as one with it.
class CaktModel {
 public:
  CaktModel(const ModelConfig& cfg, bool kt_enabled, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  model::Encoder& encoder() { return *encoder_; }
  model::Teacher& teacher() { return *teacher_; }
  /// Null when KT is disabled.
  kt::KtModule* kt() { return kt_.get(); }

  /// Encoder parameters followed by KT parameters.
  ParameterList trainable_parameters();

  /// Layer-averaged teacher states for a token sequence, memoised.
  const Tensor& teacher_average(const ctc::LabelSeq& tokens);

 private:
  ModelConfig cfg_;
  std::unique_ptr<model::Encoder> encoder_;
  std::unique_ptr<model::Teacher> teacher_;
  std::unique_ptr<kt::KtModule> kt_;
  std::map<ctc::LabelSeq, Tensor> teacher_cache_;
};

/// Conv front-end always frozen; transformer stack frozen while
/// update <= freeze_encoder_until. The teacher is frozen by construction.
void unfreeze_schedule(std::size_t update, const TrainConfig& cfg, model::Encoder& encoder);

struct UtteranceLoss {
  /// What backward() is called on: the mixed loss, or l_ctc alone when
  /// lambda is 1 or KT is disabled.
  Var objective;
  double l_ctc = 0.0;
  double l_kt = 0.0;
};

/// Forward pass of one utterance through encoder, CTC head and (if
/// present) the KT branch.
UtteranceLoss utterance_objective(Tape& tape, CaktModel& model, const TrainConfig& cfg,
                                  const Tensor& features, const ctc::LabelSeq& tokens,
                                  const std::string& id, Rng* dropout_rng = nullptr);

struct StepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double l_ctc = 0.0;
  double l_kt = 0.0;
  double l_total = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;

  std::string to_json() const;
  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

/// Owns the optimizer and update counter for one model.
class Trainer {
 public:
  Trainer(CaktModel& model, const TrainConfig& cfg);

  /// One optimizer update from a single batch.
  StepMetrics train_step(const data::UtteranceBatch& batch);
  /// One optimizer update from gradients accumulated over micro-batches;
  /// each contributes its mean loss with weight 1 / micro_batches.size().
  StepMetrics train_step(const std::vector<data::UtteranceBatch>& micro_batches);

  std::size_t updates() const { return updates_; }
  void set_updates(std::size_t n) { updates_ = n; }
  Adam& optimizer() { return adam_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  CaktModel& model_;
  TrainConfig cfg_;
  Adam adam_;
  Rng dropout_rng_;
  std::size_t updates_ = 0;
};

struct EvalResult {
  double ctc_loss = 0.0;  // mean over utterances
  data::CerReport cer;
};

/// Greedy CTC decode through the encoder alone.
ctc::LabelSeq decode_features(model::Encoder& encoder, const Tensor& features);
EvalResult evaluate(model::Encoder& encoder, const std::vector<data::Utterance>& utts);

struct EpochSummary {
  std::size_t epoch = 0;
  std::size_t updates = 0;
  double train_l_total = 0.0;
  double dev_loss = 0.0;
  double dev_cer = 0.0;
};

struct FitOptions {
  /// When set, receives checkpoints/, metrics.jsonl, final.ckpt and
  /// inference.ckpt.
  std::filesystem::path run_dir;
  /// Canonical configuration text recorded in every checkpoint.
  std::string config_text;
  std::function<void(const EpochSummary&)> on_epoch;
};

struct FitResult {
  std::vector<StepMetrics> steps;
  std::vector<EpochSummary> epochs;
  std::vector<std::size_t> averaged_epochs;
  bool early_stopped = false;
  Checkpoint final_checkpoint;
  double final_dev_loss = 0.0;
  double final_dev_cer = 0.0;
};

/// Epoch loop with dev evaluation, early stopping on the selection metric
/// and averaging of the avg_best_k best epochs. The averaged weights are
/// left loaded in the model.
FitResult fit(CaktModel& model, const TrainConfig& cfg, const std::vector<data::Utterance>& train,
              const std::vector<data::Utterance>& dev, const FitOptions& options = {});

/// Training checkpoint of the model's current state.
Checkpoint make_checkpoint(CaktModel& model, const Trainer* trainer, const std::string& config_text);

/// Decode-only model holding the CTC branch of an exported checkpoint.
class InferenceModel {
 public:
  InferenceModel(const model::EncoderConfig& cfg, const Checkpoint& ckpt);

  ctc::LabelSeq decode(const Tensor& features) { return decode_features(*encoder_, features); }
  std::size_t parameter_count() { return cakt::parameter_count(encoder_->parameters()); }
  model::Encoder& encoder() { return *encoder_; }

 private:
  std::unique_ptr<model::Encoder> encoder_;
};

}  // namespace cakt::training
