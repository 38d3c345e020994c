// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cakt/numerics/tape.hpp"

namespace cakt::ctc {

inline constexpr int kBlank = 0;

/// Token ids y_1..y_N, each in 1..V. Blank never appears.
using LabelSeq = std::vector<int>;

/// Minimum number of frames needed to emit labels: one per label plus one
/// blank between each pair of equal neighbours.
std::size_t required_frames(const LabelSeq& labels);
bool feasible(const LabelSeq& labels, std::size_t frames);

/// -log P(labels | log_post) by the log-space forward recursion over the
/// blank-augmented label sequence. log_post is [T, V+1] with column 0 the
/// blank. The adjoint uses the backward recursion; rows of log_post are
/// treated as free log-scores, so normalisation happens upstream.
///
/// Throws InfeasibleError (naming utterance_id) when T is too short.
Var ctc_loss(Var log_post, const LabelSeq& labels, const std::string& utterance_id = "");

/// Value-only variant of ctc_loss.
double ctc_loss_value(const Tensor& log_post, const LabelSeq& labels,
                      const std::string& utterance_id = "");

/// Exhaustive reference: sums the probability of every length-T path over
/// V+1 symbols that collapses to labels. Returns +infinity when no path
/// does. Refuses instances with more than 1e7 paths.
double ctc_oracle(const Tensor& log_post, const LabelSeq& labels);

/// Merge adjacent repeats, then drop blanks.
LabelSeq collapse(const std::vector<int>& path);

/// Per-frame argmax (lowest id wins ties), then collapse.
LabelSeq greedy_decode(const Tensor& log_post);

}  // namespace cakt::ctc
