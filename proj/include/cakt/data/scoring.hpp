// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cakt/data/corpus.hpp"

namespace cakt::data {

struct EditCounts {
  std::size_t subs = 0;
  std::size_t ins = 0;
  std::size_t dels = 0;

  std::size_t total() const { return subs + ins + dels; }
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

/// Unit-cost edit distance between ref and hyp. On ties the traceback
/// prefers substitution (or match), then insertion, then deletion.
EditCounts levenshtein(const ctc::LabelSeq& ref, const ctc::LabelSeq& hyp);

struct UtteranceScore {
  std::string id;
  ctc::LabelSeq ref, hyp;
  EditCounts edits;
};

struct CerReport {
  double cer = 0.0;
  std::size_t subs = 0, ins = 0, dels = 0;
  std::size_t n_ref_tokens = 0;
  std::vector<UtteranceScore> utterances;

  std::string to_json(bool with_details = true) const;
};

/// Pairs hypotheses with references by utterance id. Throws DataError for
/// an empty reference set or a reference without hypothesis.
CerReport score(const std::vector<Utterance>& refs, const std::map<std::string, ctc::LabelSeq>& hyps);

using Decoder = std::function<ctc::LabelSeq(const Utterance&)>;

/// Corpus CER = (S + I + D) / reference tokens, decoding every utterance.
CerReport cer(const std::vector<Utterance>& refs, const Decoder& decode);

}  // namespace cakt::data
