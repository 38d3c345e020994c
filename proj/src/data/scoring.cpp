// SPDX-License-Identifier: Apache-2.0
#include "cakt/data/scoring.hpp"

#include "cakt/error.hpp"
#include "json.hpp"

namespace cakt::data {

EditCounts levenshtein(const ctc::LabelSeq& ref, const ctc::LabelSeq& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i][j - 1] + 1, d[i - 1][j] + 1});
    }
  }
  EditCounts e;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++e.subs;
      --i;
      --j;
    } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
      ++e.ins;
      --j;
    } else {
      ++e.dels;
      --i;
    }
  }
  return e;
}

std::string CerReport::to_json(bool with_details) const {
  nlohmann::json j;
  j["cer"] = cer;
  j["subs"] = subs;
  j["ins"] = ins;
  j["dels"] = dels;
  j["n_ref_tokens"] = n_ref_tokens;
  j["n_utterances"] = utterances.size();
  if (with_details) {
    auto arr = nlohmann::json::array();
    for (const auto& u : utterances) {
      arr.push_back({{"id", u.id},
                     {"ref", u.ref},
                     {"hyp", u.hyp},
                     {"subs", u.edits.subs},
                     {"ins", u.edits.ins},
                     {"dels", u.edits.dels}});
    }
    j["utterances"] = std::move(arr);
  }
  return j.dump(1);
}

CerReport score(const std::vector<Utterance>& refs, const std::map<std::string, ctc::LabelSeq>& hyps) {
  if (refs.empty()) throw DataError("cannot score an empty manifest");
  CerReport r;
  for (const auto& u : refs) {
    auto it = hyps.find(u.id);
    if (it == hyps.end()) throw DataError("no hypothesis for utterance " + u.id);
    UtteranceScore s{u.id, u.tokens, it->second, levenshtein(u.tokens, it->second)};
    r.subs += s.edits.subs;
    r.ins += s.edits.ins;
    r.dels += s.edits.dels;
    r.n_ref_tokens += u.tokens.size();
    r.utterances.push_back(std::move(s));
  }
  r.cer = static_cast<double>(r.subs + r.ins + r.dels) / static_cast<double>(r.n_ref_tokens);
  return r;
}

CerReport cer(const std::vector<Utterance>& refs, const Decoder& decode) {
  std::map<std::string, ctc::LabelSeq> hyps;
  for (const auto& u : refs) hyps[u.id] = decode(u);
  return score(refs, hyps);
}

}  // namespace cakt::data
