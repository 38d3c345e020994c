// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cakt::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Forward-backward CTC loss against exhaustive path enumeration on random
/// instances with T <= 6, V <= 3, N <= 3; tolerance 1e-8.
CheckResult verify_ctc_oracle(std::size_t instances = 100, std::uint64_t seed = 1);

/// T = 2, uniform posteriors over {blank, a}, target "a": -ln 0.75 within 1e-10.
CheckResult verify_ctc_hand_case();

/// Central finite differences over every unfrozen parameter of a small CAKT
/// model (token+positional queries, right shift, lambda 0.3) on a
/// two-utterance batch; max relative error < 1e-4.
CheckResult verify_gradcheck(std::uint64_t seed = 11);

/// KT loss bounds, identical/orthogonal cases and teacher-row scale
/// invariance over random draws.
CheckResult verify_kt_properties(std::size_t draws = 1000, std::uint64_t seed = 3);

/// align_pairs against the pairing lattices for N = 1..6 and every shift.
CheckResult verify_shift_semantics();

/// Suites: ctc-oracle, gradcheck, kt-props, all.
std::vector<CheckResult> run_verify_suite(const std::string& suite);

}  // namespace cakt::cli
