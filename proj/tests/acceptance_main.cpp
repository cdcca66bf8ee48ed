// SPDX-License-Identifier: Apache-2.0
// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any failure.
#include <iostream>

#include "dpsaudio/acceptance.hpp"

int main() {
  dpsaudio::AcceptanceOptions opt;
  bool ok = true;
  dpsaudio::run_acceptance(opt, [&](const dpsaudio::CriterionResult& r) {
    ok = ok && r.passed;
    std::cout << dpsaudio::format_result(r) << std::endl;
  });
  std::cout << (ok ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED") << std::endl;
  return ok ? 0 : 1;
}
