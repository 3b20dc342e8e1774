// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nfrl {

struct CheckResult {
  std::string suite;
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool upper = true;  ///< pass when measured < threshold; otherwise measured >= threshold
  bool passed = false;
};

/// jacobian, invertibility, gradients, quadrature, tabular, occupancy.
const std::vector<std::string>& check_suites();

/// Runs one suite, or every suite for "all". ConfigError on an unknown name.
std::vector<CheckResult> run_checks(const std::string& suite, bool quick, std::ostream* progress = nullptr);

void print_check_table(std::ostream& os, const std::vector<CheckResult>& results);

}  // namespace nfrl
