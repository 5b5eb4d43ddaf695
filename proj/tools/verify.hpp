// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded invariant suite behind `hclab verify`.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace hclab::verify {

struct CheckResult {
  bool pass = false;
  double worst = 0.0;   // the statistic compared against the bound
  std::string bound;    // human-readable pass condition
  std::string detail;
};

struct Property {
  std::string name;
  std::string summary;
  int default_samples;
  std::function<CheckResult(std::uint64_t seed, int samples)> run;
};

const std::vector<Property>& properties();

struct Row {
  std::string name;
  int samples = 0;
  CheckResult result;
};

// Runs the selected properties (all when `only` is empty). Throws
// std::invalid_argument for unknown names.
std::vector<Row> run_suite(const std::vector<std::string>& only, std::uint64_t seed,
                           int samples_override);

void print_table(std::ostream& out, const std::vector<Row>& rows);

}  // namespace hclab::verify
