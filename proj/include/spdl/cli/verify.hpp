#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace spdl::cli {

struct CheckRow {
  std::string suite;
  std::string property;
  double observed;
  double threshold;
  bool pass;
};

// gradients, invertibility, equivariance, dissipation, deeplimit, all.
const std::vector<std::string>& suite_names();

// Runs one suite ("all" runs every suite in order). Throws
// PreconditionError for an unknown name.
std::vector<CheckRow> run_suite(std::string_view name);

// CSV: suite,property,observed,threshold,status with status PASS or FAIL.
void write_report(std::ostream& os, const std::vector<CheckRow>& rows);

}  // namespace spdl::cli
