#pragma once

#include <initializer_list>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace spdl {

// printf "%.17g": 17 significant digits, enough to round-trip any double.
std::string format_real(double x);

// Comma-separated rows terminated by '\n'. Reals use format_real.
class CsvWriter {
 public:
  CsvWriter(std::ostream& os, std::initializer_list<std::string> header);
  CsvWriter(std::ostream& os, const std::vector<std::string>& header);

  void row(std::initializer_list<double> values);
  void row(std::span<const double> values);

  std::size_t columns() const noexcept { return cols_; }

 private:
  std::ostream& os_;
  std::size_t cols_;
};

}  // namespace spdl
