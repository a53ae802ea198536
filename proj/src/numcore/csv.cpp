#include "spdl/numcore/csv.hpp"

#include <cstdio>

#include "spdl/numcore/error.hpp"

namespace spdl {

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvWriter::CsvWriter(std::ostream& os, std::initializer_list<std::string> header)
    : CsvWriter(os, std::vector<std::string>(header)) {}

CsvWriter::CsvWriter(std::ostream& os, const std::vector<std::string>& header)
    : os_(os), cols_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
  os_ << '\n';
}

void CsvWriter::row(std::initializer_list<double> values) {
  row(std::span<const double>(values.begin(), values.size()));
}

void CsvWriter::row(std::span<const double> values) {
  if (values.size() != cols_) throw ShapeError("csv: row width does not match header");
  for (std::size_t i = 0; i < values.size(); ++i) os_ << (i ? "," : "") << format_real(values[i]);
  os_ << '\n';
}

}  // namespace spdl
